import pytest

from nftguard.disasm import disassemble
from nftguard.errors import CompilationFailed
from nftguard.ingest.compiler import compile_source

HDR = "// SPDX-License-Identifier: MIT\npragma solidity 0.8.16;\n"


def test_minimal_contract(compile_units):
    units = compile_units(HDR + "contract A { uint256 x; function f() external { x = 1; } }", "A")
    assert len(units) == 1
    unit = units[0]
    assert unit.runtime_bytecode
    assert unit.compiler_version.startswith("0.8.16")
    assert len(unit.source_map) == len(disassemble(unit.runtime_bytecode))
    # AST contains the state variable declaration
    decls = [n for n in _walk(unit.ast) if n.get("nodeType") == "VariableDeclaration"
             and n.get("stateVariable")]
    assert any(d.get("name") == "x" for d in decls)


def test_proxy_setter_shape(compile_units):
    src = HDR + """
contract Registry {
    address public proxyRegistryAddress;
    address _owner;
    function setProxyRegistryAddress(address proxyAddress) external {
        require(msg.sender == _owner);
        proxyRegistryAddress = proxyAddress;
    }
}
"""
    unit = compile_units(src, "Registry")[0]
    assert "setProxyRegistryAddress" in unit.function_ranges
    sel, off, length = unit.function_ranges["setProxyRegistryAddress"]
    assert sel is not None
    assert unit.source_text[off:off + 8] == "function"
    decls = [n.get("name") for n in _walk(unit.ast)
             if n.get("nodeType") == "VariableDeclaration" and n.get("stateVariable")]
    assert "proxyRegistryAddress" in decls


def test_syntax_error_raises(tmp_path, solc_exe):
    bad = tmp_path / "bad.sol"
    bad.write_text(HDR + "contract Broken { function f() { }")
    with pytest.raises(CompilationFailed) as exc:
        compile_source(str(bad), solc_path=solc_exe)
    assert exc.value.diagnostics


def test_abstract_base_not_emitted(compile_units):
    src = HDR + """
abstract contract Base { function g() external virtual; }
contract Impl is Base { function g() external override {} }
"""
    units = compile_units(src)
    assert [u.contract_name for u in units] == ["Impl"]


def test_function_at_resolution(compile_units):
    src = HDR + """
contract Ctx {
    uint256 n;
    function outer(uint256 v) external { n = v + inner(v); }
    function inner(uint256 v) internal pure returns (uint256) { return v * 2; }
}
"""
    unit = compile_units(src, "Ctx")[0]
    # index 0 is the dispatcher prelude: no user function
    assert unit.function_at(0) is None
    names = set()
    for idx in range(len(unit.source_map)):
        ctx = unit.function_at(idx)
        if ctx:
            names.add(ctx.name)
    assert {"outer", "inner"} <= names


def test_getter_selectors_present(compile_units):
    unit = compile_units(HDR + "contract P { uint256 public total; function f() external {} }", "P")[0]
    assert "total()" in unit.method_identifiers
    assert "f()" in unit.method_identifiers


def _walk(node):
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, dict):
            yield cur
            stack.extend(v for v in cur.values() if isinstance(v, (dict, list)))
        elif isinstance(cur, list):
            stack.extend(cur)
