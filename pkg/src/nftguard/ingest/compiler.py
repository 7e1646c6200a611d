"""Drives the external Solidity compiler and bundles its outputs.

One process invocation per source file requests runtime bytecode, runtime
source map, method identifiers, storage layout, and the AST together
(standard-JSON). The storage layout is carried on the unit strictly as a
test oracle for the slot-map derivation; nothing in the analyzer reads it.

Works against both the native `solc` binary and the emscripten `solcjs`
wrapper (the latter prints a stray notice line before the JSON body).
"""

import json
import logging
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field

from ..errors import CompilerNotFound, CompilationFailed, VersionMismatch
from .. import disasm
from .srcmap import decode_source_map, segment_count, SourceMapEntry, GENERATED_ENTRY

log = logging.getLogger(__name__)

_version_cache = {}


def find_solc(explicit=None):
    """Resolve the compiler executable: explicit path, NFTG_SOLC, then PATH."""
    candidates = []
    if explicit:
        candidates.append(explicit)
    env = os.environ.get("NFTG_SOLC")
    if env:
        candidates.append(env)
    for name in ("solc", "solcjs"):
        found = shutil.which(name)
        if found:
            candidates.append(found)
    for cand in candidates:
        resolved = shutil.which(cand) or (cand if os.path.exists(cand) else None)
        if resolved:
            return resolved
    raise CompilerNotFound(
        "no Solidity compiler found; pass --solc or set NFTG_SOLC")


def compiler_version_of(exe):
    if exe not in _version_cache:
        try:
            out = subprocess.run([exe, "--version"], capture_output=True, text=True,
                                 timeout=60).stdout
        except OSError as exc:
            raise CompilerNotFound(f"cannot run {exe}: {exc}") from exc
        version = ""
        for token in out.replace("+", " ").split():
            if token.count(".") == 2 and token[0].isdigit():
                version = token
                break
        _version_cache[exe] = version
    return _version_cache[exe]


@dataclass(frozen=True)
class FunctionContext:
    name: str
    selector: int | None
    offset: int
    length: int

    @property
    def source_range(self):
        return (self.offset, self.length)


@dataclass
class CompilationUnit:
    contract_name: str
    compiler_version: str
    runtime_bytecode: bytes
    source_map: list  # one SourceMapEntry per decoded instruction
    ast: dict
    source_text: str
    source_name: str
    function_ranges: dict  # name -> (selector, offset, length)
    functions: list = field(default_factory=list)  # FunctionContext, range-queryable
    method_identifiers: dict = field(default_factory=dict)  # signature -> selector int
    storage_layout: dict | None = None  # compiler's own layout: TEST ORACLE ONLY
    contract_node: dict | None = None

    def function_at(self, instruction_index):
        """Context(f): the innermost function whose source range contains the
        instruction's mapped range. None for dispatcher/compiler-generated code."""
        if instruction_index >= len(self.source_map):
            return None
        entry = self.source_map[instruction_index]
        if entry.compiler_generated:
            return None
        best = None
        for fn in self.functions:
            if fn.offset <= entry.offset and entry.offset + entry.length <= fn.offset + fn.length:
                if best is None or fn.length < best.length:
                    best = fn
        return best

    def line_of_offset(self, offset):
        return self.source_text.count("\n", 0, min(offset, len(self.source_text))) + 1


def _standard_json_input(source_name, source_text):
    return {
        "language": "Solidity",
        "sources": {source_name: {"content": source_text}},
        "settings": {
            "optimizer": {"enabled": False},
            "outputSelection": {
                "*": {
                    "*": [
                        "evm.deployedBytecode.object",
                        "evm.deployedBytecode.sourceMap",
                        "evm.methodIdentifiers",
                        "storageLayout",
                    ],
                    "": ["ast"],
                },
            },
        },
    }


def _run_compiler(exe, request):
    # stdout must go to a real file: the emscripten wrapper exits before its
    # piped (async) writes drain, truncating large outputs at 64 KiB
    with tempfile.TemporaryFile("w+") as out:
        proc = subprocess.run(
            [exe, "--standard-json"],
            input=json.dumps(request),
            stdout=out,
            stderr=subprocess.PIPE,
            text=True,
            timeout=300,
        )
        out.seek(0)
        raw = out.read()
    brace = raw.find("{")
    if brace < 0:
        raise CompilationFailed(
            f"compiler produced no JSON (exit {proc.returncode})",
            [raw.strip() or proc.stderr.strip()])
    try:
        return json.loads(raw[brace:])
    except json.JSONDecodeError as exc:
        raise CompilationFailed(f"compiler emitted malformed JSON: {exc}",
                                [raw[:200]]) from exc


def compile_source(source_path, solc_version="0.8.16", contract_filter=None, solc_path=None):
    """Compile one file; returns a CompilationUnit per deployable contract."""
    exe = find_solc(solc_path)
    found_version = compiler_version_of(exe)
    if solc_version and found_version and not found_version.startswith(solc_version):
        raise VersionMismatch(
            f"{exe} is {found_version}, requested {solc_version}")

    with open(source_path, "r") as fh:
        source_text = fh.read()
    source_name = os.path.basename(source_path)

    output = _run_compiler(exe, _standard_json_input(source_name, source_text))

    errors = [e for e in output.get("errors", []) if e.get("severity") == "error"]
    if errors:
        messages = [e.get("formattedMessage") or e.get("message", "") for e in errors]
        if any("requires different compiler version" in m for m in messages):
            raise VersionMismatch(messages[0])
        raise CompilationFailed(f"{len(errors)} compiler error(s)", messages)

    ast = output.get("sources", {}).get(source_name, {}).get("ast")
    if ast is None:
        raise CompilationFailed("compiler output lacks AST", [])

    units = []
    contracts = output.get("contracts", {}).get(source_name, {})
    for name, data in sorted(contracts.items()):
        if contract_filter and name != contract_filter:
            continue
        deployed = data.get("evm", {}).get("deployedBytecode", {}) or {}
        code_hex = deployed.get("object") or ""
        if not code_hex:
            continue  # abstract or interface: nothing to analyze
        bytecode = bytes.fromhex(code_hex)
        instructions = disasm.disassemble(bytecode)
        raw_map = deployed.get("sourceMap") or ""
        covered = segment_count(raw_map)
        if covered > len(instructions):
            raise CompilationFailed(
                f"{name}: source map covers {covered} instructions, "
                f"decoded only {len(instructions)}", [])
        entries = decode_source_map(raw_map, covered)
        # solc's runtime source map stops before the metadata trailer (and the
        # INVALID separator); pad the tail with compiler-generated entries so
        # there is exactly one entry per decoded instruction.
        entries = entries + [GENERATED_ENTRY] * (len(instructions) - covered)

        methods = {
            sig: int(sel, 16)
            for sig, sel in (data.get("evm", {}).get("methodIdentifiers") or {}).items()
        }
        contract_node = _find_contract_node(ast, name)
        functions = _collect_functions(ast, contract_node, methods)
        function_ranges = {}
        for fn in functions:
            function_ranges.setdefault(fn.name, (fn.selector, fn.offset, fn.length))

        units.append(CompilationUnit(
            contract_name=name,
            compiler_version=found_version or solc_version,
            runtime_bytecode=bytecode,
            source_map=entries,
            ast=ast,
            source_text=source_text,
            source_name=source_name,
            function_ranges=function_ranges,
            functions=functions,
            method_identifiers=methods,
            storage_layout=data.get("storageLayout"),
            contract_node=contract_node,
        ))
    if contract_filter and not units:
        raise CompilationFailed(f"no deployable contract named {contract_filter}", [])
    return units


def _src_triplet(node):
    parts = (node.get("src") or "0:0:0").split(":")
    return int(parts[0]), int(parts[1])


def _iter_nodes(root):
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, dict):
            yield node
            stack.extend(v for v in node.values() if isinstance(v, (dict, list)))
        elif isinstance(node, list):
            stack.extend(node)


def ast_node_index(ast):
    """id -> node table for referencedDeclaration lookups."""
    index = {}
    for node in _iter_nodes(ast):
        node_id = node.get("id")
        if isinstance(node_id, int) and "nodeType" in node:
            index[node_id] = node
    return index


def _find_contract_node(ast, name):
    for node in ast.get("nodes", []):
        if node.get("nodeType") == "ContractDefinition" and node.get("name") == name:
            return node
    return None


def _collect_functions(ast, contract_node, methods):
    """Every implemented function in the file, selector attached when public.

    The whole file is walked (not just the target contract) because inherited
    and free functions contribute code ranges the source map points into.
    """
    sel_by_name = {}
    for sig, sel in methods.items():
        sel_by_name.setdefault(sig.split("(")[0], sel)
    out = []
    for node in _iter_nodes(ast):
        if node.get("nodeType") != "FunctionDefinition":
            continue
        if not node.get("body"):
            continue
        kind = node.get("kind", "function")
        if kind == "constructor":
            continue  # creation code is not analyzed
        name = node.get("name") or kind
        selector = None
        raw_sel = node.get("functionSelector")
        if raw_sel:
            selector = int(raw_sel, 16)
        elif name in sel_by_name and node.get("visibility") in ("public", "external"):
            selector = sel_by_name[name]
        offset, length = _src_triplet(node)
        out.append(FunctionContext(name, selector, offset, length))
    out.sort(key=lambda f: (f.offset, f.length))
    return out
