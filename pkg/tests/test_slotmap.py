"""Slot-map derivation: spec'd layout rules plus the compiler differential."""

import pytest

from nftguard.ingest.slotmap import (
    build_keyword_index,
    derive_slot_map,
    index_keywords,
)
from oracles.contractgen import generate_layout_contract

HDR = "// SPDX-License-Identifier: MIT\npragma solidity 0.8.16;\n"


def _unit(compile_units, body, name="T"):
    src = f"{HDR}contract {name} {{\n{body}\n    function poke() external {{}}\n}}\n"
    return compile_units(src, name)[0]


def test_value_then_mapping(compile_units):
    unit = _unit(compile_units, "    uint256 a;\n    mapping(uint256 => address) b;")
    sm = derive_slot_map(unit.ast, unit.contract_name)
    assert sm.entries["a"].slot_id == 0 and sm.entries["a"].byte_offset == 0
    assert sm.entries["a"].type_kind == "value"
    assert sm.entries["b"].slot_id == 1 and sm.entries["b"].type_kind == "mapping"


def test_value_packing(compile_units):
    unit = _unit(compile_units, "    uint128 x;\n    uint128 y;\n    uint128 z;")
    sm = derive_slot_map(unit.ast, unit.contract_name)
    assert (sm.entries["x"].slot_id, sm.entries["x"].byte_offset) == (0, 0)
    assert (sm.entries["y"].slot_id, sm.entries["y"].byte_offset) == (0, 16)
    assert (sm.entries["z"].slot_id, sm.entries["z"].byte_offset) == (1, 0)


def test_no_state_variables(compile_units):
    unit = _unit(compile_units, "")
    assert len(derive_slot_map(unit.ast, unit.contract_name)) == 0


def test_constants_and_immutables_excluded(compile_units):
    unit = _unit(compile_units,
                 "    uint256 constant MAX = 100;\n"
                 "    uint256 immutable deployTime = 1;\n"
                 "    uint256 real;")
    sm = derive_slot_map(unit.ast, unit.contract_name)
    assert list(sm.entries) == ["real"]
    assert sm.entries["real"].slot_id == 0


def test_inherited_variables_precede(compile_units):
    src = f"""{HDR}
contract Root {{ uint256 a; }}
contract Mid is Root {{ uint128 b; uint64 c; }}
contract Leaf is Mid {{ uint256 d; function poke() external {{}} }}
"""
    unit = compile_units(src, "Leaf")[0]
    sm = derive_slot_map(unit.ast, unit.contract_name)
    assert sm.entries["a"].slot_id == 0
    assert (sm.entries["b"].slot_id, sm.entries["b"].byte_offset) == (1, 0)
    assert (sm.entries["c"].slot_id, sm.entries["c"].byte_offset) == (1, 16)
    assert sm.entries["d"].slot_id == 2


def test_monotone_slots_in_declaration_order(compile_units):
    unit = _unit(compile_units,
                 "    uint8 a;\n    uint256[] arr;\n    uint16 b;\n"
                 "    mapping(address => bool) m;\n    bytes s;")
    sm = derive_slot_map(unit.ast, unit.contract_name)
    order = [sm.entries[n].slot_id for n in ("a", "arr", "b", "m", "s")]
    assert order == sorted(order)


def _layout_oracle(unit):
    """The compiler's own storageLayout as {label: (slot, offset)}."""
    out = {}
    for item in (unit.storage_layout or {}).get("storage", []):
        out[item["label"]] = (int(item["slot"]), int(item["offset"]))
    return out


@pytest.mark.parametrize("seed", range(25))
def test_differential_against_compiler(compile_units, seed):
    source, name = generate_layout_contract(seed)
    unit = compile_units(source, name)[0]
    derived = derive_slot_map(unit.ast, unit.contract_name)
    oracle = _layout_oracle(unit)
    assert set(derived.entries) == set(oracle), f"variable set differs on G{seed}"
    for label, (slot, offset) in oracle.items():
        info = derived.entries[label]
        assert (info.slot_id, info.byte_offset) == (slot, offset), (
            f"{name}.{label}: derived ({info.slot_id},{info.byte_offset}), "
            f"compiler says ({slot},{offset})")


def test_keyword_index_matching(compile_units):
    unit = _unit(compile_units,
                 "    address proxyRegistryAddress;\n"
                 "    mapping(uint256 => address) _owners;\n"
                 "    mapping(address => uint256) _balances;\n"
                 "    uint256 maxSupply;\n    uint256 MAX_PER_TX;")
    sm = derive_slot_map(unit.ast, unit.contract_name)
    sets = index_keywords(sm, ["proxy", "owner", "supply", "max", "zzz"])
    assert sets["proxy"] == {sm.entries["proxyRegistryAddress"].slot_id}
    assert sets["owner"] == {sm.entries["_owners"].slot_id}
    assert sets["supply"] == {sm.entries["maxSupply"].slot_id}
    # case-insensitive substring: both maxSupply and MAX_PER_TX contain "max"
    assert sets["max"] == {sm.entries["maxSupply"].slot_id, sm.entries["MAX_PER_TX"].slot_id}
    assert sets["zzz"] == frozenset()
    # every indexed slot belongs to the slot map
    all_slots = {i.slot_id for i in sm.entries.values()}
    for s in sets.values():
        assert s <= all_slots


def test_category_index(compile_units):
    unit = _unit(compile_units,
                 "    mapping(uint256 => address) _owners;\n    uint256 totalSupply;\n"
                 "    uint256 mintLimit;")
    sm = derive_slot_map(unit.ast, unit.contract_name)
    ki = build_keyword_index(sm, {"owner": ["owner"], "supply": ["supply", "max", "limit", "total"]})
    assert ki.category("owner") == {sm.entries["_owners"].slot_id}
    assert ki.category("supply") == {
        sm.entries["totalSupply"].slot_id, sm.entries["mintLimit"].slot_id}
    assert ki.category("nothing") == frozenset()
