"""Deterministic generator of storage-layout torture contracts.

Covers value-type packing, inheritance chains, mappings, static and dynamic
arrays, structs, and enums. Used by the slot-map differential tests: the
derived layout must match the compiler's own storageLayout on every
(slot, offset) pair.
"""

import random

VALUE_TYPES = [
    ("uint8", 1), ("uint16", 2), ("uint32", 4), ("uint64", 8),
    ("uint128", 16), ("uint256", 32), ("int64", 8), ("int256", 32),
    ("bool", 1), ("address", 20),
    ("bytes1", 1), ("bytes4", 4), ("bytes8", 8), ("bytes16", 16), ("bytes32", 32),
]

MAP_KEYS = ["uint256", "address", "bytes32", "uint8"]
MAP_VALS = ["uint256", "address", "bool", "uint128"]


def _var(rng, i, enum_used, struct_used):
    roll = rng.random()
    name = f"v{i}_{rng.choice(['data', 'owner', 'supply', 'reg', 'acc', 'cnt'])}"
    if roll < 0.45:
        t, _ = rng.choice(VALUE_TYPES)
        return f"    {t} {name};", False, False
    if roll < 0.6:
        k = rng.choice(MAP_KEYS)
        v = rng.choice(MAP_VALS)
        if rng.random() < 0.25:
            return f"    mapping({k} => mapping(address => {v})) {name};", False, False
        return f"    mapping({k} => {v}) {name};", False, False
    if roll < 0.72:
        t, _ = rng.choice(VALUE_TYPES)
        return f"    {t}[] {name};", False, False
    if roll < 0.82:
        t, _ = rng.choice(VALUE_TYPES)
        n = rng.randint(1, 9)
        return f"    {t}[{n}] {name};", False, False
    if roll < 0.88:
        return f"    string {name};", False, False
    if roll < 0.94 and enum_used:
        return f"    Shade {name};", False, False
    if struct_used:
        return f"    Pair {name};", False, False
    t, _ = rng.choice(VALUE_TYPES)
    return f"    {t} {name};", False, False


def generate_layout_contract(seed):
    """Returns (source_text, contract_name). Deterministic in seed."""
    rng = random.Random(seed)
    name = f"G{seed}"
    lines = [
        "// SPDX-License-Identifier: MIT",
        "pragma solidity 0.8.16;",
        "",
        "enum Shade { Light, Mid, Dark }",
        "",
        "struct Pair {",
        f"    {rng.choice(['uint128', 'uint64', 'uint256'])} a;",
        f"    {rng.choice(['uint128', 'address', 'bool'])} b;",
    ]
    if rng.random() < 0.5:
        lines.append("    uint256 c;")
    lines.append("}")
    lines.append("")

    use_inheritance = rng.random() < 0.5
    bases = []
    if use_inheritance:
        for b in range(rng.randint(1, 2)):
            base_name = f"Base{seed}_{b}"
            bases.append(base_name)
            lines.append(f"contract {base_name} {{")
            for i in range(rng.randint(1, 3)):
                decl, _, _ = _var(rng, 100 * (b + 1) + i, True, True)
                lines.append(decl)
            if rng.random() < 0.4:
                lines.append(f"    uint256 constant SKIP{b} = 7;")
            lines.append("}")
            lines.append("")

    header = f"contract {name}" + (f" is {', '.join(bases)}" if bases else "") + " {"
    lines.append(header)
    for i in range(rng.randint(3, 9)):
        decl, _, _ = _var(rng, i, True, True)
        lines.append(decl)
        if rng.random() < 0.15:
            lines.append(f"    uint64 constant C{i} = 3;")
    # something to deploy so the contract is not optimized away
    lines.append("    function poke() external {}")
    lines.append("}")
    return "\n".join(lines) + "\n", name
