"""State-variable storage layout derived from the AST.

Slot assignment follows the compiler's documented rules: declaration order
over the C3-linearized inheritance chain (base-most first), value types
packed into shared slots while their combined width fits 32 bytes, and
mappings/dynamic arrays holding exactly one base slot. Constants and
immutables never get a slot. The compiler's own storageLayout output is
used in the tests as a differential oracle and nowhere else.
"""

import logging
import re
from dataclasses import dataclass, field

from ..errors import UnsupportedType
from .compiler import ast_node_index

log = logging.getLogger(__name__)

_ELEMENTARY_SIZES = {"bool": 1, "address": 20}


def _elementary_size(name):
    """Byte width of a value-typed elementary type, None for bytes/string."""
    if name in _ELEMENTARY_SIZES:
        return _ELEMENTARY_SIZES[name]
    if name in ("bytes", "string"):
        return None
    m = re.fullmatch(r"(u?int)(\d*)", name)
    if m:
        bits = int(m.group(2) or "256")
        return bits // 8
    m = re.fullmatch(r"bytes(\d+)", name)
    if m:
        return int(m.group(1))
    if name.startswith("address"):  # address payable
        return 20
    raise UnsupportedType(f"no layout rule for elementary type {name!r}")


@dataclass(frozen=True)
class SlotInfo:
    slot_id: int
    byte_offset: int
    type_kind: str  # value | mapping | dynamic-array | static-array | struct
    declared_type: str
    default_value: int = 0


@dataclass
class SlotMap:
    entries: dict = field(default_factory=dict)  # name -> SlotInfo

    def slots_of_kind(self, *kinds):
        return {info.slot_id for info in self.entries.values() if info.type_kind in kinds}

    def names_at_slot(self, slot_id):
        return [n for n, i in self.entries.items() if i.slot_id == slot_id]

    def __len__(self):
        return len(self.entries)


class _Layout:
    """Resolved layout of one type: either a packable value of `size` bytes
    or a slot-aligned region of `slots` whole slots."""

    __slots__ = ("kind", "size", "slots")

    def __init__(self, kind, size=None, slots=None):
        self.kind = kind
        self.size = size
        self.slots = slots

    @property
    def packable(self):
        return self.size is not None


def _resolve_type(type_name, index):
    nt = type_name.get("nodeType")
    if nt == "ElementaryTypeName":
        name = type_name.get("name", "")
        size = _elementary_size(name)
        if size is None:
            return _Layout("dynamic-array", slots=1)  # bytes/string payload is hash-addressed
        return _Layout("value", size=size)
    if nt == "Mapping":
        return _Layout("mapping", slots=1)
    if nt == "ArrayTypeName":
        base = _resolve_type(type_name["baseType"], index)
        length = _array_length(type_name)
        if length is None:
            return _Layout("dynamic-array", slots=1)
        if base.packable:
            per_slot = 32 // base.size
            return _Layout("static-array", slots=(length + per_slot - 1) // per_slot)
        return _Layout("static-array", slots=length * base.slots)
    if nt in ("UserDefinedTypeName", "IdentifierPath"):
        ref = type_name.get("referencedDeclaration")
        target = index.get(ref)
        if target is None:
            raise UnsupportedType(f"unresolved type reference {ref}")
        tnt = target.get("nodeType")
        if tnt == "ContractDefinition":
            return _Layout("value", size=20)
        if tnt == "EnumDefinition":
            members = len(target.get("members", []))
            return _Layout("value", size=1 if members <= 256 else 2)
        if tnt == "UserDefinedValueTypeDefinition":
            return _resolve_type(target["underlyingType"], index)
        if tnt == "StructDefinition":
            return _Layout("struct", slots=_struct_slots(target, index))
        raise UnsupportedType(f"no layout rule for {tnt}")
    raise UnsupportedType(f"no layout rule for AST node {nt}")


def _array_length(type_name):
    length_node = type_name.get("length")
    if length_node is None:
        return None
    value = length_node.get("value")
    if value is not None:
        try:
            return int(value, 0)
        except ValueError:
            pass
    # fall back to the canonical type string, e.g. "uint128[3]"
    ts = (type_name.get("typeDescriptions") or {}).get("typeString", "")
    m = re.search(r"\[(\d+)\]\s*$", ts)
    if m:
        return int(m.group(1))
    raise UnsupportedType(f"cannot determine static array length from {ts!r}")


def _struct_slots(struct_node, index):
    """Whole slots a struct value occupies: members packed like contract vars."""
    slot = 0
    offset = 0
    for member in struct_node.get("members", []):
        layout = _resolve_type(member["typeName"], index)
        slot, offset, _, _ = _place(layout, slot, offset)
    return slot + (1 if offset else 0)


def _place(layout, slot, offset):
    """Place one variable; returns (next_slot, next_offset, placed_slot, placed_offset)."""
    if layout.packable:
        if offset + layout.size > 32:
            slot += 1
            offset = 0
        placed = (slot, offset)
        offset += layout.size
        if offset == 32:
            slot += 1
            offset = 0
        return slot, offset, placed[0], placed[1]
    if offset:
        slot += 1
        offset = 0
    placed = (slot, 0)
    return slot + layout.slots, 0, placed[0], placed[1]


def linearized_contracts(ast, contract_name):
    """The inheritance chain of contract_name, base-most first."""
    index = ast_node_index(ast)
    target = None
    for node in ast.get("nodes", []):
        if node.get("nodeType") == "ContractDefinition" and node.get("name") == contract_name:
            target = node
            break
    if target is None:
        raise UnsupportedType(f"contract {contract_name!r} not in AST")
    linear = target.get("linearizedBaseContracts")
    if not linear:
        raise UnsupportedType(f"AST lacks linearized base contracts for {contract_name!r}")
    chain = []
    for cid in reversed(linear):  # linearization is most-derived-first
        node = index.get(cid)
        if node is None:
            raise UnsupportedType(f"linearized base id {cid} unresolved")
        chain.append(node)
    return chain, index


def derive_slot_map(ast, contract_name):
    """Slot/offset table for every non-constant state variable of the contract."""
    chain, index = linearized_contracts(ast, contract_name)
    entries = {}
    slot = 0
    offset = 0
    for contract in chain:
        for node in contract.get("nodes", []):
            if node.get("nodeType") != "VariableDeclaration":
                continue
            if not node.get("stateVariable"):
                continue
            if node.get("constant") or node.get("mutability") == "immutable":
                continue  # no slot: the value is embedded in the bytecode
            layout = _resolve_type(node["typeName"], index)
            slot, offset, at_slot, at_off = _place(layout, slot, offset)
            kind = "value" if layout.packable else layout.kind
            name = node.get("name", "")
            key = name if name not in entries else f"{contract.get('name')}.{name}"
            entries[key] = SlotInfo(
                slot_id=at_slot,
                byte_offset=at_off,
                type_kind=kind,
                declared_type=(node.get("typeDescriptions") or {}).get("typeString", ""),
            )
    return SlotMap(entries)


@dataclass
class KeywordIndex:
    sets: dict  # keyword -> frozenset(slot ids)
    keyword_config: dict  # category -> [keywords]

    def category(self, name):
        """I_k for a rule category: union over the category's keyword sets."""
        out = set()
        for kw in self.keyword_config.get(name, ()):
            out |= self.sets.get(kw, frozenset())
        return frozenset(out)


def index_keywords(slot_map, keywords):
    """I_k per keyword: slots of variables whose lowercased name contains k."""
    sets = {}
    for kw in keywords:
        kw_l = kw.lower()
        hits = {
            info.slot_id
            for name, info in slot_map.entries.items()
            if kw_l in name.lower()
        }
        sets[kw] = frozenset(hits)
    return sets


def build_keyword_index(slot_map, keyword_config):
    """KeywordIndex over the rule categories (proxy/owner/supply)."""
    all_keywords = sorted({kw for kws in keyword_config.values() for kw in kws})
    sets = index_keywords(slot_map, all_keywords)
    return KeywordIndex(sets=sets, keyword_config={k: list(v) for k, v in keyword_config.items()})
