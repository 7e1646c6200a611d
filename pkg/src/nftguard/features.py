"""Operational feature recognition over the exploration event stream.

Three features matter to the rules: stores through mapping slots, erasing
stores (delete and its indistinguishable zero-assignment twin), and external
calls with a recognizable selector. A function context is then validated
against them, because a name like "mint" means nothing without the behavior.
"""

import logging
from dataclasses import dataclass

from .config import ERC721_SELECTORS
from .sym.expr import ZERO, substitute

log = logging.getLogger(__name__)

_APPROVE_SELECTOR = ERC721_SELECTORS["approve(address,uint256)"]
_TRANSFER_SELECTORS = frozenset(
    sel for sig, sel in ERC721_SELECTORS.items() if "ransfer" in sig
)
_TRANSFER_NAMES = frozenset({"transfer", "transferfrom", "safetransferfrom"})


@dataclass(frozen=True)
class MappingStoreFeature:
    address: object          # StorageAddr, kind "map"
    stored_value: object
    base_slot: int
    key: object
    pc: int
    instr_index: int


@dataclass(frozen=True)
class DeleteFeature:
    address: object
    erased_previous: object  # what the slot held before the erase
    pc: int
    instr_index: int


@dataclass(frozen=True)
class ExternalInvocationFeature:
    call_event: object
    selector: int
    shifted_selector_observed: bool
    pc: int
    instr_index: int


def match_mapping_store(store_event):
    """Feature iff the store lands on a recognized mapping element. The
    MSTORE/MSTORE/KECCAK256 pattern was already folded into the address."""
    addr = store_event.addr
    if addr.kind != "map":
        return None
    return MappingStoreFeature(
        address=addr,
        stored_value=store_event.value,
        base_slot=addr.slot,
        key=addr.key,
        pc=store_event.pc,
        instr_index=store_event.instr_index,
    )


def erases_previous(value, previous):
    """True iff the stored word is the erased form of `previous`.

    A whole-slot delete stores a literal zero. For members narrower than a
    slot the compiler instead re-stores the old word masked down, so the test
    is: does `value` fold to zero once the previous word is replaced by zero?
    A packed write of a genuinely new payload keeps its payload bits and
    fails the fold.
    """
    if value.is_const(0):
        return True
    if previous.kind == "const":
        return False
    return substitute(value, {previous.uid: ZERO}).is_const(0)


def match_delete(store_event, loaded_addr_uids=None):
    """Feature iff the store erases what the address held.

    Mapping elements and array elements qualify directly; a plain concrete
    slot only qualifies when the path read it first (erasure implies
    something was there). Opaque addresses never qualify.
    """
    addr = store_event.addr
    if addr.kind == "opaque":
        return None
    if addr.kind == "slot":
        if loaded_addr_uids is None or addr.uid not in loaded_addr_uids:
            return None
    if not erases_previous(store_event.value, store_event.previous):
        return None
    return DeleteFeature(
        address=addr,
        erased_previous=store_event.previous,
        pc=store_event.pc,
        instr_index=store_event.instr_index,
    )


def match_external_invocation(call_event, shifted_observed=frozenset()):
    """Feature iff the 4 selector bytes at the call's argument offset were
    concrete in memory. `shifted_observed` is the set of 4-byte values the
    path built via SHL/PUSH-left-shifted constants; membership marks the
    classic `selector << 224` calldata construction as extra evidence."""
    sel = call_event.resolved_selector
    if sel is None:
        return None
    return ExternalInvocationFeature(
        call_event=call_event,
        selector=sel,
        shifted_selector_observed=sel in shifted_observed,
        pc=call_event.pc,
        instr_index=call_event.instr_index,
    )


def _name_matches(name, keywords):
    return any(kw in name for kw in keywords)


def validate_context(context, features_on_path, keyword_index, context_keywords):
    """Validated role of a function: mint, burn, approve, transfer or other.

    approve/transfer are recognized by the standard ERC-721 selectors (or the
    standard names, for internal helpers). mint and burn require both the
    name signal and the behavioral signal: an ownership-mapping store with a
    non-erasing non-zero value, respectively a delete on an ownership slot.
    Name alone never validates.
    """
    if context is None:
        return "other"
    name = (context.name or "").lower()
    selector = context.selector

    if selector == _APPROVE_SELECTOR or name == "approve":
        return "approve"
    if selector in _TRANSFER_SELECTORS or name in _TRANSFER_NAMES:
        return "transfer"

    owner_slots = keyword_index.category("owner")
    # a masked erase shows up as both a mapping store and a delete at the
    # same instruction; such stores must not count as ownership assignment
    erases = {(f.address.uid, f.instr_index)
              for f in features_on_path if isinstance(f, DeleteFeature)}

    if _name_matches(name, context_keywords.get("mint", ())):
        for f in features_on_path:
            if not isinstance(f, MappingStoreFeature):
                continue
            if f.base_slot not in owner_slots:
                continue
            if f.stored_value.is_const(0) or (f.address.uid, f.instr_index) in erases:
                continue
            return "mint"

    if _name_matches(name, context_keywords.get("burn", ())):
        for f in features_on_path:
            if isinstance(f, DeleteFeature) and f.address.base_slot() in owner_slots:
                return "burn"

    return "other"
