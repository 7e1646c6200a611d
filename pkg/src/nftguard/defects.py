"""The five detection rules, evaluated as the engine explores.

Rules fire at the instruction that exhibits the defect (the store, the
external call), against the path constraints accumulated up to that instant.
Firing eagerly instead of at path completion means a shared prefix is judged
once, and writes that happen after an external call cannot retroactively
excuse it.
"""

import logging
from dataclasses import dataclass, field

from . import RULE_VERSIONS
from .config import DEFECT_KINDS, ON_ERC721_RECEIVED_SELECTOR
from .features import (
    match_delete,
    match_external_invocation,
    match_mapping_store,
    validate_context,
)
from .sym.engine import ExplorationSink, depends_on_caller, extract_storage_addresses, infer_slot
from .sym.expr import (
    TAINT_CALLER,
    TAINT_INPUT,
    mk_const,
    mk_input,
    mk_map_addr,
    mk_op,
    mk_storage_read,
    render,
    render_addr,
    walk,
)

log = logging.getLogger(__name__)

_ADDR_MASK = (1 << 160) - 1


@dataclass
class DefectReport:
    kind: str
    contract_name: str
    function_name: str
    file: str
    offset: int
    length: int
    line: int
    evidence: dict
    rule_version: str
    path_id: int

    def to_dict(self):
        return {
            "kind": self.kind,
            "contract": self.contract_name,
            "function": self.function_name,
            "source_range": {
                "file": self.file,
                "offset": self.offset,
                "length": self.length,
                "line": self.line,
            },
            "evidence": self.evidence,
            "rule_version": self.rule_version,
            "path_id": self.path_id,
        }


@dataclass(frozen=True)
class RequirementSpec:
    """One mandated requirement E for a function role; `negate` builds the
    ¬E conjuncts from path bindings (None when the template cannot bind)."""
    role: str
    req_id: str
    description: str
    negate: object


@dataclass
class _Draft:
    kind: str
    function_name: str
    event: object
    instr_index: int
    evidence: dict
    steps: int          # path length at the firing instruction
    seq: int
    path_id: int = 0    # resolved when a completed path carries the event


def _guards(state):
    """Path conditions the contract itself imposed, without the environment
    seeds (caller/origin well-formedness); the seeds mention the caller and
    would defeat every caller-dependency test."""
    return state.cons[state.seed_count:]


def _render_cons(cons, cap=40):
    out = []
    for e, truth in cons[:cap]:
        out.append(f"{render(e)} {'!= 0' if truth else '== 0'}")
    if len(cons) > cap:
        out.append(f"... {len(cons) - cap} more")
    return out


def _contains_sread(expr):
    return any(node.kind == "sread" for node in walk(expr))


def _negate_approve_authorization(checker, state, event):
    """¬(caller is the token owner or an approved operator) at the approval
    store. The owner is bound through every ownership mapping under the
    store's key. Operator evidence is anything the path derived from the
    caller's identity: caller-keyed reads, and equality comparisons between
    a caller-derived value and stored state (the proxy-registry shortcut in
    OpenSea-style isApprovedForAll compares caller against a stored address).
    """
    caller = mk_input("caller")
    mask = mk_const(_ADDR_MASK)
    neg = []
    for slot in checker.owner_mapping_slots:
        owner_word = mk_storage_read(mk_map_addr(slot, event.addr.key))
        owner_addr = mk_op("AND", (mask, owner_word))
        neg.append((mk_op("EQ", (caller, owner_addr)), False))
    for addr in extract_storage_addresses(_guards(state)):
        if addr.caller_in_key():
            neg.append((mk_storage_read(addr), False))
    for e, _ in _guards(state):
        if e.kind != "op" or e.op not in ("EQ", "SUB", "XOR"):
            continue
        a, b = e.args
        if (TAINT_CALLER in a.taint and _contains_sread(b)) \
                or (TAINT_CALLER in b.taint and _contains_sread(a)):
            # assert the two identities differ, whichever way the path
            # compared them: EQ means equal-when-true, SUB and XOR are the
            # compiler's equal-when-zero encodings
            neg.append((e, e.op != "EQ"))
    return neg


def _negate_mint_recipient(checker, state, event):
    """¬(recipient != 0) at the ownership store: the stored owner address
    (low 160 bits of the word, the rest may be masked-in old content) can
    be the zero address."""
    recipient = mk_op("AND", (mk_const(_ADDR_MASK), event.value))
    return [(recipient, False)]


MR_CATALOG = (
    RequirementSpec(
        role="approve",
        req_id="approve-caller-authorization",
        description="caller must be the token owner or an approved operator",
        negate=_negate_approve_authorization,
    ),
    RequirementSpec(
        role="mint",
        req_id="mint-nonzero-recipient",
        description="minted token must not be assigned to the zero address",
        negate=_negate_mint_recipient,
    ),
)


class DefectChecker(ExplorationSink):
    """Engine sink that recognizes features and applies the rules."""

    def __init__(self, unit, slot_map, keyword_index, config, session):
        self.unit = unit
        self.slot_map = slot_map
        self.keyword_index = keyword_index
        self.config = config
        self.session = session
        self.solver_ms = int(config.solver_timeout_s * 1000)

        self.proxy_slots = keyword_index.category("proxy")
        self.owner_slots = keyword_index.category("owner")
        self.supply_slots = keyword_index.category("supply")
        self.owner_mapping_slots = tuple(sorted(
            self.owner_slots & slot_map.slots_of_kind("mapping")))

        self.enabled = frozenset(config.only_kinds)
        self.features = []
        self.drafts = []
        self._seq = 0

    # -- engine hooks -----------------------------------------------------------

    def on_store(self, state, event):
        ms = match_mapping_store(event)
        dl = match_delete(event, state.loads)
        if ms is not None:
            self.features.append(ms)
        if dl is not None:
            self.features.append(dl)

        slot = infer_slot(event.addr)

        if "RiskyMutableProxy" in self.enabled:
            if slot in self.proxy_slots and TAINT_INPUT in event.value.taint:
                self._draft("RiskyMutableProxy", state, event, {
                    "feature": f"store({render_addr(event.addr)})",
                    "stored_value": render(event.value),
                    "value_taint": sorted(event.value.taint),
                    "slot": slot,
                    "slot_names": sorted(self.slot_map.names_at_slot(slot)),
                })

        current = [f for f in (ms, dl) if f is not None]
        role = validate_context(state.context, current, self.keyword_index,
                                self.config.context_keywords)

        if role == "mint" and ms is not None:
            if "UnlimitedMinting" in self.enabled:
                self._check_um(state, event, ms)
            if "MissingRequirements" in self.enabled:
                self._check_mr(state, event, "mint")
        elif role == "approve" and ms is not None:
            if "MissingRequirements" in self.enabled \
                    and TAINT_INPUT in event.value.taint:
                self._check_mr(state, event, "approve")
        elif role == "burn" and dl is not None:
            if "PublicBurn" in self.enabled and slot in self.owner_slots:
                self._check_pb(state, event, dl)

    def on_call(self, state, event):
        inv = match_external_invocation(event, state.shifted)
        if inv is None:
            return
        self.features.append(inv)
        if "ERC721Reentrancy" not in self.enabled:
            return
        if inv.selector != ON_ERC721_RECEIVED_SELECTOR:
            return
        self._check_er(state, event, inv)

    def on_path_end(self, state, record):
        for draft in self.drafts:
            if draft.path_id:
                continue
            for ev in record.events:
                if ev is draft.event:
                    draft.path_id = record.path_id
                    break

    # -- the rules ---------------------------------------------------------------

    def _check_er(self, state, event, inv):
        reads = extract_storage_addresses(_guards(state))
        if any(state.storage_modified(t) for t in reads):
            return
        self._draft("ERC721Reentrancy", state, event, {
            "feature": f"external_call(selector=0x{inv.selector:08x})",
            "shifted_selector_observed": inv.shifted_selector_observed,
            "unmodified_reads": [render_addr(t) for t in reads],
            "constraints": _render_cons(_guards(state)),
        })

    def _check_um(self, state, event, ms):
        reads = extract_storage_addresses(_guards(state))
        guarded = sorted({infer_slot(t) for t in reads} & self.supply_slots)
        if guarded:
            return
        self._draft("UnlimitedMinting", state, event, {
            "feature": f"mapping_store({render_addr(event.addr)})",
            "constraint_slots": sorted(
                s for s in {infer_slot(t) for t in reads} if s is not None),
            "supply_slots": sorted(self.supply_slots),
            "constraints": _render_cons(_guards(state)),
        })

    def _check_mr(self, state, event, role):
        for spec in MR_CATALOG:
            if spec.role != role:
                continue
            neg = spec.negate(self, state, event)
            if neg is None:
                continue
            status = self.session.solve(state.cons + tuple(neg),
                                        timeout_ms=self.solver_ms)
            log.debug("MR %s at pc=%#x: %s", spec.req_id, event.pc, status)
            if status != "sat":
                continue
            self._draft("MissingRequirements", state, event, {
                "feature": f"mapping_store({render_addr(event.addr)})",
                "requirement": spec.req_id,
                "description": spec.description,
                "violation": _render_cons(tuple(neg)),
                "constraints": _render_cons(_guards(state)),
            })

    def _check_pb(self, state, event, dl):
        guards = _guards(state)
        reads = extract_storage_addresses(guards)
        if depends_on_caller(reads, guards):
            return
        self._draft("PublicBurn", state, event, {
            "feature": f"delete({render_addr(event.addr)})",
            "erased_previous": render(dl.erased_previous),
            "constraint_reads": [render_addr(t) for t in reads],
            "constraints": _render_cons(guards),
        })

    # -- report assembly -----------------------------------------------------------

    def _draft(self, kind, state, event, evidence):
        fn = state.context.name if state.context else ""
        self._seq += 1
        self.drafts.append(_Draft(
            kind=kind,
            function_name=fn,
            event=event,
            instr_index=event.instr_index,
            evidence=evidence,
            steps=state.steps,
            seq=self._seq,
        ))
        log.info("%s: %s in %s() at pc=%#x", self.unit.contract_name, kind, fn, event.pc)

    def _locate(self, draft):
        entry = None
        if draft.instr_index < len(self.unit.source_map):
            entry = self.unit.source_map[draft.instr_index]
        if entry is not None and not entry.compiler_generated and entry.file_index == 0:
            offset, length = entry.offset, entry.length
        else:
            ctx = self.unit.function_ranges.get(draft.function_name)
            offset, length = (ctx[1], ctx[2]) if ctx else (0, 0)
        return offset, length, self.unit.line_of_offset(offset)

    def aggregate(self):
        """Deduplicate drafts to one report per (kind, function), keeping the
        shortest-path witness. Output order is fixed regardless of the order
        paths were explored in."""
        best = {}
        for d in self.drafts:
            k = (d.kind, d.function_name)
            cur = best.get(k)
            if cur is None or (d.steps, d.seq) < (cur.steps, cur.seq):
                best[k] = d
        reports = []
        kind_order = {k: i for i, k in enumerate(DEFECT_KINDS)}
        for (kind, fn), d in sorted(best.items(),
                                    key=lambda kv: (kind_order[kv[0][0]], kv[0][1])):
            offset, length, line = self._locate(d)
            inner = self.unit.function_at(d.instr_index)
            evidence = dict(d.evidence)
            if inner is not None and inner.name != fn:
                evidence["inner_function"] = inner.name
            reports.append(DefectReport(
                kind=kind,
                contract_name=self.unit.contract_name,
                function_name=fn,
                file=self.unit.source_name,
                offset=offset,
                length=length,
                line=line,
                evidence=evidence,
                rule_version=RULE_VERSIONS[kind],
                path_id=d.path_id,
            ))
        return reports
