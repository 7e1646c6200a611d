"""The symbolic EVM.

Exploration is depth-first per function selector: each public/external
function gets a fresh machine state whose selector read folds to that
selector, so the dispatcher runs concretely and only real guards fork
paths. A fork happens at a JUMPI whose condition stays symbolic; both
branches are solver-pruned (an unknown keeps the branch). Bounds:

 - depth counts fork decisions, not blocks, so concrete loops unroll
   freely under the step/wall budgets;
 - the loop bound caps forked entries into the same block on one path,
   which is what stops symbolic loops;
 - a per-path step ceiling and a per-contract wall deadline backstop
   everything else.

The engine is rule-agnostic: it emits trace events into the state and
notifies an ExplorationSink at stores, calls and path ends. Defect rules
live behind that interface.
"""

import logging
import time
from dataclasses import dataclass, field

from ..disasm import disassemble, jumpdest_set
from ..ingest.compiler import FunctionContext
from .expr import (
    ZERO, classify_address, mk_const, mk_input, mk_keccak, mk_op,
    storage_reads, walk,
)
from .machine import CallEvent, LoadEvent, MachineState, MemoryEvent, StackEvent, StoreEvent
from .memory import Memory, MemoryExtent
from .solver import SmtSession

log = logging.getLogger(__name__)

HALTS = ("stop", "return", "revert", "invalid", "selfdestruct")

MAX_PATH_RECORDS = 20000


# ---------------------------------------------------------------------------
# rule-facing helper functions

def extract_storage_addresses(cons):
    """Function e: every storage address read anywhere in the constraints."""
    return storage_reads([e for e, _ in cons])


def infer_slot(addr):
    """Function i: the base slot id, or None for opaque addresses."""
    return addr.base_slot()


def depends_on_caller(addrs, cons):
    """True iff any constraint contains a caller-derived leaf, or any of the
    given addresses is keyed by a caller-derived expression."""
    for addr in addrs:
        if addr.caller_in_key():
            return True
    for e, _ in cons:
        for node in walk(e):
            if node.kind == "input" and node.origin == "caller":
                return True
    return False


class ExplorationSink:
    """Hook points the engine drives. The default implementation ignores
    everything; the defect checker implements them."""

    def on_store(self, state, event):
        pass

    def on_call(self, state, event):
        pass

    def on_path_end(self, state, record):
        pass


@dataclass
class PathRecord:
    path_id: int
    selector: int | None
    entry: str
    status: str
    depth: int
    steps: int
    cons: tuple
    events: list


@dataclass
class AnalysisOutcome:
    contract_name: str
    status: str = "complete"          # complete | partial
    paths: list = field(default_factory=list)
    end_counts: dict = field(default_factory=dict)
    kill_counts: dict = field(default_factory=dict)
    selectors: list = field(default_factory=list)
    steps_total: int = 0
    visited_pcs: int = 0
    wall_s: float = 0.0
    solver_stats: dict = field(default_factory=dict)
    features: list = field(default_factory=list)

    def paths_for(self, entry_name):
        return [p for p in self.paths if p.entry == entry_name]


_ENV_SYMBOLS = {
    "CALLER": "caller",
    "ORIGIN": "origin",
    "ADDRESS": "address",
    "CALLVALUE": "callvalue",
    "TIMESTAMP": "timestamp",
    "NUMBER": "number",
    "GASPRICE": "gasprice",
    "CHAINID": "chainid",
    "BASEFEE": "basefee",
    "COINBASE": "coinbase",
    "GASLIMIT": "gaslimit",
    "PREVRANDAO": "prevrandao",
}

_KEYED_SYMBOLS = {
    "BALANCE": "balance",
    "EXTCODESIZE": "extcodesize",
    "EXTCODEHASH": "extcodehash",
    "BLOCKHASH": "blockhash",
}

_BIN_OPS = frozenset([
    "ADD", "MUL", "SUB", "DIV", "SDIV", "MOD", "SMOD", "EXP", "SIGNEXTEND",
    "LT", "GT", "SLT", "SGT", "EQ", "AND", "OR", "XOR", "BYTE", "SHL", "SHR", "SAR",
])

_SELECTOR_SHIFT = 1 << 224


class Engine:
    def __init__(self, unit, slot_map, keyword_index, config, session=None, sink=None):
        self.unit = unit
        self.slot_map = slot_map
        self.keyword_index = keyword_index
        self.config = config
        self.session = session or SmtSession(config.resolved_smt(), config.solver_timeout_s)
        self.sink = sink or ExplorationSink()
        self.code = unit.runtime_bytecode
        self.instructions = disassemble(self.code)
        self.by_pc = {ins.pc: ins for ins in self.instructions}
        self.index_of = {ins.pc: i for i, ins in enumerate(self.instructions)}
        self.jumpdests = jumpdest_set(self.instructions)
        self._abort_cache = {}
        self.provenance = {}          # concrete digest -> hash image
        self.cd0 = mk_input("calldata", 0)
        self.solver_ms = int(config.solver_timeout_s * 1000)

        self.paths = []
        self.end_counts = {}
        self.kill_counts = {}
        self.visited = set()
        self.steps_total = 0
        self.path_counter = 0
        self.timed_out = False

    # -- public entry ---------------------------------------------------------

    def run(self):
        t0 = time.monotonic()
        deadline = t0 + self.config.timeout_s
        explored = []
        for sig, selector in sorted(self.unit.method_identifiers.items(),
                                    key=lambda kv: (kv[1], kv[0])):
            if time.monotonic() >= deadline:
                self.timed_out = True
                break
            explored.append((sig, selector))
            self._explore(sig, selector, deadline)
        outcome = AnalysisOutcome(
            contract_name=self.unit.contract_name,
            status="partial" if self.timed_out else "complete",
            paths=self.paths,
            end_counts=dict(self.end_counts),
            kill_counts=dict(self.kill_counts),
            selectors=explored,
            steps_total=self.steps_total,
            visited_pcs=len(self.visited),
            wall_s=time.monotonic() - t0,
            solver_stats=dict(self.session.stats),
            features=list(getattr(self.sink, "features", ())),
        )
        log.info("%s: %d paths (%s), %d steps, %.1fs",
                 self.unit.contract_name, self.path_counter, outcome.status,
                 self.steps_total, outcome.wall_s)
        return outcome

    # -- exploration driver -----------------------------------------------------

    def _explore(self, sig, selector, deadline):
        worklist = [self._seed(sig, selector)]
        while worklist:
            state = worklist.pop()
            while True:
                if state.steps % 1024 == 0 and time.monotonic() >= deadline:
                    self.timed_out = True
                    self._bump(self.kill_counts, "deadline", 1 + len(worklist))
                    worklist.clear()
                    return
                instr = self.by_pc.get(state.pc)
                if instr is None:
                    if state.pc >= len(self.code):
                        self._end_path(state, "stop")
                    else:
                        self._kill(state, "bad_jump")
                    break
                successors = self.step(state, instr)
                if not successors:
                    break
                if len(successors) == 1:
                    state = successors[0]
                    continue
                worklist.extend(reversed(successors))
                break

    def _seed(self, sig, selector):
        state = MachineState(Memory())
        caller = mk_input("caller")
        origin = mk_input("origin")
        self_addr = mk_input("address")
        cds = mk_input("calldatasize")
        addr_cap = mk_const(1 << 160)
        state.cons = (
            (mk_op("LT", (cds, mk_const(4))), False),
            (mk_op("LT", (caller, addr_cap)), True),
            (caller, True),
            (mk_op("LT", (origin, addr_cap)), True),
            (origin, True),
            (mk_op("LT", (self_addr, addr_cap)), True),
        )
        state.seed_count = len(state.cons)
        state.selector = selector
        state.context = self._context_for(sig, selector)
        return state

    def _context_for(self, sig, selector):
        for fn in self.unit.functions:
            if fn.selector == selector:
                return fn
        # public state variable getters and the like: synthesize from the ABI
        return FunctionContext(name=sig.split("(", 1)[0], selector=selector,
                               offset=0, length=0)

    # -- path lifecycle -----------------------------------------------------------

    def _end_path(self, state, status):
        self.path_counter += 1
        self._bump(self.end_counts, status, 1)
        record = PathRecord(
            path_id=self.path_counter,
            selector=state.selector,
            entry=state.context.name if state.context else "",
            status=status,
            depth=state.depth,
            steps=state.steps,
            cons=state.cons,
            events=state.event_list(),
        )
        if len(self.paths) < MAX_PATH_RECORDS:
            self.paths.append(record)
        self.sink.on_path_end(state, record)
        return []

    def _kill(self, state, reason):
        self._bump(self.kill_counts, reason, 1)
        return []

    @staticmethod
    def _bump(table, key, n):
        table[key] = table.get(key, 0) + n

    # -- solver-backed helpers ---------------------------------------------------

    def _concretize(self, state, expr, purpose):
        """A concrete value for expr, binding it into cons. None if the solver
        cannot produce one (the caller kills the path)."""
        if expr.kind == "const":
            return expr.val
        values = self.session.models(state.cons, expr, limit=1,
                                     timeout_ms=self.solver_ms)
        if not values:
            log.debug("could not concretize %s operand at pc %#x", purpose, state.pc)
            return None
        state.add_constraint(mk_op("EQ", (expr, mk_const(values[0]))), True)
        return values[0]

    @staticmethod
    def _normalize_cond(cond, truth):
        while cond.kind == "op" and cond.op == "ISZERO":
            cond = cond.args[0]
            truth = not truth
        return cond, truth

    # -- instruction semantics -----------------------------------------------------

    def step(self, state, instr):
        """Execute one instruction; returns successor states (usually the
        same object mutated). Empty means the path ended here."""
        state.steps += 1
        self.steps_total += 1
        self.visited.add(instr.pc)
        if state.steps > self.config.max_steps_per_path:
            return self._kill(state, "steps")
        op = instr.mnemonic
        stack = state.stack
        next_pc = instr.pc + 1 + instr.raw_len
        try:
            return self._dispatch(state, instr, op, stack, next_pc)
        except IndexError:
            return self._kill(state, "stack_underflow")
        except MemoryExtent:
            return self._kill(state, "memory_extent")

    def _dispatch(self, state, instr, op, stack, next_pc):
        idx = instr.source_index

        if instr.push_payload is not None or op == "PUSH0":
            stack.append(mk_const(instr.push_value or 0))
            if len(stack) > 1024:
                return self._kill(state, "stack_overflow")
            state.pc = next_pc
            return [state]

        if op.startswith("DUP"):
            n = int(op[3:])
            if len(stack) < n:
                return self._kill(state, "stack_underflow")
            stack.append(stack[-n])
            if len(stack) > 1024:
                return self._kill(state, "stack_overflow")
            state.pc = next_pc
            return [state]

        if op.startswith("SWAP"):
            n = int(op[4:])
            if len(stack) < n + 1:
                return self._kill(state, "stack_underflow")
            stack[-1], stack[-n - 1] = stack[-n - 1], stack[-1]
            state.pc = next_pc
            return [state]

        if op in _BIN_OPS:
            a = stack.pop()
            b = stack.pop()
            result = self._alu2(state, op, a, b)
            if self.config.trace_level >= 1:
                state.add_event(StackEvent(instr.pc, idx, op, (a, b)))
            stack.append(result)
            state.pc = next_pc
            return [state]

        if op in ("ISZERO", "NOT"):
            a = stack.pop()
            stack.append(mk_op(op, (a,)))
            state.pc = next_pc
            return [state]

        if op in ("ADDMOD", "MULMOD"):
            a, b, m = stack.pop(), stack.pop(), stack.pop()
            stack.append(mk_op(op, (a, b, m)))
            state.pc = next_pc
            return [state]

        if op == "POP":
            stack.pop()
            state.pc = next_pc
            return [state]

        if op == "JUMPDEST":
            state.pc = next_pc
            return [state]

        if op == "JUMP":
            return self._jump(state, stack.pop())

        if op == "JUMPI":
            return self._jumpi(state, stack.pop(), stack.pop(), next_pc)

        if op in _ENV_SYMBOLS:
            stack.append(mk_input(_ENV_SYMBOLS[op]))
            state.pc = next_pc
            return [state]

        if op in _KEYED_SYMBOLS:
            key = stack.pop()
            stack.append(mk_input(_KEYED_SYMBOLS[op], key))
            state.pc = next_pc
            return [state]

        if op == "SELFBALANCE":
            stack.append(mk_input("balance", mk_input("address")))
            state.pc = next_pc
            return [state]

        if op == "GAS":
            stack.append(mk_input("gas", state.steps))
            state.pc = next_pc
            return [state]

        if op == "PC":
            stack.append(mk_const(instr.pc))
            state.pc = next_pc
            return [state]

        if op == "MSIZE":
            stack.append(mk_const(state.mem.msize()))
            state.pc = next_pc
            return [state]

        if op == "CODESIZE":
            stack.append(mk_const(len(self.code)))
            state.pc = next_pc
            return [state]

        if op == "CALLDATASIZE":
            stack.append(mk_input("calldatasize"))
            state.pc = next_pc
            return [state]

        if op == "CALLDATALOAD":
            off = stack.pop()
            stack.append(mk_input("calldata", off.val if off.kind == "const" else off))
            state.pc = next_pc
            return [state]

        if op == "RETURNDATASIZE":
            if state.call_count == 0:
                stack.append(ZERO)
            else:
                stack.append(mk_input("returndata", ("size", state.call_count)))
            state.pc = next_pc
            return [state]

        if op == "MLOAD":
            off = self._concretize(state, stack.pop(), "mload")
            if off is None:
                return self._kill(state, "concretize")
            value = state.mem.load_word(off)
            if self.config.trace_level >= 1:
                state.add_event(MemoryEvent(instr.pc, idx, "load", off, value))
            stack.append(value)
            state.pc = next_pc
            return [state]

        if op in ("MSTORE", "MSTORE8"):
            off = self._concretize(state, stack.pop(), "mstore")
            if off is None:
                return self._kill(state, "concretize")
            value = stack.pop()
            if op == "MSTORE":
                if (value.kind == "const" and value.val
                        and value.val % _SELECTOR_SHIFT == 0):
                    state.shifted.add(value.val // _SELECTOR_SHIFT)
                state.mem.store_word(off, value)
            else:
                state.mem.store_byte(off, value)
            if self.config.trace_level >= 1:
                state.add_event(MemoryEvent(instr.pc, idx, "store", off, value))
            state.pc = next_pc
            return [state]

        if op in ("CALLDATACOPY", "CODECOPY", "RETURNDATACOPY"):
            return self._copy(state, op, next_pc)

        if op == "EXTCODECOPY":
            stack.pop()  # address
            dest = self._concretize(state, stack.pop(), "extcodecopy")
            stack.pop()  # code offset
            n = self._concretize(state, stack.pop(), "extcodecopy")
            if dest is None or n is None:
                return self._kill(state, "concretize")
            self._havoc_range(state, dest, n, "extcode")
            state.pc = next_pc
            return [state]

        if op == "KECCAK256":
            off_e, len_e = stack.pop(), stack.pop()
            if len_e.kind != "const":
                return self._kill(state, "sha3_symbolic_length")
            n = len_e.val
            off = self._concretize(state, off_e, "keccak")
            if off is None:
                return self._kill(state, "concretize")
            words = state.mem.load_words(off, n) if n else ()
            stack.append(mk_keccak(n, words, self.provenance))
            state.pc = next_pc
            return [state]

        if op == "SLOAD":
            addr = classify_address(stack.pop(), self.provenance)
            state.loads[addr.uid] = addr
            state.add_event(LoadEvent(instr.pc, idx, addr))
            stack.append(state.storage_value(addr))
            state.pc = next_pc
            return [state]

        if op == "SSTORE":
            addr = classify_address(stack.pop(), self.provenance)
            value = stack.pop()
            previous = state.storage_value(addr)
            state.storage[addr.uid] = (addr, value)
            event = StoreEvent(instr.pc, idx, addr, value, previous)
            state.add_event(event)
            self.sink.on_store(state, event)
            state.pc = next_pc
            return [state]

        if op in ("CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"):
            return self._call(state, instr, op, next_pc)

        if op in ("CREATE", "CREATE2"):
            for _ in range(3 if op == "CREATE" else 4):
                stack.pop()
            state.call_count += 1
            stack.append(mk_input("returndata", ("create", state.call_count)))
            state.pc = next_pc
            return [state]

        if op.startswith("LOG"):
            for _ in range(2 + int(op[3:])):
                stack.pop()
            state.pc = next_pc
            return [state]

        if op == "STOP":
            return self._end_path(state, "stop")
        if op == "RETURN":
            stack.pop(), stack.pop()
            return self._end_path(state, "return")
        if op == "REVERT":
            stack.pop(), stack.pop()
            return self._end_path(state, "revert")
        if op == "INVALID":
            return self._end_path(state, "invalid")
        if op == "SELFDESTRUCT":
            stack.pop()
            return self._end_path(state, "selfdestruct")

        log.debug("unhandled opcode %s at pc %#x", op, instr.pc)
        return self._kill(state, "unhandled_opcode")

    # -- grouped handlers ----------------------------------------------------------

    def _alu2(self, state, op, a, b):
        # dispatcher selector extraction folds to the seeded selector
        if state.selector is not None:
            if op == "SHR" and a.is_const(224) and b is self.cd0:
                return mk_const(state.selector)
            if op == "DIV" and a is self.cd0 and b.is_const(_SELECTOR_SHIFT):
                return mk_const(state.selector)
        if op == "SHL" and a.is_const(224) and b.kind == "const" and 0 < b.val < (1 << 32):
            state.shifted.add(b.val)
        return mk_op(op, (a, b))

    def _jump(self, state, dest):
        if dest.kind == "const":
            if dest.val not in self.jumpdests:
                return self._kill(state, "bad_jump")
            state.pc = dest.val
            return [state]
        targets = self.session.models(state.cons, dest, limit=4,
                                      timeout_ms=self.solver_ms)
        targets = [t for t in targets if t in self.jumpdests]
        if not targets:
            return self._kill(state, "bad_jump")
        out = []
        for t in sorted(targets):
            succ = state.fork() if len(targets) > 1 else state
            succ.add_constraint(mk_op("EQ", (dest, mk_const(t))), True)
            succ.pc = t
            killed = self._account_fork(succ, t)
            if killed is None:
                out.append(succ)
        return out

    def _jumpi(self, state, dest, cond, next_pc):
        if cond.kind == "const":
            if cond.val == 0:
                state.pc = next_pc
                return [state]
            return self._jump(state, dest)
        if dest.kind != "const":
            return self._kill(state, "bad_jump")
        ncond, ntruth = self._normalize_cond(cond, True)
        # already decided on this path: no fork, no query
        if (ncond, ntruth) in state.cons:
            return self._jump(state, dest)
        if (ncond, not ntruth) in state.cons:
            state.pc = next_pc
            return [state]

        taken = state.fork()
        taken.add_constraint(ncond, ntruth)
        state.add_constraint(ncond, not ntruth)
        # An assertion-style fork (exactly one arm lands in a block that can
        # only abort: checked arithmetic panics, require reverts) costs depth
        # but no loop-visit count, so concrete-trip-count loops full of
        # overflow checks run to completion under any loop bound. Feasibility
        # is not queried either; the abort arm dies within a few instructions
        # and the survivor is cross-checked by any rule that consults the
        # solver, so contradictions cannot turn into solver-gated reports.
        assertion = self._aborts(dest.val) != self._aborts(next_pc)
        out = []
        if dest.val not in self.jumpdests:
            self._bump(self.kill_counts, "bad_jump", 1)
        elif assertion or self._feasible(taken.cons):
            taken.pc = dest.val
            if self._account_fork(taken, None if assertion else dest.val) is None:
                out.append(taken)
        else:
            self._bump(self.kill_counts, "infeasible", 1)
        if assertion or self._feasible(state.cons):
            state.pc = next_pc
            if self._account_fork(state, None if assertion else next_pc) is None:
                out.append(state)
        else:
            self._bump(self.kill_counts, "infeasible", 1)
        return out

    def _feasible(self, cons):
        return self.session.solve(cons, timeout_ms=self.solver_ms) != "unsat"

    def _aborts(self, pc, hops=4):
        """True if execution from pc can only end in REVERT or INVALID.

        Follows constant JUMPs a few hops deep because panics and revert
        strings are emitted as shared helpers reached by jump, but gives up
        on anything data-dependent (JUMPI, calls, block fallthrough)."""
        cached = self._abort_cache.get(pc)
        if cached is not None:
            return cached
        result = False
        start = self.index_of.get(pc)
        if start is not None:
            last_push = None
            for ins in self.instructions[start:start + 64]:
                op = ins.mnemonic
                if op in ("REVERT", "INVALID"):
                    result = True
                    break
                if op == "JUMPDEST" and ins.pc != pc:
                    break
                if op == "JUMP":
                    if hops > 0 and last_push is not None:
                        result = self._aborts(last_push, hops - 1)
                    break
                if op in ("JUMPI", "RETURN", "STOP", "SELFDESTRUCT",
                          "CALL", "CALLCODE", "DELEGATECALL", "STATICCALL",
                          "CREATE", "CREATE2"):
                    break
                last_push = ins.push_value if ins.push_payload is not None else last_push
        self._abort_cache[pc] = result
        return result

    def _account_fork(self, state, block_pc):
        """Depth/loop accounting after a fork decision. Returns a kill reason
        or None if the state survives."""
        state.depth += 1
        if state.depth > self.config.depth_limit:
            self._kill(state, "depth")
            return "depth"
        if block_pc is not None:
            count = state.visit_counts.get(block_pc, 0) + 1
            state.visit_counts[block_pc] = count
            if count > self.config.loop_bound:
                self._kill(state, "loop")
                return "loop"
        return None

    def _copy(self, state, op, next_pc):
        stack = state.stack
        dest = self._concretize(state, stack.pop(), op)
        src = self._concretize(state, stack.pop(), op)
        n = self._concretize(state, stack.pop(), op)
        if dest is None or src is None or n is None:
            return self._kill(state, "concretize")
        if n:
            if op == "CODECOPY":
                data = self.code[src:src + n]
                state.mem.write_bytes(dest, data + b"\x00" * (n - len(data)))
            elif op == "CALLDATACOPY":
                self._copy_words(state, dest, n,
                                 lambda j: mk_input("calldata", src + 32 * j))
            else:  # RETURNDATACOPY
                cid = state.call_count
                self._copy_words(state, dest, n,
                                 lambda j: mk_input("returndata", (cid, src + 32 * j)))
        state.pc = next_pc
        return [state]

    def _copy_words(self, state, dest, n, word_at):
        full, tail = divmod(n, 32)
        for j in range(full):
            state.mem.store_word(dest + 32 * j, word_at(j))
        if tail:
            state.mem.write_word_slice(dest + 32 * full, word_at(full), 0, tail)

    def _havoc_range(self, state, dest, n, origin):
        state.mem.dirty_counter += 1
        serial = state.mem.dirty_counter
        self._copy_words(state, dest, n,
                         lambda j: mk_input(origin, (serial, j)))

    def _call(self, state, instr, op, next_pc):
        stack = state.stack
        has_value = op in ("CALL", "CALLCODE")
        gas = stack.pop()
        target = stack.pop()
        value = stack.pop() if has_value else None
        args_offset = self._concretize(state, stack.pop(), "call")
        args_length = self._concretize(state, stack.pop(), "call")
        ret_offset = self._concretize(state, stack.pop(), "call")
        ret_length = self._concretize(state, stack.pop(), "call")
        if None in (args_offset, args_length, ret_offset, ret_length):
            return self._kill(state, "concretize")
        selector = None
        if args_length >= 4:
            raw = state.mem.concrete_range(args_offset, 4)
            if raw is not None:
                selector = int.from_bytes(raw, "big")
        event = CallEvent(instr.pc, instr.source_index, op, gas, target, value,
                          args_offset, args_length, ret_offset, ret_length, selector)
        state.add_event(event)
        self.sink.on_call(state, event)
        state.call_count += 1
        cid = state.call_count
        if ret_length:
            self._copy_words(state, ret_offset, ret_length,
                             lambda j: mk_input("returndata", (cid, 32 * j)))
        stack.append(mk_input("returndata", ("success", cid)))
        state.pc = next_pc
        return [state]


def run(unit, slot_map, keyword_index, config, session=None, sink=None):
    """Explore one compiled contract and return the outcome."""
    return Engine(unit, slot_map, keyword_index, config, session, sink).run()
