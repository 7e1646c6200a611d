"""Machine state and the trace event vocabulary.

A state owns the operand stack, memory, the written-storage table GS, the
path constraints and the bookkeeping the exploration bounds need. GS is
sparse: an address that was never written on this path reads as its own
interned StorageRead symbol, which doubles as the GS0 snapshot (comparing
a current value against GS0 is an identity check).

Events form a parent-pointer tree so forked paths share their common
prefix; a path materializes its list only when it ends.
"""

from dataclasses import dataclass

from .expr import mk_storage_read


@dataclass(frozen=True)
class StoreEvent:
    pc: int
    instr_index: int
    addr: object          # StorageAddr
    value: object         # Expr
    previous: object      # Expr, the GS value before this write


@dataclass(frozen=True)
class LoadEvent:
    pc: int
    instr_index: int
    addr: object


@dataclass(frozen=True)
class CallEvent:
    pc: int
    instr_index: int
    op: str               # CALL | CALLCODE | DELEGATECALL | STATICCALL
    gas: object
    target: object
    value: object         # None for the no-value variants
    args_offset: int
    args_length: int
    ret_offset: int
    ret_length: int
    resolved_selector: int | None  # set iff the first 4 arg bytes are concrete


@dataclass(frozen=True)
class StackEvent:
    pc: int
    instr_index: int
    op: str
    operands: tuple


@dataclass(frozen=True)
class MemoryEvent:
    pc: int
    instr_index: int
    kind: str             # store | load
    offset: int
    value: object


class _EventNode:
    __slots__ = ("event", "parent")

    def __init__(self, event, parent):
        self.event = event
        self.parent = parent


class MachineState:
    __slots__ = (
        "stack", "mem", "storage", "loads", "cons", "pc", "selector", "context",
        "visit_counts", "depth", "steps", "call_count", "seed_count", "events", "shifted",
    )

    def __init__(self, mem):
        self.stack = []
        self.mem = mem
        self.storage = {}        # addr.uid -> (StorageAddr, Expr)
        self.loads = {}          # addr.uid -> StorageAddr, reads on this path
        self.cons = ()           # tuple of (Expr, truth)
        self.pc = 0
        self.selector = None
        self.context = None      # entry FunctionContext
        self.visit_counts = {}   # block pc -> forked entries
        self.depth = 0           # fork decisions taken on this path
        self.steps = 0
        self.call_count = 0
        self.seed_count = 0      # leading cons entries that are environment seeds
        self.events = None       # _EventNode tail
        self.shifted = set()     # 4-byte values seen built via SHL(224, _)

    def fork(self):
        child = MachineState.__new__(MachineState)
        child.stack = list(self.stack)
        child.mem = self.mem.copy()
        child.storage = dict(self.storage)
        child.loads = dict(self.loads)
        child.cons = self.cons
        child.pc = self.pc
        child.selector = self.selector
        child.context = self.context
        child.visit_counts = dict(self.visit_counts)
        child.depth = self.depth
        child.steps = self.steps
        child.call_count = self.call_count
        child.seed_count = self.seed_count
        child.events = self.events
        child.shifted = set(self.shifted)
        return child

    # -- storage view ---------------------------------------------------------

    def storage_value(self, addr):
        """GS(addr): the written value, or the initial-value symbol."""
        entry = self.storage.get(addr.uid)
        return entry[1] if entry is not None else mk_storage_read(addr)

    def storage_modified(self, addr):
        """True iff GS(addr) is syntactically different from GS0(addr)."""
        entry = self.storage.get(addr.uid)
        return entry is not None and entry[1] is not mk_storage_read(addr)

    # -- constraints and events -------------------------------------------------

    def add_constraint(self, expr, truth):
        if expr.kind == "const":
            return
        pair = (expr, truth)
        if pair not in self.cons:
            self.cons = self.cons + (pair,)

    def add_event(self, event):
        self.events = _EventNode(event, self.events)

    def event_list(self):
        out = []
        node = self.events
        while node is not None:
            out.append(node.event)
            node = node.parent
        out.reverse()
        return out
