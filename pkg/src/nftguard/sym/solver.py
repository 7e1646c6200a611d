"""SMT gateway.

Path feasibility and model queries run against an external solver speaking
SMT-LIB2 over stdin/stdout. A real `z3 -in` works; so does the bundled
node shim (data/smt_shim.js), which wraps the WASM build of Z3 behind the
same protocol. Every query is self-contained: we (reset), set options,
replay the serialized constraints and check. State never leaks between
queries, so results are a pure function of the script text and can be
cached on it.

Serialization notes:
 - every distinct DAG node becomes one define-fun/declare-const with a
   per-query local name (n0, n1, ...), assigned in first-visit order over
   the constraint list, which keeps scripts byte-stable for identical
   queries regardless of global uid drift;
 - division-family ops carry the EVM zero-denominator guard;
 - hash applications are uninterpreted constants plus pairwise axioms:
   equal digests imply equal images, different shapes are distinct.
"""

import logging
import os
import re
import select
import shutil
import subprocess
import time
from importlib import resources

from ..errors import SolverFailure
from .expr import Expr

log = logging.getLogger(__name__)

SENTINEL = "::NFTG_DONE::"
SENTINEL_CMD = '(echo "::NFTG_DONE::")'

_ZERO = "(_ bv0 256)"
_ONE = "(_ bv1 256)"

_CMP_PRED = {"LT": "bvult", "GT": "bvugt", "SLT": "bvslt", "SGT": "bvsgt"}

_VALUE_RE = re.compile(r"#x([0-9a-fA-F]+)|#b([01]+)|\(_\s+bv(\d+)\s+\d+\)")


def _bundled_shim():
    return str(resources.files("nftguard").joinpath("data", "smt_shim.js"))


def resolve_smt_command(explicit=None):
    """Build the argv for the solver process.

    Order: explicit path, then $NFTG_SMT, then a z3 on PATH, then the
    bundled node shim. A .js path is run under node; anything whose
    basename starts with z3 gets -in appended.
    """
    path = explicit or os.environ.get("NFTG_SMT")
    if path:
        if path.endswith(".js"):
            node = shutil.which("node")
            if node is None:
                raise SolverFailure("node is required to run a .js solver shim")
            return [node, path]
        if os.path.basename(path).startswith("z3"):
            return [path, "-in"]
        return [path]
    z3 = shutil.which("z3")
    if z3:
        return [z3, "-in"]
    node = shutil.which("node")
    if node:
        return [node, _bundled_shim()]
    raise SolverFailure("no SMT solver found: set NFTG_SMT, or install z3 or node")


class _Serializer:
    """One-query expression-to-SMT lowering with local node numbering."""

    def __init__(self):
        self.lines = []
        self.names = {}
        self.counter = 0
        self.keccaks = []

    def _fresh(self):
        name = f"n{self.counter}"
        self.counter += 1
        return name

    def ref(self, expr):
        if expr.kind == "const":
            return f"(_ bv{expr.val} 256)"
        name = self.names.get(expr.uid)
        if name is not None:
            return name
        if expr.kind == "input":
            if isinstance(expr.key, Expr):
                self.ref(expr.key)  # serialize for completeness of the DAG
            name = self._fresh()
            self.lines.append(f"(declare-const {name} (_ BitVec 256))")
        elif expr.kind == "sread":
            name = self._fresh()
            self.lines.append(f"(declare-const {name} (_ BitVec 256))")
        elif expr.kind == "keccak":
            for w in expr.image[1]:
                self.ref(w)
            name = self._fresh()
            self.lines.append(f"(declare-const {name} (_ BitVec 256))")
            self.keccaks.append((expr, name))
        elif expr.kind == "op":
            refs = [self.ref(a) for a in expr.args]
            name = self._fresh()
            self.lines.append(
                f"(define-fun {name} () (_ BitVec 256) {self._op_term(expr.op, refs)})")
        else:
            raise SolverFailure(f"cannot serialize node kind {expr.kind}")
        self.names[expr.uid] = name
        return name

    def _op_term(self, op, r):
        if op == "ADD":
            return f"(bvadd {r[0]} {r[1]})"
        if op == "MUL":
            return f"(bvmul {r[0]} {r[1]})"
        if op == "SUB":
            return f"(bvsub {r[0]} {r[1]})"
        if op == "DIV":
            return f"(ite (= {r[1]} {_ZERO}) {_ZERO} (bvudiv {r[0]} {r[1]}))"
        if op == "SDIV":
            return f"(ite (= {r[1]} {_ZERO}) {_ZERO} (bvsdiv {r[0]} {r[1]}))"
        if op == "MOD":
            return f"(ite (= {r[1]} {_ZERO}) {_ZERO} (bvurem {r[0]} {r[1]}))"
        if op == "SMOD":
            return f"(ite (= {r[1]} {_ZERO}) {_ZERO} (bvsrem {r[0]} {r[1]}))"
        if op == "ADDMOD":
            wide = "(_ zero_extend 1)"
            return (f"(ite (= {r[2]} {_ZERO}) {_ZERO} ((_ extract 255 0) "
                    f"(bvurem (bvadd ({wide} {r[0]}) ({wide} {r[1]})) ({wide} {r[2]}))))")
        if op == "MULMOD":
            wide = "(_ zero_extend 256)"
            return (f"(ite (= {r[2]} {_ZERO}) {_ZERO} ((_ extract 255 0) "
                    f"(bvurem (bvmul ({wide} {r[0]}) ({wide} {r[1]})) ({wide} {r[2]}))))")
        if op == "SIGNEXTEND":
            b, x = r
            bitpos = f"(bvadd (bvmul (_ bv8 256) {b}) (_ bv7 256))"
            mask = f"(bvsub (bvshl {_ONE} (bvadd {bitpos} {_ONE})) {_ONE})"
            negative = f"(= (bvand (bvlshr {x} {bitpos}) {_ONE}) {_ONE})"
            return (f"(ite (bvuge {b} (_ bv31 256)) {x} "
                    f"(ite {negative} (bvor {x} (bvnot {mask})) (bvand {x} {mask})))")
        if op in _CMP_PRED:
            return f"(ite ({_CMP_PRED[op]} {r[0]} {r[1]}) {_ONE} {_ZERO})"
        if op == "EQ":
            return f"(ite (= {r[0]} {r[1]}) {_ONE} {_ZERO})"
        if op == "ISZERO":
            return f"(ite (= {r[0]} {_ZERO}) {_ONE} {_ZERO})"
        if op == "AND":
            return f"(bvand {r[0]} {r[1]})"
        if op == "OR":
            return f"(bvor {r[0]} {r[1]})"
        if op == "XOR":
            return f"(bvxor {r[0]} {r[1]})"
        if op == "NOT":
            return f"(bvnot {r[0]})"
        if op == "BYTE":
            i, x = r
            shift = f"(bvmul (_ bv8 256) (bvsub (_ bv31 256) {i}))"
            return (f"(ite (bvuge {i} (_ bv32 256)) {_ZERO} "
                    f"(bvand (bvlshr {x} {shift}) (_ bv255 256)))")
        if op == "SHL":
            return f"(bvshl {r[1]} {r[0]})"
        if op == "SHR":
            return f"(bvlshr {r[1]} {r[0]})"
        if op == "SAR":
            return f"(bvashr {r[1]} {r[0]})"
        raise SolverFailure(f"cannot serialize op {op}")

    def bool_term(self, expr, truth):
        """A Bool term asserting expr != 0 (truth) or expr == 0 (not truth),
        with comparison and ISZERO nodes lowered to predicates directly."""
        if expr.kind == "const":
            return "true" if bool(expr.val) == truth else "false"
        if expr.kind == "op":
            if expr.op == "ISZERO":
                return self.bool_term(expr.args[0], not truth)
            if expr.op in _CMP_PRED:
                a, b = (self.ref(x) for x in expr.args)
                pred = f"({_CMP_PRED[expr.op]} {a} {b})"
                return pred if truth else f"(not {pred})"
            if expr.op == "EQ":
                a, b = (self.ref(x) for x in expr.args)
                return f"(= {a} {b})" if truth else f"(not (= {a} {b}))"
        name = self.ref(expr)
        return f"(not (= {name} {_ZERO}))" if truth else f"(= {name} {_ZERO})"

    def hash_axioms(self):
        out = []
        for i in range(len(self.keccaks)):
            ei, ni = self.keccaks[i]
            for j in range(i + 1, len(self.keccaks)):
                ej, nj = self.keccaks[j]
                li, wi = ei.image
                lj, wj = ej.image
                if li == lj and len(wi) == len(wj):
                    eqs = " ".join(
                        f"(= {self.ref(a)} {self.ref(b)})" for a, b in zip(wi, wj))
                    out.append(f"(assert (=> (= {ni} {nj}) (and {eqs})))")
                else:
                    out.append(f"(assert (distinct {ni} {nj}))")
        return out


def serialize_query(constraints, goals=(), timeout_ms=10000):
    """Render a full one-shot script. Returns (script, goal_names)."""
    ser = _Serializer()
    asserts = [f"(assert {ser.bool_term(e, truth)})" for e, truth in constraints]
    goal_names = [ser.ref(g) for g in goals]
    lines = ["(reset)",
             f"(set-option :timeout {int(timeout_ms)})",
             "(set-logic QF_BV)"]
    lines.extend(ser.lines)
    lines.extend(ser.hash_axioms())
    lines.extend(asserts)
    return "\n".join(lines), goal_names


class _LineReader:
    """Incremental reader over a raw pipe fd so a wall deadline can be
    enforced with select (a buffered file object would hide readiness)."""

    def __init__(self, fd):
        self.fd = fd
        self.buf = b""

    def readline(self, deadline):
        while True:
            nl = self.buf.find(b"\n")
            if nl >= 0:
                line = self.buf[:nl]
                self.buf = self.buf[nl + 1:]
                return line.decode("utf-8", "replace")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([self.fd], [], [], min(remaining, 1.0))
            if not ready:
                continue
            chunk = os.read(self.fd, 65536)
            if not chunk:
                return None  # EOF
            self.buf += chunk


class SmtSession:
    """One solver process plus a script-text result cache."""

    def __init__(self, smt_path=None, timeout_s=10):
        self.cmd = resolve_smt_command(smt_path)
        self.timeout_s = timeout_s
        self.proc = None
        self.reader = None
        self._cache = {}
        self.stats = {"queries": 0, "sat": 0, "unsat": 0, "unknown": 0,
                      "cache_hits": 0, "restarts": 0}

    # -- process plumbing ---------------------------------------------------

    def _ensure(self):
        if self.proc is not None and self.proc.poll() is None:
            return
        log.debug("starting solver: %s", " ".join(self.cmd))
        self.proc = subprocess.Popen(
            self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL)
        self.reader = _LineReader(self.proc.stdout.fileno())

    def _kill(self):
        if self.proc is not None:
            try:
                self.proc.kill()
                self.proc.wait(timeout=5)
            except Exception:
                pass
        self.proc = None
        self.reader = None
        self.stats["restarts"] += 1

    def _roundtrip(self, batch, wall_s):
        """Send one batch, return the list of output lines, or None if the
        solver hung or died (in which case it has been killed)."""
        self._ensure()
        try:
            self.proc.stdin.write((batch + "\n" + SENTINEL_CMD + "\n").encode())
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._kill()
            return None
        deadline = time.monotonic() + wall_s
        lines = []
        while True:
            line = self.reader.readline(deadline)
            if line is None:
                log.warning("solver unresponsive after %.0fs, restarting", wall_s)
                self._kill()
                return None
            if line.strip() == SENTINEL:
                return lines
            lines.append(line)

    def close(self):
        if self.proc is not None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except Exception:
                self.proc.kill()
            self.proc = None
            self.reader = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- queries ------------------------------------------------------------

    def _wall(self, timeout_ms):
        # generous: WASM startup rides on the first query
        return timeout_ms / 1000.0 * 3 + 20.0

    def solve(self, constraints, timeout_ms=None):
        """Check satisfiability of the conjunction. Returns 'sat', 'unsat'
        or 'unknown'; any solver failure degrades to 'unknown'."""
        timeout_ms = timeout_ms if timeout_ms is not None else int(self.timeout_s * 1000)
        try:
            script, _ = serialize_query(constraints, timeout_ms=timeout_ms)
        except SolverFailure as exc:
            log.warning("query not serializable: %s", exc)
            return "unknown"
        cached = self._cache.get(script)
        if cached is not None:
            self.stats["cache_hits"] += 1
            return cached
        self.stats["queries"] += 1
        lines = self._roundtrip(script + "\n(check-sat)", self._wall(timeout_ms))
        status = self._parse_status(lines)
        self.stats[status] += 1
        self._cache[script] = status
        return status

    def models(self, constraints, goal, limit=4, timeout_ms=None):
        """Up to `limit` distinct concrete values of `goal` under the
        constraints, found by iterative blocking. Best effort: an unknown
        or a solver failure just ends the enumeration."""
        timeout_ms = timeout_ms if timeout_ms is not None else int(self.timeout_s * 1000)
        try:
            script, goal_names = serialize_query(
                constraints, goals=(goal,), timeout_ms=timeout_ms)
        except SolverFailure as exc:
            log.warning("query not serializable: %s", exc)
            return []
        gname = goal_names[0]
        values = []
        while len(values) < limit:
            blocked = "".join(
                f"\n(assert (not (= {gname} (_ bv{v} 256))))" for v in values)
            lines = self._roundtrip(script + blocked + "\n(check-sat)",
                                    self._wall(timeout_ms))
            if self._parse_status(lines) != "sat":
                break
            out = self._roundtrip(f"(get-value ({gname}))", self._wall(timeout_ms))
            if out is None:
                break
            value = self._parse_value("".join(out))
            if value is None or value in values:
                break
            values.append(value)
        return values

    @staticmethod
    def _parse_status(lines):
        if lines is None:
            return "unknown"
        for line in reversed(lines):
            token = line.strip()
            if token in ("sat", "unsat", "unknown"):
                return token
            if token.startswith("(error"):
                log.debug("solver error line: %s", token)
        return "unknown"

    @staticmethod
    def _parse_value(text):
        m = _VALUE_RE.search(text)
        if not m:
            return None
        if m.group(1) is not None:
            return int(m.group(1), 16)
        if m.group(2) is not None:
            return int(m.group(2), 2)
        return int(m.group(3))
