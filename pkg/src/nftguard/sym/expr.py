"""Symbolic 256-bit word expressions.

Nodes are interned: structurally equal expressions are the same object, so
identity comparison is expression equality. That property carries the ER
rule's GS(t) vs GS0(t) check and the MR rule's template binding, so nothing
here may construct nodes outside of the mk_* helpers.

Taint is computed at construction and is monotone: a node carries a flag iff
any child does. 'user_input' originates from calldata symbols, 'caller_derived'
from the CALLER symbol.
"""

from ..keccak import keccak256_int

W256 = (1 << 256) - 1
SIGN_BIT = 1 << 255

TAINT_INPUT = "user_input"
TAINT_CALLER = "caller_derived"

_NO_TAINT = frozenset()

_table = {}
_uid_counter = 0


def _intern(key, factory):
    node = _table.get(key)
    if node is None:
        node = factory()
        _table[key] = node
    return node


class Expr:
    __slots__ = ("kind", "op", "args", "val", "origin", "key", "addr", "image", "taint", "uid")

    def __init__(self, kind, *, op=None, args=(), val=None, origin=None, key=None,
                 addr=None, image=None, taint=_NO_TAINT):
        global _uid_counter
        _uid_counter += 1
        self.uid = _uid_counter
        self.kind = kind
        self.op = op
        self.args = args
        self.val = val
        self.origin = origin
        self.key = key
        self.addr = addr
        self.image = image
        self.taint = taint

    def is_const(self, value=None):
        if self.kind != "const":
            return False
        return True if value is None else self.val == value

    def __repr__(self):
        return f"<Expr {render(self)}>"


class StorageAddr:
    """A classified storage address: a plain slot, a mapping element, a
    dynamic-array element, or an opaque hash expression."""

    __slots__ = ("kind", "slot", "key", "index", "expr", "uid")

    def __init__(self, kind, *, slot=None, key=None, index=None, expr=None):
        global _uid_counter
        _uid_counter += 1
        self.uid = _uid_counter
        self.kind = kind  # 'slot' | 'map' | 'aelem' | 'opaque'
        self.slot = slot
        self.key = key
        self.index = index
        self.expr = expr

    def base_slot(self):
        """Function i: the base slot id, or None for opaque addresses."""
        if self.kind == "slot":
            return self.slot
        if self.kind in ("map", "aelem"):
            return self.slot
        return None

    def caller_in_key(self):
        if self.kind == "map" and TAINT_CALLER in self.key.taint:
            return True
        if self.kind == "aelem" and TAINT_CALLER in self.index.taint:
            return True
        if self.kind == "opaque" and TAINT_CALLER in self.expr.taint:
            return True
        return False

    def __repr__(self):
        return f"<Addr {render_addr(self)}>"


# ---------------------------------------------------------------------------
# constructors

def mk_const(value):
    value &= W256
    return _intern(("c", value), lambda: Expr("const", val=value))


ZERO = mk_const(0)
ONE = mk_const(1)


def mk_input(origin, key=None, taint=None):
    """Environment symbol: calldata word, caller, callvalue, timestamp, ..."""
    if taint is None:
        if origin == "calldata":
            taint = frozenset((TAINT_INPUT,))
        elif origin == "caller":
            taint = frozenset((TAINT_CALLER,))
        else:
            taint = _NO_TAINT
    if isinstance(key, Expr):
        ikey = key.uid
    elif isinstance(key, tuple):
        ikey = tuple(k.uid if isinstance(k, Expr) else k for k in key)
    else:
        ikey = key
    return _intern(("i", origin, ikey), lambda: Expr("input", origin=origin, key=key, taint=taint))


def mk_storage_read(addr):
    # The read VALUE does not inherit the address taint: what is stored at a
    # caller-keyed slot is not itself the caller.
    return _intern(("s", addr.uid), lambda: Expr("sread", addr=addr))


def mk_keccak(length, words, provenance=None):
    """Hash application over a memory image of `length` bytes covered by `words`.

    Fully concrete images fold to the real digest; the caller's provenance
    table keeps digest -> image so storage addresses built from folded hashes
    can still be classified.
    """
    words = tuple(words)
    if words and all(w.kind == "const" for w in words) and length <= 32 * len(words):
        raw = b"".join(w.val.to_bytes(32, "big") for w in words)[:length]
        digest = keccak256_int(raw)
        if provenance is not None:
            provenance[digest] = (length, words)
        return mk_const(digest)
    key = ("k", length, tuple(w.uid for w in words))
    taint = frozenset().union(*(w.taint for w in words)) if words else _NO_TAINT
    return _intern(key, lambda: Expr("keccak", image=(length, words), taint=taint))


def _to_signed(v):
    return v - (1 << 256) if v & SIGN_BIT else v


def concrete_op(op, args):
    """EVM ALU semantics over python ints. args are in pop order (args[0] = stack top)."""
    a = args[0] if args else 0
    b = args[1] if len(args) > 1 else 0
    if op == "ADD":
        return (a + b) & W256
    if op == "MUL":
        return (a * b) & W256
    if op == "SUB":
        return (a - b) & W256
    if op == "DIV":
        return a // b if b else 0
    if op == "SDIV":
        if b == 0:
            return 0
        sa, sb = _to_signed(a), _to_signed(b)
        q = abs(sa) // abs(sb)
        if (sa < 0) != (sb < 0):
            q = -q
        return q & W256
    if op == "MOD":
        return a % b if b else 0
    if op == "SMOD":
        if b == 0:
            return 0
        sa, sb = _to_signed(a), _to_signed(b)
        r = abs(sa) % abs(sb)
        if sa < 0:
            r = -r
        return r & W256
    if op == "ADDMOD":
        m = args[2]
        return (a + b) % m if m else 0
    if op == "MULMOD":
        m = args[2]
        return (a * b) % m if m else 0
    if op == "EXP":
        return pow(a, b, 1 << 256)
    if op == "SIGNEXTEND":
        if a >= 31:
            return b
        bit = 8 * a + 7
        mask = (1 << (bit + 1)) - 1
        if b & (1 << bit):
            return (b | ~mask) & W256
        return b & mask
    if op == "LT":
        return int(a < b)
    if op == "GT":
        return int(a > b)
    if op == "SLT":
        return int(_to_signed(a) < _to_signed(b))
    if op == "SGT":
        return int(_to_signed(a) > _to_signed(b))
    if op == "EQ":
        return int(a == b)
    if op == "ISZERO":
        return int(a == 0)
    if op == "AND":
        return a & b
    if op == "OR":
        return a | b
    if op == "XOR":
        return a ^ b
    if op == "NOT":
        return (~a) & W256
    if op == "BYTE":
        return (b >> (8 * (31 - a))) & 0xFF if a < 32 else 0
    if op == "SHL":
        return (b << a) & W256 if a < 256 else 0
    if op == "SHR":
        return b >> a if a < 256 else 0
    if op == "SAR":
        s = _to_signed(b)
        if a >= 256:
            return 0 if s >= 0 else W256
        return (s >> a) & W256
    raise ValueError(f"unknown ALU op {op}")


ALU_OPS = frozenset([
    "ADD", "MUL", "SUB", "DIV", "SDIV", "MOD", "SMOD", "ADDMOD", "MULMOD", "EXP",
    "SIGNEXTEND", "LT", "GT", "SLT", "SGT", "EQ", "ISZERO", "AND", "OR", "XOR",
    "NOT", "BYTE", "SHL", "SHR", "SAR",
])


def mk_op(op, args):
    args = tuple(args)
    if all(x.kind == "const" for x in args):
        return mk_const(concrete_op(op, [x.val for x in args]))
    if op == "EXP":
        base, ex = args
        if ex.kind == "const" and ex.val <= 32:
            out = ONE
            for _ in range(ex.val):
                out = mk_op("MUL", (out, base))
            return out
        # symbolic or huge exponent: an uninterpreted power symbol per
        # (base, exp), inheriting the operands' taint
        taint = base.taint | ex.taint
        return mk_input("exp", (base, ex), taint=taint)
    key = ("o", op, tuple(x.uid for x in args))
    taint = frozenset().union(*(x.taint for x in args))
    return _intern(key, lambda: Expr("op", op=op, args=args, taint=taint))


# ---------------------------------------------------------------------------
# storage addresses

def mk_slot_addr(slot):
    return _intern(("as", slot & W256), lambda: StorageAddr("slot", slot=slot & W256))


def mk_map_addr(base, key):
    return _intern(("am", base, key.uid), lambda: StorageAddr("map", slot=base, key=key))


def mk_aelem_addr(base, index):
    return _intern(("aa", base, index.uid), lambda: StorageAddr("aelem", slot=base, index=index))


def mk_opaque_addr(expr):
    return _intern(("ao", expr.uid), lambda: StorageAddr("opaque", expr=expr))


def classify_address(expr, provenance):
    """Map a stack word used as a storage address onto a StorageAddr.

    provenance maps concrete digests back to the hash images they folded
    from, so concrete-key mapping stores and dynamic-array bases survive
    constant folding.
    """
    if expr.kind == "const":
        img = provenance.get(expr.val)
        if img is not None:
            addr = _classify_image(img, provenance)
            if addr is not None:
                return addr
        return mk_slot_addr(expr.val)
    if expr.kind == "keccak":
        addr = _classify_image(expr.image, provenance)
        if addr is not None:
            return addr
        return mk_opaque_addr(expr)
    if expr.kind == "op" and expr.op == "ADD":
        x, y = expr.args
        for hash_part, idx_part in ((x, y), (y, x)):
            base = _array_base_of(hash_part, provenance)
            if base is not None:
                return mk_aelem_addr(base, idx_part)
            mp = _map_image_of(hash_part, provenance)
            if mp is not None:
                # mapping-element plus offset (struct value fields): opaque,
                # but still hash-rooted
                return mk_opaque_addr(expr)
    return mk_opaque_addr(expr)


def _classify_image(image, provenance):
    length, words = image
    if length == 64 and len(words) == 2 and words[1].kind == "const":
        return mk_map_addr(words[1].val, words[0])
    if length == 32 and len(words) == 1 and words[0].kind == "const":
        # keccak(pad32(p)) alone addresses element 0 of the array at slot p
        return mk_aelem_addr(words[0].val, ZERO)
    return None


def _array_base_of(expr, provenance):
    image = None
    if expr.kind == "keccak":
        image = expr.image
    elif expr.kind == "const":
        image = provenance.get(expr.val)
    if image and image[0] == 32 and len(image[1]) == 1 and image[1][0].kind == "const":
        return image[1][0].val
    return None


def _map_image_of(expr, provenance):
    image = None
    if expr.kind == "keccak":
        image = expr.image
    elif expr.kind == "const":
        image = provenance.get(expr.val)
    if image and image[0] == 64 and len(image[1]) == 2 and image[1][1].kind == "const":
        return image
    return None


def substitute(expr, replacements):
    """Rebuild expr with nodes swapped per {uid: replacement}, re-folding as
    it goes. Used to evaluate a stored value under a hypothetical previous
    value (the compiler erases packed members by masking the old word)."""
    memo = {}

    def go(e):
        hit = replacements.get(e.uid)
        if hit is not None:
            return hit
        cached = memo.get(e.uid)
        if cached is not None:
            return cached
        out = e
        if e.kind == "op":
            args = tuple(go(a) for a in e.args)
            if args != e.args:
                out = mk_op(e.op, args)
        elif e.kind == "keccak":
            length, words = e.image
            new_words = tuple(go(w) for w in words)
            if new_words != words:
                out = mk_keccak(length, new_words)
        memo[e.uid] = out
        return out

    return go(expr)


# ---------------------------------------------------------------------------
# traversal

def walk(expr):
    """Yield every Expr node reachable from expr, including through storage
    address keys (a constraint that reads m[sload(3)] references slot 3 too)."""
    seen = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if node.uid in seen:
            continue
        seen.add(node.uid)
        yield node
        if node.kind == "op":
            stack.extend(node.args)
        elif node.kind == "keccak":
            stack.extend(node.image[1])
        elif node.kind == "sread":
            stack.extend(_addr_exprs(node.addr))
        elif node.kind == "input":
            if isinstance(node.key, Expr):
                stack.append(node.key)
            elif isinstance(node.key, tuple):
                stack.extend(k for k in node.key if isinstance(k, Expr))


def _addr_exprs(addr):
    if addr.kind == "map":
        return (addr.key,)
    if addr.kind == "aelem":
        return (addr.index,)
    if addr.kind == "opaque":
        return (addr.expr,)
    return ()


def storage_reads(exprs):
    """Function e: every storage address read anywhere inside the given expressions."""
    out = []
    seen = set()
    for e in exprs:
        for node in walk(e):
            if node.kind == "sread" and node.addr.uid not in seen:
                seen.add(node.addr.uid)
                out.append(node.addr)
    return out


# ---------------------------------------------------------------------------
# rendering (deterministic, structural; used in report evidence)

_MAX_RENDER_DEPTH = 10


def render(expr, depth=0):
    if depth > _MAX_RENDER_DEPTH:
        return "..."
    k = expr.kind
    if k == "const":
        return hex(expr.val) if expr.val > 4096 else str(expr.val)
    if k == "input":
        tag = "CALLDATA" if expr.origin == "calldata" else expr.origin.upper()
        if expr.key is None:
            return tag
        return f"{tag}[{_render_key(expr.key, depth)}]"
    if k == "sread":
        return f"SLOAD({render_addr(expr.addr, depth + 1)})"
    if k == "keccak":
        length, words = expr.image
        inner = ",".join(render(w, depth + 1) for w in words)
        return f"KECCAK{length}({inner})"
    if k == "op":
        inner = ",".join(render(a, depth + 1) for a in expr.args)
        return f"{expr.op}({inner})"
    return "?"


def _render_key(key, depth):
    if isinstance(key, Expr):
        return render(key, depth + 1)
    if isinstance(key, tuple):
        return ",".join(_render_key(k, depth) for k in key)
    return str(key)


def render_addr(addr, depth=0):
    if addr.kind == "slot":
        return f"slot[{addr.slot}]" if addr.slot <= 1 << 32 else f"slot[{hex(addr.slot)}]"
    if addr.kind == "map":
        return f"map[{addr.slot}][{render(addr.key, depth + 1)}]"
    if addr.kind == "aelem":
        return f"array[{addr.slot}][{render(addr.index, depth + 1)}]"
    return f"opaque({render(addr.expr, depth + 1)})"
