"""Byte-granular EVM memory.

Each touched byte is either a concrete int or an (Expr, byte_index) slice
of a stored 256-bit word (index 0 = most significant byte). Offsets and
lengths are concrete python ints by the time they reach this module; the
engine concretizes symbolic ones first.

Word reads reassemble: all-concrete windows fold to a constant, a window
that is exactly one stored word comes back as that word, and mixed windows
are rebuilt from up to four contiguous segments with shift/mask/or. Beyond
that the read degrades to a fresh opaque symbol, which keeps pathological
byte soup from blowing up the expression DAG.
"""

from .expr import ZERO, mk_const, mk_input, mk_op

MAX_EXTENT = 1 << 24  # 16 MiB; anything larger would OOG on a real chain anyway


class MemoryExtent(OverflowError):
    pass


def _check(off, n):
    if off < 0 or n < 0 or off + n > MAX_EXTENT:
        raise MemoryExtent(f"memory access [{off}, {off}+{n}) out of range")


class Memory:
    __slots__ = ("cells", "peak", "dirty_counter")

    def __init__(self):
        self.cells = {}
        self.peak = 0
        self.dirty_counter = 0

    def copy(self):
        m = Memory.__new__(Memory)
        m.cells = dict(self.cells)
        m.peak = self.peak
        m.dirty_counter = self.dirty_counter
        return m

    def _touch(self, end):
        if end > self.peak:
            self.peak = end

    def msize(self):
        return (self.peak + 31) // 32 * 32

    # -- writes --------------------------------------------------------------

    def store_word(self, off, expr):
        _check(off, 32)
        self._touch(off + 32)
        if expr.kind == "const":
            data = expr.val.to_bytes(32, "big")
            for i in range(32):
                self.cells[off + i] = data[i]
        else:
            for i in range(32):
                self.cells[off + i] = (expr, i)

    def store_byte(self, off, expr):
        _check(off, 1)
        self._touch(off + 1)
        if expr.kind == "const":
            self.cells[off] = expr.val & 0xFF
        else:
            self.cells[off] = (expr, 31)

    def write_bytes(self, off, data):
        _check(off, len(data))
        self._touch(off + len(data))
        for i, b in enumerate(data):
            self.cells[off + i] = b

    def write_zeros(self, off, n):
        _check(off, n)
        self._touch(off + n)
        for i in range(n):
            self.cells[off + i] = 0

    def write_word_slice(self, off, expr, first_byte, n):
        """Place bytes [first_byte, first_byte+n) of a word at off. Used for
        partial-word copies like a return-data tail."""
        _check(off, n)
        self._touch(off + n)
        for i in range(n):
            self.cells[off + i] = (expr, first_byte + i)

    # -- reads ---------------------------------------------------------------

    def load_word(self, off):
        _check(off, 32)
        self._touch(off + 32)
        cells = [self.cells.get(off + i, 0) for i in range(32)]
        if all(isinstance(c, int) for c in cells):
            return mk_const(int.from_bytes(bytes(cells), "big"))
        first = cells[0]
        if (not isinstance(first, int) and first[1] == 0 and all(
                not isinstance(c, int) and c[0] is first[0] and c[1] == i
                for i, c in enumerate(cells))):
            return first[0]
        return self._reconstruct(cells)

    def load_words(self, off, n):
        """The ceil(n/32) words covering [off, off+n), for hash images."""
        return [self.load_word(off + 32 * i) for i in range((n + 31) // 32)]

    def concrete_range(self, off, n):
        """bytes iff every byte in the range is concrete, else None."""
        _check(off, n)
        out = bytearray(n)
        for i in range(n):
            c = self.cells.get(off + i, 0)
            if not isinstance(c, int):
                return None
            out[i] = c
        return bytes(out)

    def _reconstruct(self, cells):
        segments = []
        i = 0
        while i < 32:
            c = cells[i]
            if isinstance(c, int):
                j = i
                while j < 32 and isinstance(cells[j], int):
                    j += 1
                segments.append(("const", i, j, None, None))
            else:
                expr, idx = c
                j = i + 1
                while j < 32:
                    nxt = cells[j]
                    if isinstance(nxt, int) or nxt[0] is not expr or nxt[1] != idx + (j - i):
                        break
                    j += 1
                segments.append(("expr", i, j, expr, idx))
            i = j
        if len(segments) > 4:
            self.dirty_counter += 1
            return mk_input("mem", self.dirty_counter)
        acc = None
        for kind, start, end, expr, idx in segments:
            if kind == "const":
                value = int.from_bytes(bytes(cells[start:end]), "big") << (8 * (32 - end))
                if value == 0:
                    continue
                piece = mk_const(value)
            else:
                width = end - start
                low_shift = 8 * (31 - (idx + width - 1))
                piece = expr
                if low_shift:
                    piece = mk_op("SHR", (mk_const(low_shift), piece))
                piece = mk_op("AND", (piece, mk_const((1 << (8 * width)) - 1)))
                left_shift = 8 * (32 - end)
                if left_shift:
                    piece = mk_op("SHL", (mk_const(left_shift), piece))
            acc = piece if acc is None else mk_op("OR", (acc, piece))
        return acc if acc is not None else ZERO
