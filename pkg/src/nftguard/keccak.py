"""Keccak-256 (the pre-NIST padding variant used by the EVM).

hashlib's sha3_256 is the NIST variant with 0x06 domain padding, which
produces different digests, so the permutation is carried here. Digests and
derived ABI selectors are cross-checked in the test suite against an
independently written implementation and published selector vectors.
"""

_MASK = (1 << 64) - 1

_ROT = [
    [0, 36, 3, 41, 18],
    [1, 44, 10, 45, 2],
    [62, 6, 43, 15, 61],
    [28, 55, 25, 21, 56],
    [27, 20, 39, 8, 14],
]

_RC = [
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
]

_RATE = 136  # 1600 - 2*256 bits, in bytes


def _rol(v, n):
    n %= 64
    if n == 0:
        return v
    return ((v << n) | (v >> (64 - n))) & _MASK


def _keccak_f(a):
    for rc in _RC:
        c = [a[x][0] ^ a[x][1] ^ a[x][2] ^ a[x][3] ^ a[x][4] for x in range(5)]
        d = [c[(x - 1) % 5] ^ _rol(c[(x + 1) % 5], 1) for x in range(5)]
        for x in range(5):
            ax = a[x]
            dx = d[x]
            for y in range(5):
                ax[y] ^= dx
        b = [[0] * 5 for _ in range(5)]
        for x in range(5):
            for y in range(5):
                b[y][(2 * x + 3 * y) % 5] = _rol(a[x][y], _ROT[x][y])
        for x in range(5):
            for y in range(5):
                a[x][y] = b[x][y] ^ ((~b[(x + 1) % 5][y]) & b[(x + 2) % 5][y])
        a[0][0] ^= rc


def keccak256(data: bytes) -> bytes:
    state = [[0] * 5 for _ in range(5)]
    padded = bytearray(data)
    padded.append(0x01)
    while len(padded) % _RATE:
        padded.append(0)
    padded[-1] |= 0x80
    for block_off in range(0, len(padded), _RATE):
        block = padded[block_off:block_off + _RATE]
        for i in range(_RATE // 8):
            state[i % 5][i // 5] ^= int.from_bytes(block[8 * i:8 * i + 8], "little")
        _keccak_f(state)
    out = bytearray()
    for i in range(4):
        out += state[i % 5][i // 5].to_bytes(8, "little")
    return bytes(out)


def keccak256_int(data: bytes) -> int:
    return int.from_bytes(keccak256(data), "big")


def selector(signature: str) -> int:
    """First 4 bytes of the signature hash, as an int (ABI function selector)."""
    return int.from_bytes(keccak256(signature.encode("ascii"))[:4], "big")


def mapping_element_slot(key: int, base_slot: int) -> int:
    """Storage address of m[key] for a mapping at base_slot: keccak(pad32(key) . pad32(base))."""
    return keccak256_int(key.to_bytes(32, "big") + base_slot.to_bytes(32, "big"))


def array_data_slot(base_slot: int) -> int:
    """First data slot of a dynamic array at base_slot: keccak(pad32(base))."""
    return keccak256_int(base_slot.to_bytes(32, "big"))
