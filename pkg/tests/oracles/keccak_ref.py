"""Independent keccak-256 oracle for the test suite.

Deliberately written from the reference pseudocode with a different
structure than the implementation under test: flat 25-lane state indexed
x + 5*y, a precomputed rho/pi walk, and whole-block padding. Keep it that
way; the two are compared, never shared.
"""

MASK64 = (1 << 64) - 1

ROUND_CONSTANTS = []
# LFSR-generated round constants (rc(t) over GF(2)), per the reference spec.
_r = 1
for _round in range(24):
    rc = 0
    for j in range(7):
        bitpos = (1 << j) - 1
        if _r & 1:
            rc |= 1 << bitpos
        # x^8 + x^6 + x^5 + x^4 + 1
        _r <<= 1
        if _r & 0x100:
            _r ^= 0x171
    ROUND_CONSTANTS.append(rc)

# rho offsets for the flat layout, index = x + 5*y
RHO = [0, 1, 62, 28, 27,
       36, 44, 6, 55, 20,
       3, 10, 43, 25, 39,
       41, 45, 15, 21, 8,
       18, 2, 61, 56, 14]

# pi: lane (x, y) moves to (y, 2x+3y). PI_DEST[src] = dst in flat indexing.
PI_DEST = [0] * 25
for _x in range(5):
    for _y in range(5):
        PI_DEST[_x + 5 * _y] = _y + 5 * ((2 * _x + 3 * _y) % 5)


def _rot64(value, amount):
    amount %= 64
    return ((value << amount) & MASK64) | (value >> ((64 - amount) % 64)) if amount else value


def _permute(lanes):
    for rc in ROUND_CONSTANTS:
        # theta
        parity = [lanes[x] ^ lanes[x + 5] ^ lanes[x + 10] ^ lanes[x + 15] ^ lanes[x + 20]
                  for x in range(5)]
        for x in range(5):
            d = parity[(x + 4) % 5] ^ _rot64(parity[(x + 1) % 5], 1)
            for y in range(0, 25, 5):
                lanes[x + y] ^= d
        # rho + pi in one pass
        moved = [0] * 25
        for src in range(25):
            moved[PI_DEST[src]] = _rot64(lanes[src], RHO[src])
        # chi
        for y in range(0, 25, 5):
            row = moved[y:y + 5]
            for x in range(5):
                lanes[x + y] = row[x] ^ ((row[(x + 1) % 5] ^ MASK64) & row[(x + 2) % 5])
        # iota
        lanes[0] ^= rc
    return lanes


def keccak256_ref(message: bytes) -> bytes:
    rate = 136
    # multi-rate padding 10*1 with the keccak (0x01) domain byte
    pad_len = rate - (len(message) % rate)
    if pad_len == 1:
        padding = b"\x81"
    else:
        padding = b"\x01" + b"\x00" * (pad_len - 2) + b"\x80"
    padded = message + padding

    lanes = [0] * 25
    for block_start in range(0, len(padded), rate):
        for lane_idx in range(rate // 8):
            chunk = padded[block_start + 8 * lane_idx: block_start + 8 * lane_idx + 8]
            lanes[lane_idx] ^= int.from_bytes(chunk, "little")
        _permute(lanes)

    digest = b"".join(lanes[i].to_bytes(8, "little") for i in range(4))
    return digest


def mapping_slot_ref(key: int, base: int) -> int:
    return int.from_bytes(keccak256_ref(key.to_bytes(32, "big") + base.to_bytes(32, "big")), "big")


def selector_ref(signature: str) -> int:
    return int.from_bytes(keccak256_ref(signature.encode())[:4], "big")
