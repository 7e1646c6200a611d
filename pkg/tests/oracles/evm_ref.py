"""Independent concrete interpreter for straight-line EVM arithmetic.

A second opinion for the differential tests: decodes bytecode with its own
opcode table and evaluates the ALU with its own two's-complement handling,
sharing no code with the package. Also hosts the seeded generator that
produces the straight-line programs both sides execute.
"""

import random

MOD = 1 << 256
MASK = MOD - 1

# byte -> (name, pops, pushes). ALU subset plus the stack shufflers the
# generator is allowed to emit. PUSHk/DUPk/SWAPk are handled by range.
TABLE = {
    0x00: ("STOP", 0, 0),
    0x01: ("ADD", 2, 1), 0x02: ("MUL", 2, 1), 0x03: ("SUB", 2, 1),
    0x04: ("DIV", 2, 1), 0x05: ("SDIV", 2, 1), 0x06: ("MOD", 2, 1),
    0x07: ("SMOD", 2, 1), 0x08: ("ADDMOD", 3, 1), 0x09: ("MULMOD", 3, 1),
    0x0A: ("EXP", 2, 1), 0x0B: ("SIGNEXTEND", 2, 1),
    0x10: ("LT", 2, 1), 0x11: ("GT", 2, 1), 0x12: ("SLT", 2, 1),
    0x13: ("SGT", 2, 1), 0x14: ("EQ", 2, 1), 0x15: ("ISZERO", 1, 1),
    0x16: ("AND", 2, 1), 0x17: ("OR", 2, 1), 0x18: ("XOR", 2, 1),
    0x19: ("NOT", 1, 1), 0x1A: ("BYTE", 2, 1),
    0x1B: ("SHL", 2, 1), 0x1C: ("SHR", 2, 1), 0x1D: ("SAR", 2, 1),
    0x50: ("POP", 1, 0),
}


def _signed(x):
    return x - MOD if x >> 255 else x


def _unsigned(x):
    return x & MASK


def evaluate(name, args):
    """One ALU op over python ints; args in EVM pop order."""
    if name == "ADD":
        return (args[0] + args[1]) & MASK
    if name == "MUL":
        return (args[0] * args[1]) & MASK
    if name == "SUB":
        return (args[0] - args[1]) & MASK
    if name == "DIV":
        return args[0] // args[1] if args[1] else 0
    if name == "SDIV":
        a, b = _signed(args[0]), _signed(args[1])
        if b == 0:
            return 0
        q = abs(a) // abs(b)
        return _unsigned(-q if (a < 0) != (b < 0) else q)
    if name == "MOD":
        return args[0] % args[1] if args[1] else 0
    if name == "SMOD":
        a, b = _signed(args[0]), _signed(args[1])
        if b == 0:
            return 0
        r = abs(a) % abs(b)
        return _unsigned(-r if a < 0 else r)
    if name == "ADDMOD":
        return (args[0] + args[1]) % args[2] if args[2] else 0
    if name == "MULMOD":
        return (args[0] * args[1]) % args[2] if args[2] else 0
    if name == "EXP":
        return pow(args[0], args[1], MOD)
    if name == "SIGNEXTEND":
        k, x = args
        if k >= 31:
            return x
        bit = 8 * (k + 1) - 1
        if x & (1 << bit):
            return (x | (MASK ^ ((1 << (bit + 1)) - 1))) & MASK
        return x & ((1 << (bit + 1)) - 1)
    if name == "LT":
        return 1 if args[0] < args[1] else 0
    if name == "GT":
        return 1 if args[0] > args[1] else 0
    if name == "SLT":
        return 1 if _signed(args[0]) < _signed(args[1]) else 0
    if name == "SGT":
        return 1 if _signed(args[0]) > _signed(args[1]) else 0
    if name == "EQ":
        return 1 if args[0] == args[1] else 0
    if name == "ISZERO":
        return 1 if args[0] == 0 else 0
    if name == "AND":
        return args[0] & args[1]
    if name == "OR":
        return args[0] | args[1]
    if name == "XOR":
        return args[0] ^ args[1]
    if name == "NOT":
        return args[0] ^ MASK
    if name == "BYTE":
        i, x = args
        return (x >> (8 * (31 - i))) & 0xFF if i < 32 else 0
    if name == "SHL":
        return (args[1] << args[0]) & MASK if args[0] < 256 else 0
    if name == "SHR":
        return args[1] >> args[0] if args[0] < 256 else 0
    if name == "SAR":
        s = _signed(args[1])
        if args[0] >= 256:
            return MASK if s < 0 else 0
        return _unsigned(s >> args[0])
    raise ValueError(f"unknown op {name}")


def execute(code):
    """Run straight-line bytecode to STOP (or end); returns the final stack,
    bottom first."""
    stack = []
    pc = 0
    while pc < len(code):
        b = code[pc]
        if 0x60 <= b <= 0x7F:  # PUSH1..PUSH32
            width = b - 0x5F
            stack.append(int.from_bytes(code[pc + 1:pc + 1 + width], "big"))
            pc += 1 + width
            continue
        if 0x80 <= b <= 0x8F:  # DUP1..DUP16
            stack.append(stack[-(b - 0x7F)])
            pc += 1
            continue
        if 0x90 <= b <= 0x9F:  # SWAP1..SWAP16
            d = b - 0x8F
            stack[-1], stack[-1 - d] = stack[-1 - d], stack[-1]
            pc += 1
            continue
        name, pops, pushes = TABLE[b]
        if name == "STOP":
            break
        if name == "POP":
            stack.pop()
            pc += 1
            continue
        args = [stack.pop() for _ in range(pops)]
        stack.append(evaluate(name, args))
        pc += 1
    return stack


_ALU_BYTES = [b for b, (n, _, _) in TABLE.items() if n not in ("STOP", "POP")]


def generate_program(seed):
    """Seeded straight-line program: some pushes, then a run of ALU ops and
    stack shuffles that never underflows, ending in STOP."""
    rng = random.Random(seed)
    code = bytearray()
    depth = 0
    for _ in range(rng.randint(2, 6)):
        width = rng.choice([1, 2, 4, 20, 32])
        code.append(0x5F + width)
        # skew small so comparisons and div/mod hit interesting cases too
        if rng.random() < 0.4:
            word = rng.randint(0, min(300, (1 << (8 * width)) - 1))
        else:
            word = rng.getrandbits(8 * width)
        code.extend(word.to_bytes(width, "big"))
        depth += 1
    for _ in range(rng.randint(3, 16)):
        roll = rng.random()
        if roll < 0.12 and depth >= 2:
            code.append(0x8F + rng.randint(1, min(depth - 1, 16)))  # SWAPk
        elif roll < 0.25 and depth < 24:
            code.append(0x7F + rng.randint(1, min(depth, 16)))  # DUPk
            depth += 1
        elif roll < 0.32 and depth > 1:
            code.append(0x50)  # POP
            depth -= 1
        else:
            b = rng.choice(_ALU_BYTES)
            _, pops, _ = TABLE[b]
            while depth < pops:  # top up instead of rerolling
                code.append(0x60)
                code.append(rng.getrandbits(8))
                depth += 1
            code.append(b)
            depth -= pops - 1
    code.append(0x00)  # STOP
    return bytes(code)
