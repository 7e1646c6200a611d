"""Runtime bytecode decoding and basic-block recovery.

Decoding is total: unknown bytes decode as INVALID, a PUSH whose payload
runs off the end is zero-padded. Jump edges are not resolved here; blocks
are the static skeleton and the engine discovers edges while executing.
"""

from dataclasses import dataclass

# Shanghai-era opcode table (PUSH0 included), mnemonic keyed by byte.
OPCODES = {
    0x00: "STOP", 0x01: "ADD", 0x02: "MUL", 0x03: "SUB", 0x04: "DIV",
    0x05: "SDIV", 0x06: "MOD", 0x07: "SMOD", 0x08: "ADDMOD", 0x09: "MULMOD",
    0x0A: "EXP", 0x0B: "SIGNEXTEND",
    0x10: "LT", 0x11: "GT", 0x12: "SLT", 0x13: "SGT", 0x14: "EQ",
    0x15: "ISZERO", 0x16: "AND", 0x17: "OR", 0x18: "XOR", 0x19: "NOT",
    0x1A: "BYTE", 0x1B: "SHL", 0x1C: "SHR", 0x1D: "SAR",
    0x20: "KECCAK256",
    0x30: "ADDRESS", 0x31: "BALANCE", 0x32: "ORIGIN", 0x33: "CALLER",
    0x34: "CALLVALUE", 0x35: "CALLDATALOAD", 0x36: "CALLDATASIZE",
    0x37: "CALLDATACOPY", 0x38: "CODESIZE", 0x39: "CODECOPY",
    0x3A: "GASPRICE", 0x3B: "EXTCODESIZE", 0x3C: "EXTCODECOPY",
    0x3D: "RETURNDATASIZE", 0x3E: "RETURNDATACOPY", 0x3F: "EXTCODEHASH",
    0x40: "BLOCKHASH", 0x41: "COINBASE", 0x42: "TIMESTAMP", 0x43: "NUMBER",
    0x44: "PREVRANDAO", 0x45: "GASLIMIT", 0x46: "CHAINID", 0x47: "SELFBALANCE",
    0x48: "BASEFEE",
    0x50: "POP", 0x51: "MLOAD", 0x52: "MSTORE", 0x53: "MSTORE8",
    0x54: "SLOAD", 0x55: "SSTORE", 0x56: "JUMP", 0x57: "JUMPI",
    0x58: "PC", 0x59: "MSIZE", 0x5A: "GAS", 0x5B: "JUMPDEST",
    0x5F: "PUSH0",
    0xA0: "LOG0", 0xA1: "LOG1", 0xA2: "LOG2", 0xA3: "LOG3", 0xA4: "LOG4",
    0xF0: "CREATE", 0xF1: "CALL", 0xF2: "CALLCODE", 0xF3: "RETURN",
    0xF4: "DELEGATECALL", 0xF5: "CREATE2",
    0xFA: "STATICCALL", 0xFD: "REVERT", 0xFE: "INVALID", 0xFF: "SELFDESTRUCT",
}
for _n in range(1, 33):
    OPCODES[0x5F + _n] = f"PUSH{_n}"
for _n in range(1, 17):
    OPCODES[0x7F + _n] = f"DUP{_n}"
    OPCODES[0x8F + _n] = f"SWAP{_n}"

TERMINATORS = {
    "JUMP": "jump",
    "JUMPI": "conditional-jump",
    "STOP": "stop",
    "RETURN": "return",
    "REVERT": "revert",
    "INVALID": "invalid",
    "SELFDESTRUCT": "selfdestruct",
}


@dataclass(frozen=True)
class Instruction:
    pc: int
    opcode: int
    mnemonic: str
    push_payload: bytes | None
    source_index: int  # position in the instruction stream, for source-map lookup
    raw_len: int = 0  # payload bytes actually present in the code (pre zero-pad)

    @property
    def push_value(self):
        return int.from_bytes(self.push_payload, "big") if self.push_payload else None

    def __str__(self):
        if self.push_payload is not None:
            return f"{self.pc:#06x} {self.mnemonic} 0x{self.push_payload.hex()}"
        return f"{self.pc:#06x} {self.mnemonic}"


@dataclass
class BasicBlock:
    start_pc: int
    end_pc: int
    instructions: list
    terminator: str


def disassemble(bytecode: bytes):
    """Decode every byte exactly once; returns the instruction sequence."""
    out = []
    pc = 0
    idx = 0
    n = len(bytecode)
    while pc < n:
        op = bytecode[pc]
        mnem = OPCODES.get(op)
        payload = None
        raw_len = 0
        width = 1
        if mnem is None:
            mnem = "INVALID"
        elif 0x60 <= op <= 0x7F:
            size = op - 0x5F
            payload = bytes(bytecode[pc + 1:pc + 1 + size])
            raw_len = len(payload)
            if raw_len < size:
                # truncated push at end of code: zero-pad to the right,
                # matching the EVM's implicit zero extension of code
                payload = payload + b"\x00" * (size - raw_len)
            width = 1 + size
        out.append(Instruction(pc, op, mnem, payload, idx, raw_len))
        pc += width
        idx += 1
    return out


def jumpdest_set(instructions):
    """pcs that hold a real JUMPDEST opcode (push payload bytes are not code)."""
    return {ins.pc for ins in instructions if ins.mnemonic == "JUMPDEST"}


def partition_blocks(instructions):
    """Split the stream at JUMPDESTs and after terminators."""
    blocks = []
    current = []
    for ins in instructions:
        if ins.mnemonic == "JUMPDEST" and current:
            blocks.append(_close_block(current, "fallthrough"))
            current = []
        current.append(ins)
        term = TERMINATORS.get(ins.mnemonic)
        if term is not None:
            blocks.append(_close_block(current, term))
            current = []
        elif ins.mnemonic == "INVALID":
            blocks.append(_close_block(current, "invalid"))
            current = []
    if current:
        # code that runs off the end halts like STOP
        blocks.append(_close_block(current, "stop"))
    return blocks


def _close_block(instrs, terminator):
    return BasicBlock(instrs[0].pc, instrs[-1].pc, list(instrs), terminator)


def reserialize(instructions):
    """Inverse of disassemble, used by the round-trip property test."""
    out = bytearray()
    for ins in instructions:
        out.append(ins.opcode)
        if ins.push_payload is not None:
            out += ins.push_payload[:ins.raw_len]
    return bytes(out)
