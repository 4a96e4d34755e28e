"""Linear-sweep EVM disassembler."""

from __future__ import annotations

import re
from dataclasses import dataclass

from axe.errors import EmptyBytecode, MalformedHex
from axe.evm.opcodes import OPCODES


@dataclass(frozen=True)
class Instruction:
    offset: int
    opcode: str
    immediate: bytes | None = None
    # raw byte for opcodes missing from the table (rendered as INVALID)
    raw: int | None = None

    @property
    def value(self) -> int | None:
        if self.immediate is None:
            return 0 if self.opcode == "PUSH0" else None
        return int.from_bytes(self.immediate, "big")

    @property
    def size(self) -> int:
        return 1 + (len(self.immediate) if self.immediate is not None else 0)

    def __str__(self) -> str:
        if self.immediate is not None:
            return f"{self.offset:#06x} {self.opcode} 0x{self.immediate.hex()}"
        return f"{self.offset:#06x} {self.opcode}"


_HEX_RE = re.compile(r"^[0-9a-fA-F]*$")


def parse_hex(text: str) -> bytes:
    """Decode hex bytecode text, tolerating a ``0x`` prefix and surrounding whitespace."""
    text = "".join(text.split())
    if text[:2].lower() == "0x":
        text = text[2:]
    if not _HEX_RE.match(text):
        raise MalformedHex("bytecode contains non-hex characters")
    if len(text) % 2:
        raise MalformedHex(f"odd-length hex string ({len(text)} digits)")
    return bytes.fromhex(text)


def strip_metadata(code: bytes) -> bytes:
    """Remove the CBOR metadata trailer solc appends, when its length suffix is consistent.

    The last two bytes hold the big-endian trailer length; the trailer must start
    with a CBOR map header (0xa1..0xa5) to be recognised.
    """
    if len(code) < 4:
        return code
    length = int.from_bytes(code[-2:], "big")
    start = len(code) - 2 - length
    if length == 0 or start < 0:
        return code
    if 0xA1 <= code[start] <= 0xA5:
        return code[:start]
    return code


def disassemble(bytecode: bytes | str, strip_trailer: bool = False) -> list[Instruction]:
    if isinstance(bytecode, str):
        bytecode = parse_hex(bytecode)
    if not bytecode:
        raise EmptyBytecode("no bytecode to disassemble")
    if strip_trailer:
        bytecode = strip_metadata(bytecode)

    out: list[Instruction] = []
    pc = 0
    n = len(bytecode)
    while pc < n:
        byte = bytecode[pc]
        op = OPCODES.get(byte)
        if op is None:
            out.append(Instruction(pc, "INVALID", raw=byte))
            pc += 1
            continue
        if op.imm:
            # truncated PUSH at the end of code is zero-padded by the EVM; keep the bytes we have
            imm = bytecode[pc + 1 : pc + 1 + op.imm]
            out.append(Instruction(pc, op.name, imm))
            pc += 1 + op.imm
        else:
            out.append(Instruction(pc, op.name, raw=byte if op.name == "INVALID" else None))
            pc += 1
    return out


def assemble_instructions(instructions: list[Instruction]) -> bytes:
    """Re-serialize a disassembly; inverse of :func:`disassemble`."""
    from axe.evm.opcodes import BY_NAME

    buf = bytearray()
    for ins in instructions:
        if ins.raw is not None:
            buf.append(ins.raw)
        else:
            buf.append(BY_NAME[ins.opcode])
        if ins.immediate is not None:
            buf.extend(ins.immediate)
    return bytes(buf)
