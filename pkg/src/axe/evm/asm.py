"""Tiny two-pass EVM assembler used to build analysis fixtures.

Source is a sequence of lines (or one newline-separated string)::

    start:              ; label, emits a JUMPDEST
    PUSH 0x04           ; minimal-width push
    PUSH4 0xdeadbeef    ; explicit width
    PUSH :start         ; label reference, always PUSH2
    JUMP

``;`` starts a comment.  Labels resolve to the offset of their JUMPDEST.
"""

from __future__ import annotations

from collections.abc import Iterable

from axe.evm.opcodes import BY_NAME


class AsmError(ValueError):
    pass


def _tokens(source: str | Iterable[str]) -> list[str]:
    lines = source.splitlines() if isinstance(source, str) else list(source)
    out = []
    for line in lines:
        line = line.split(";", 1)[0].strip()
        if line:
            out.append(line)
    return out


def _encode_push(width: int | None, value: int) -> bytes:
    if value < 0:
        value &= (1 << 256) - 1
    need = max(1, (value.bit_length() + 7) // 8)
    width = width or need
    if need > width or width > 32:
        raise AsmError(f"value {value:#x} does not fit PUSH{width}")
    return bytes([0x5F + width]) + value.to_bytes(width, "big")


def assemble(source: str | Iterable[str]) -> bytes:
    lines = _tokens(source)
    labels = label_offsets(lines)
    buf = bytearray()
    for line in lines:
        if line.endswith(":"):
            buf.append(BY_NAME["JUMPDEST"])
            continue
        parts = line.split()
        mnem = parts[0].upper()
        if mnem.startswith("PUSH") and mnem != "PUSH0":
            arg = parts[1]
            if arg.startswith(":"):
                target = labels.get(arg[1:])
                if target is None:
                    raise AsmError(f"undefined label {arg[1:]}")
                buf += _encode_push(2, target)
            else:
                width = int(mnem[4:]) if mnem[4:] else None
                buf += _encode_push(width, int(arg, 0))
        else:
            buf.append(BY_NAME[mnem])
    return bytes(buf)


def label_offsets(source: str | Iterable[str]) -> dict[str, int]:
    """Offsets of every label in ``source`` (the JUMPDEST position)."""
    lines = _tokens(source)
    labels: dict[str, int] = {}
    pc = 0
    for line in lines:
        if line.endswith(":"):
            if line[:-1] in labels:
                raise AsmError(f"duplicate label {line[:-1]}")
            labels[line[:-1]] = pc
            pc += 1
            continue
        parts = line.split()
        mnem = parts[0].upper()
        if mnem.startswith("PUSH") and mnem != "PUSH0":
            if len(parts) != 2:
                raise AsmError(f"push needs one operand: {line!r}")
            if parts[1].startswith(":"):
                pc += 3
            else:
                width = int(mnem[4:]) if mnem[4:] else None
                pc += len(_encode_push(width, int(parts[1], 0)))
        else:
            if mnem not in BY_NAME:
                raise AsmError(f"unknown mnemonic {mnem}")
            pc += 1
    return labels
