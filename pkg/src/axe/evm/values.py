"""Backward/forward slicing over the def-use facts of a recovered CFG."""

from __future__ import annotations

from dataclasses import dataclass

from axe.evm.cfg import ContractCfg
from axe.evm.opcodes import CALLS

ECRECOVER = 1

# environment reads that end a backward slice
_LEAVES = frozenset(
    {"CALLER", "ORIGIN", "CALLVALUE", "CALLDATASIZE", "TIMESTAMP", "NUMBER", "CHAINID",
     "SELFBALANCE", "ADDRESS", "COINBASE", "GASLIMIT", "GAS", "GASPRICE", "PREVRANDAO",
     "BASEFEE", "CODESIZE", "RETURNDATASIZE", "MSIZE", "PC"}
)


@dataclass(frozen=True)
class Atom:
    """A leaf of a value's backward slice.

    ``kind`` is one of ``const``, ``calldata``, ``sload``, ``callout`` or an
    environment opcode name.  ``via_key`` marks atoms only reached through a
    storage key (``m[x]`` depends on ``x`` as a lookup key, not as a value).
    """

    kind: str
    site: int
    detail: int | None = None
    via_key: bool = False


def slot_family(cfg: ContractCfg, key_defs: frozenset[int], _depth: int = 0) -> int | None:
    """Base slot of a storage key: the constant itself, or the slot hashed last into a mapping key."""
    if _depth > 8 or not key_defs:
        return None
    found = set()
    for d in key_defs:
        ins = cfg.instruction(d)
        val = cfg.facts.results.get(d)
        if ins.opcode.startswith("PUSH"):
            found.add(ins.value)
        elif val is not None and val.const is not None:
            found.add(val.const)
        elif ins.opcode == "SHA3":
            reads = cfg.facts.mem_reads.get(d, {})
            if not reads:
                return None
            last = max(reads)
            fam = slot_family(cfg, reads[last], _depth + 1)
            if fam is None:
                return None
            found.add(fam)
        elif ins.opcode in ("ADD",):
            # struct member / array element: family of the hashed operand
            fams = {
                slot_family(cfg, cfg.facts.operand_defs(d, i), _depth + 1)
                for i in (0, 1)
                if cfg.facts.operand_const(d, i) is None
            }
            fams.discard(None)
            if len(fams) != 1:
                return None
            found |= fams
        else:
            return None
    return found.pop() if len(found) == 1 else None


def callout_target(cfg: ContractCfg, call_site: int) -> int | None:
    return cfg.facts.operand_const(call_site, 1)


def backward_atoms(cfg: ContractCfg, defs: frozenset[int] | set[int]) -> frozenset[Atom]:
    facts = cfg.facts
    out: set[Atom] = set()
    seen: set[tuple[int, bool]] = set()
    todo = [(d, False) for d in defs]
    while todo:
        d, via_key = todo.pop()
        if (d, via_key) in seen:
            continue
        seen.add((d, via_key))
        ins = cfg.instruction(d)
        op = ins.opcode
        if op.startswith("PUSH"):
            out.add(Atom("const", d, ins.value, via_key))
        elif op == "CALLDATALOAD":
            out.add(Atom("calldata", d, facts.operand_const(d, 0), via_key))
        elif op in ("CALLDATACOPY",):
            out.add(Atom("calldata", d, None, via_key))
        elif op in _LEAVES:
            out.add(Atom(op, d, None, via_key))
        elif op == "SLOAD":
            out.add(Atom("sload", d, slot_family(cfg, facts.operand_defs(d, 0)), via_key))
            todo.extend((k, True) for k in facts.operand_defs(d, 0))
        elif op in CALLS:
            # a memory word written by a call: its return data
            out.add(Atom("callout", d, callout_target(cfg, d), via_key))
        elif op in ("MLOAD", "SHA3"):
            for words in facts.mem_reads.get(d, {}).values():
                todo.extend((w, via_key) for w in words)
            if op == "MLOAD" and not facts.mem_reads.get(d):
                out.add(Atom("memory", d, None, via_key))
        elif op in ("RETURNDATACOPY", "CODECOPY", "EXTCODECOPY"):
            out.add(Atom("memory", d, None, via_key))
        else:
            if op == "BALANCE":
                out.add(Atom("BALANCE", d, None, via_key))
            for val in facts.operands.get(d, ()):
                todo.extend((w, via_key) for w in val.defs)
    return frozenset(out)


def backward_sites(cfg: ContractCfg, defs) -> frozenset[int]:
    """All def sites in the backward slice of ``defs`` (including storage keys)."""
    facts = cfg.facts
    seen: set[int] = set()
    todo = list(defs)
    while todo:
        d = todo.pop()
        if d in seen:
            continue
        seen.add(d)
        todo.extend(facts.all_inputs(d))
    return frozenset(seen)


def _uses_index(cfg: ContractCfg) -> dict[int, tuple[tuple[int, int], ...]]:
    cached = getattr(cfg.facts, "_uses", None)
    if cached is not None:
        return cached
    idx: dict[int, list[tuple[int, int]]] = {}
    for site, ops in cfg.facts.operands.items():
        for i, val in enumerate(ops):
            for d in val.defs:
                idx.setdefault(d, []).append((site, i))
    for site, reads in cfg.facts.mem_reads.items():
        for word, defs in reads.items():
            for d in defs:
                idx.setdefault(d, []).append((site, -1 - word))
    cached = {k: tuple(sorted(v)) for k, v in idx.items()}
    cfg.facts._uses = cached
    return cached


def uses_of(cfg: ContractCfg, d: int) -> tuple[tuple[int, int], ...]:
    """``(use_site, operand)`` pairs; memory uses have operand ``-1 - word_offset``."""
    return _uses_index(cfg).get(d, ())


def identity_closure(cfg: ContractCfg, defs) -> frozenset[int]:
    """``defs`` plus values that only re-mask them (``AND`` with a constant)."""
    out = set(defs)
    todo = list(defs)
    while todo:
        d = todo.pop()
        for use, i in uses_of(cfg, d):
            if i < 0 or use in out:
                continue
            if cfg.instruction(use).opcode == "AND" and cfg.facts.operand_const(use, 1 - i) is not None:
                out.add(use)
                todo.append(use)
    return frozenset(out)


def forward_sites(cfg: ContractCfg, defs) -> frozenset[int]:
    """Every site whose inputs depend on ``defs`` through stack or memory."""
    seen: set[int] = set()
    todo = list(defs)
    while todo:
        d = todo.pop()
        for use, _ in uses_of(cfg, d):
            if use not in seen:
                seen.add(use)
                todo.append(use)
    return frozenset(seen)
