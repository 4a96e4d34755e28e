"""Split a recovered CFG into public functions (via the selector dispatcher) and internal functions."""

from __future__ import annotations

import dataclasses
import logging

from axe.evm.cfg import ContractCfg, FunctionBody, InternalFunction

log = logging.getLogger(__name__)

FALLBACK = "fallback"
ADDRESS_MASK = (1 << 160) - 1


def format_selector(value: int) -> str:
    return f"0x{value:08x}"


def _selector_compare(cfg: ContractCfg, jumpi_site: int) -> tuple[str, int] | None:
    """``(kind, selector)`` when the JUMPI condition compares calldata's selector with a PUSH4."""
    facts = cfg.facts
    for cond in facts.operand_defs(jumpi_site, 1):
        ins = cfg.instruction(cond)
        if ins.opcode not in ("EQ", "GT", "LT"):
            continue
        for idx in (0, 1):
            for d in facts.operand_defs(cond, idx):
                src = cfg.instruction(d)
                if src.opcode == "PUSH4":
                    return ins.opcode, src.value
    return None


def _is_size_check(cfg: ContractCfg, jumpi_site: int) -> bool:
    facts = cfg.facts
    for cond in facts.operand_defs(jumpi_site, 1):
        ins = cfg.instruction(cond)
        if ins.opcode in ("LT", "GT", "ISZERO"):
            for idx in range(len(facts.operands.get(cond, ()))):
                if any(cfg.instruction(d).opcode == "CALLDATASIZE" for d in facts.operand_defs(cond, idx)):
                    return True
    return False


def reachable_blocks(cfg: ContractCfg, start: int, stop: frozenset[int] | set[int]) -> frozenset[int]:
    """Blocks reachable from ``start`` including callees, never following a return edge."""
    seen = {start}
    todo = [start]
    while todo:
        b = todo.pop()
        nxt = set(cfg.local_succ(b)) | {c.callee for c in cfg.calls_from.get(b, ())}
        for s in sorted(nxt):
            if s not in seen and s not in stop:
                seen.add(s)
                todo.append(s)
    return frozenset(seen)


def _param_info(cfg: ContractCfg, blocks: frozenset[int]) -> tuple[int, tuple[str, ...]]:
    facts = cfg.facts
    kinds: dict[int, str] = {}
    uses_of: dict[int, list[tuple[int, int]]] = {}
    for site, ops in facts.operands.items():
        for idx, val in enumerate(ops):
            for d in val.defs:
                uses_of.setdefault(d, []).append((site, idx))
    for ins in cfg.sites(blocks, {"CALLDATALOAD"}):
        off = facts.operand_const(ins.offset, 0)
        if off is None or off < 4 or (off - 4) % 32:
            continue
        j = (off - 4) // 32
        kind = "word"
        for use, idx in uses_of.get(ins.offset, ()):
            op = cfg.instruction(use).opcode
            other = facts.operand_const(use, 1 - idx) if op == "AND" else None
            if op == "AND" and other == ADDRESS_MASK:
                kind = "address"
            elif op == "ADD" and any(
                cfg.instruction(u).opcode == "CALLDATALOAD" for u, _ in uses_of.get(use, ())
            ):
                kind = "dynamic"
        if kinds.get(j) in (None, "word"):
            kinds[j] = kind
    if not kinds:
        return 0, ()
    n = max(kinds) + 1
    return n, tuple(kinds.get(j, "word") for j in range(n))


def partition_functions(cfg: ContractCfg, selector_hints=()) -> ContractCfg:
    """Map each dispatched selector to its function body and recover internal functions.

    Hinted selectors absent from the dispatcher only produce a warning.
    """
    dispatcher: set[int] = set()
    entries: dict[str, int] = {}
    todo = [cfg.entry]
    while todo:
        bid = todo.pop()
        if bid in dispatcher or bid in cfg.dead:
            continue
        dispatcher.add(bid)
        block = cfg.blocks[bid]
        last = block.last
        if last.opcode == "JUMPI":
            cmp = _selector_compare(cfg, last.offset)
            targets = [t for t in cfg.succ[bid] if t != _fallthrough(cfg, bid)]
            fall = _fallthrough(cfg, bid)
            if cmp is not None and cmp[0] == "EQ":
                for t in targets:
                    entries.setdefault(format_selector(cmp[1]), t)
                if fall is not None:
                    todo.append(fall)
            elif cmp is not None or _is_size_check(cfg, last.offset):
                todo.extend(cfg.succ[bid])
        elif block.terminator in ("fallthrough",) and cfg.succ[bid]:
            todo.extend(cfg.succ[bid])

    warnings = list(cfg.diagnostics)
    functions: dict[str, FunctionBody] = {}
    visibility: dict[str, str] = {}
    if not entries:
        blocks = reachable_blocks(cfg, cfg.entry, set())
        n, kinds = _param_info(cfg, blocks)
        functions[FALLBACK] = FunctionBody(FALLBACK, cfg.entry, blocks, n, kinds, True)
        visibility[FALLBACK] = "public-entry"
        dispatcher = set()
    else:
        stop = frozenset(dispatcher)
        for sel, entry in sorted(entries.items()):
            blocks = reachable_blocks(cfg, entry, stop)
            n, kinds = _param_info(cfg, blocks)
            functions[sel] = FunctionBody(sel, entry, blocks, n, kinds, True)
            visibility[sel] = "public-entry"

    for hint in selector_hints:
        if hint not in functions:
            msg = f"selector {hint} hinted but not found in dispatcher"
            log.warning(msg)
            warnings.append(msg)

    returns_of: dict[int, set[int]] = {}
    for call in cfg.calls:
        returns_of.setdefault(call.callee, set()).add(call.return_to)
    internal = {}
    for callee, rets in sorted(returns_of.items()):
        internal[callee] = InternalFunction(callee, reachable_blocks(cfg, callee, frozenset(rets)))
        visibility.setdefault(f"internal@{callee:#x}", "internal")

    return dataclasses.replace(
        cfg,
        functions=functions,
        visibility=visibility,
        internal=internal,
        dispatcher=frozenset(dispatcher),
        diagnostics=tuple(dict.fromkeys(warnings)),
    )


def _fallthrough(cfg: ContractCfg, bid: int) -> int | None:
    last = cfg.blocks[bid].last
    nxt = last.offset + last.size
    return nxt if nxt in cfg.blocks and (bid, nxt) in cfg.edges else None
