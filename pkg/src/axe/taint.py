"""Taint propagation over the cross-chain data-flow graph and vulnerability trace assembly."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

from axe.bridge import BridgeProgram, ContractProgram
from axe.evm.cfg import FunctionBody
from axe.evm.opcodes import CALLS
from axe.evm.values import slot_family
from axe.xgraph import DCLIENT, DNode, XDfg

log = logging.getLogger(__name__)

SOURCE_OPS = frozenset({"CALLDATALOAD", "CALLDATACOPY", "CALLER", "ORIGIN", "CALLVALUE", "CALLDATASIZE"})
SINK_OPS = CALLS | {"SSTORE", "BALANCE", "ADDRESS"}
ETH_BALANCE = "ETH balance"
MAX_FACTS = 2_000_000


@dataclass(frozen=True, order=True)
class TaintFact:
    origin: DNode
    site: DNode
    # boundary nodes crossed on the way, origin first
    chain: tuple[DNode, ...]


def seed_sources(program: BridgeProgram, xdfg: XDfg | None = None) -> list[TaintFact]:
    seeds = []
    for addr, prog in sorted(program.programs.items()):
        for ins in prog.cfg.sites(opcodes=SOURCE_OPS):
            node = DNode("site", addr, ins.offset)
            seeds.append(TaintFact(node, node, (node,)))
        for sel, fn in sorted(prog.cfg.functions.items()):
            if not fn.is_public:
                continue
            for j in range(fn.params):
                node = DNode("param", addr, j, sel)
                seeds.append(TaintFact(node, node, (node,)))
    return seeds


def propagate(xdfg: XDfg, seeds, max_facts: int = MAX_FACTS, diagnostics: list[str] | None = None):
    """Forward worklist fixpoint; returns ``node -> {TaintFact}`` keeping one fact per (origin, node)."""
    taint: dict[DNode, dict[DNode, TaintFact]] = {}
    work = deque()
    for s in seeds:
        if s.origin not in taint.setdefault(s.site, {}):
            taint[s.site][s.origin] = s
            work.append(s)
    total = len(work)
    while work:
        fact = work.popleft()
        for nxt in xdfg.succ.get(fact.site, ()):
            bucket = taint.setdefault(nxt, {})
            if fact.origin in bucket:
                continue
            chain = fact.chain + (nxt,) if nxt.kind in ("relayer", "param", "client") else fact.chain
            bucket[fact.origin] = TaintFact(fact.origin, nxt, chain)
            work.append(bucket[fact.origin])
            total += 1
            if total > max_facts:
                msg = "taint propagation hit its fact bound; result is partial"
                log.warning(msg)
                if diagnostics is not None:
                    diagnostics.append(msg)
                return {k: set(v.values()) for k, v in taint.items()}
    return {k: set(v.values()) for k, v in taint.items()}


def sinks(program: BridgeProgram) -> list[DNode]:
    out = [DCLIENT]
    for addr, prog in sorted(program.programs.items()):
        out.extend(DNode("site", addr, ins.offset) for ins in prog.cfg.sites(opcodes=SINK_OPS))
    return out


@dataclass(frozen=True)
class AffectedVar:
    name: str
    slot: int | None
    meaning: str | None


@dataclass(frozen=True)
class VulnTrace:
    entry_chain: tuple[tuple[str, str], ...]  # (selector or internal id, display name)
    affected: tuple[AffectedVar, ...]

    def render(self) -> str:
        names = " -> ".join(name for _, name in self.entry_chain)
        return f"{names} -> {{{', '.join(v.name for v in self.affected)}}}"


def _origin_in(prog: ContractProgram, fn: FunctionBody, origin: DNode) -> bool:
    if origin.address != prog.address:
        return False
    if origin.kind == "param":
        return origin.selector == fn.selector
    return prog.cfg.block_of(origin.index) in fn.blocks


def condition_one(prog: ContractProgram, fn: FunctionBody, sites, taint) -> bool:
    """Taint from ``fn``'s own inputs reaches one of the indicator ``sites``."""
    if not fn.is_public:
        return False
    for s in sites:
        for fact in taint.get(DNode("site", prog.address, s), ()):
            if _origin_in(prog, fn, fact.origin):
                return True
    return False


def _sink_var(prog: ContractProgram, site: int) -> AffectedVar | None:
    cfg = prog.cfg
    op = cfg.instruction(site).opcode
    if op == "SSTORE":
        fam = slot_family(cfg, cfg.facts.operand_defs(site, 0))
        hint = prog.entry.storage_hint(fam)
        if hint is not None:
            return AffectedVar(hint.name or hint.meaning, fam, hint.meaning)
        return AffectedVar(f"slot {fam}" if fam is not None else "storage", fam, None)
    if op in ("CALL", "CALLCODE") and cfg.facts.operand_const(site, 2) != 0:
        return AffectedVar(ETH_BALANCE, None, "balance")
    return None


def state_sinks(prog: ContractProgram, fn: FunctionBody) -> list[int]:
    """SSTOREs and value-bearing calls of ``fn`` in block order, callees after their caller's prefix."""
    cfg = prog.cfg
    order = _function_order(prog, fn)
    rank = {b: i for i, (_, blocks) in enumerate(order) for b in blocks}
    sites = [
        ins.offset for ins in cfg.sites(fn.blocks, {"SSTORE", "CALL", "CALLCODE"})
        if _sink_var(prog, ins.offset) is not None
    ]
    return sorted(sites, key=lambda s: (rank.get(cfg.block_of(s), 0), s))


def _function_order(prog: ContractProgram, fn: FunctionBody) -> list[tuple[int | None, frozenset[int]]]:
    """The public body followed by internal callees in first-call order (depth first)."""
    cfg = prog.cfg
    out: list[tuple[int | None, frozenset[int]]] = []
    callee_blocks = set()
    for f in cfg.internal.values():
        callee_blocks |= f.blocks
    own = frozenset(b for b in fn.blocks if b not in callee_blocks)
    out.append((None, own))
    seen = set()

    def visit(blocks):
        for b in sorted(blocks):
            for call in cfg.calls_from.get(b, ()):
                if call.callee in seen or call.callee not in cfg.internal:
                    continue
                seen.add(call.callee)
                body = cfg.internal[call.callee].blocks
                nested = set()
                for other in cfg.internal.values():
                    if other.entry != call.callee and other.entry in body:
                        nested |= other.blocks
                mine = frozenset(body - nested - {x for _, bl in out for x in bl})
                out.append((call.callee, mine))
                visit(body)

    visit(own)
    return out


def entry_chain(prog: ContractProgram, fn: FunctionBody, sink_sites) -> tuple[tuple[str, str], ...]:
    chain = [(fn.selector, prog.function_name(fn.selector))]
    blocks_of = {prog.cfg.block_of(s) for s in sink_sites}
    for callee, blocks in _function_order(prog, fn)[1:]:
        if blocks & blocks_of:
            chain.append((f"internal@{callee:#x}", prog.internal_name(callee)))
    return tuple(chain)


def affected_vars(prog: ContractProgram, sites) -> tuple[AffectedVar, ...]:
    out: list[AffectedVar] = []
    for s in sites:
        v = _sink_var(prog, s)
        if v is not None and v not in out:
            out.append(v)
    return tuple(out)


@dataclass(frozen=True)
class Indicator:
    """A detector finding located at a public function, with its candidate sink sites."""

    address: str
    function: str
    sites: tuple[int, ...]
    prefix: tuple[tuple[str, str], ...] = ()


def discover_trace(program: BridgeProgram, indicator: Indicator, taint) -> VulnTrace | None:
    """Condition-1 (taint from the function's inputs reaches the indicator) then Condition-2 (affected state)."""
    prog = program.programs[indicator.address]
    fn = prog.cfg.functions.get(indicator.function)
    if fn is None or not condition_one(prog, fn, indicator.sites, taint):
        return None
    reached = [
        s for s in indicator.sites
        if any(_origin_in(prog, fn, f.origin) for f in taint.get(DNode("site", prog.address, s), ()))
    ]
    affected = affected_vars(prog, reached)
    if not affected:
        return None
    chain = indicator.prefix + entry_chain(prog, fn, [s for s in reached if _sink_var(prog, s)])
    return VulnTrace(chain, affected)


def discover_traces(program: BridgeProgram, indicators, taint) -> list[VulnTrace | None]:
    return [discover_trace(program, ind, taint) for ind in indicators]
