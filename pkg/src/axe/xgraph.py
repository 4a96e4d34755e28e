"""Cross-chain control- and data-flow graphs and the semantic inconsistency checks."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from axe.access_control import BRANCH, extract_checks
from axe.bridge import BridgeProgram, ContractProgram
from axe.evm.cfg import FunctionBody
from axe.evm.functions import reachable_blocks
from axe.evm.opcodes import CALLS
from axe.evm.values import slot_family

log = logging.getLogger(__name__)

CF = "CF"
EMITTING = "Emitting"
INFORMING = "Informing"


@dataclass(frozen=True, order=True)
class XNode:
    kind: str  # block, relayer, client
    address: str = ""
    block: int = -1

    def __str__(self) -> str:
        if self.kind == "block":
            return f"{self.address}:{self.block:#x}"
        return self.kind.capitalize()


RELAYER = XNode("relayer")
CLIENT = XNode("client")


@dataclass(frozen=True, order=True)
class XEdge:
    src: XNode
    dst: XNode
    label: str


@dataclass
class XCfg:
    nodes: set[XNode]
    edges: list[XEdge]
    warnings: list[str] = field(default_factory=list)

    def labelled(self, label: str) -> list[XEdge]:
        return [e for e in self.edges if e.label == label]

    def succ(self) -> dict[XNode, list[XNode]]:
        out: dict[XNode, list[XNode]] = {n: [] for n in self.nodes}
        for e in self.edges:
            out[e.src].append(e.dst)
        return out


def build_xcfg(program: BridgeProgram) -> XCfg:
    nodes: set[XNode] = {RELAYER, CLIENT}
    edges: set[XEdge] = set()
    warnings: list[str] = []
    for addr, prog in sorted(program.programs.items()):
        cfg = prog.cfg
        for bid in cfg.blocks:
            if bid not in cfg.dead:
                nodes.add(XNode("block", addr, bid))
        for a, b in cfg.edges:
            edges.add(XEdge(XNode("block", addr, a), XNode("block", addr, b), CF))
        if prog.role == "destination":
            for em in prog.emissions:
                if em.kind == "withdraw":
                    edges.add(XEdge(XNode("block", addr, em.block), CLIENT, EMITTING))
    for pairing in program.descriptor.pairings:
        sites = [
            em for prog in program.contracts("source") for em in prog.emissions if em.topic == pairing.deposit_event
        ]
        for em in sites:
            edges.add(XEdge(XNode("block", em.address, em.block), RELAYER, EMITTING))
        if not sites:
            warnings.append(f"no emission site for {pairing.deposit_event[:10]}...; emitting edge omitted")
        found = program.find_selector(pairing.authorize_selector, "destination")
        if found is None:
            warnings.append(f"authorize selector {pairing.authorize_selector} not found; informing edge omitted")
            continue
        prog, fn = found
        edges.add(XEdge(RELAYER, XNode("block", prog.address, fn.entry), INFORMING))
    return XCfg(nodes, sorted(edges), warnings)


# -- data flow ---------------------------------------------------------------------


class DNode(NamedTuple):
    kind: str  # site, out, param, relayer, client
    address: str = ""
    index: int = -1
    selector: str = ""

    def __str__(self) -> str:
        if self.kind in ("site", "out"):
            return f"{self.kind}:{self.address}@{self.index:#x}"
        if self.kind == "param":
            return f"param:{self.address}:{self.selector}[{self.index}]"
        if self.kind == "relayer":
            return f"Relayer[{self.selector}][{self.index}]"
        return "Client"


DCLIENT = DNode("client")


@dataclass(frozen=True)
class XDfgEdge:
    src: DNode
    dst: DNode
    carried: tuple  # ("local",), ("storage", slot), ("event_arg", i), ("call_arg", j)


@dataclass
class XDfg:
    edges: list[XDfgEdge]
    domain: dict[DNode, str]
    succ: dict[DNode, list[DNode]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        succ: dict[DNode, list[DNode]] = {}
        for e in self.edges:
            succ.setdefault(e.src, []).append(e.dst)
            succ.setdefault(e.dst, [])
        self.succ = {k: sorted(set(v)) for k, v in succ.items()}

    @property
    def nodes(self) -> list[DNode]:
        return sorted(self.succ)

    def reach(self, start) -> set[DNode]:
        seen = set(start)
        todo = deque(start)
        while todo:
            n = todo.popleft()
            for m in self.succ.get(n, ()):
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        return seen


def site_node(prog: ContractProgram, offset: int) -> DNode:
    return DNode("site", prog.address, offset)


def _def_node(prog: ContractProgram, d: int) -> DNode:
    # external calls expose their results through a separate node so that
    # inputs never flow to outputs
    if prog.cfg.instruction(d).opcode in CALLS:
        return DNode("out", prog.address, d)
    return DNode("site", prog.address, d)


def param_sites(prog: ContractProgram, fn: FunctionBody) -> dict[int, list[int]]:
    """CALLDATALOAD offsets reading fixed parameter ``j`` of ``fn``."""
    cfg = prog.cfg
    out: dict[int, list[int]] = {}
    for ins in cfg.sites(fn.blocks, {"CALLDATALOAD"}):
        off = cfg.facts.operand_const(ins.offset, 0)
        if off is not None and off >= 4 and (off - 4) % 32 == 0:
            out.setdefault((off - 4) // 32, []).append(ins.offset)
    return out


def _local_edges(prog: ContractProgram, edges: list[XDfgEdge]) -> None:
    cfg = prog.cfg
    facts = cfg.facts
    live = {ins.offset for ins in cfg.sites()}
    for site in sorted(facts.operands):
        if site not in live:
            continue
        dst = site_node(prog, site)
        for val in facts.operands[site]:
            for d in sorted(val.defs):
                edges.append(XDfgEdge(_def_node(prog, d), dst, ("local",)))
        for word, defs in sorted(facts.mem_reads.get(site, {}).items()):
            for d in sorted(defs):
                edges.append(XDfgEdge(_def_node(prog, d), dst, ("local",)))
    families: dict[int, list[int]] = {}
    stores: dict[int, list[int]] = {}
    for ins in cfg.sites(opcodes={"SLOAD", "SSTORE"}):
        fam = slot_family(cfg, facts.operand_defs(ins.offset, 0))
        if fam is None:
            continue
        (stores if ins.opcode == "SSTORE" else families).setdefault(fam, []).append(ins.offset)
    for fam, writes in sorted(stores.items()):
        for w in writes:
            for r in families.get(fam, ()):
                edges.append(XDfgEdge(site_node(prog, w), site_node(prog, r), ("storage", fam)))


def build_xdfg(xcfg: XCfg, program: BridgeProgram) -> XDfg:
    edges: list[XDfgEdge] = []
    params: set[DNode] = set()
    for addr, prog in sorted(program.programs.items()):
        _local_edges(prog, edges)
        for sel, fn in sorted(prog.cfg.functions.items()):
            for j, sites in sorted(param_sites(prog, fn).items()):
                pnode = DNode("param", addr, j, sel)
                for s in sites:
                    edges.append(XDfgEdge(pnode, site_node(prog, s), ("local",)))
            params.update(DNode("param", addr, j, sel) for j in range(fn.params))
        if prog.role == "destination":
            for em in prog.emissions:
                if em.kind != "withdraw":
                    continue
                for i, defs in enumerate(em.args):
                    for d in sorted(defs):
                        edges.append(XDfgEdge(_def_node(prog, d), DCLIENT, ("event_arg", i)))

    emitting = {(e.src.address, e.src.block) for e in xcfg.labelled(EMITTING) if e.dst == RELAYER}
    informing = {(e.dst.address, e.dst.block) for e in xcfg.labelled(INFORMING)}
    for pairing in program.descriptor.pairings:
        port_sel = pairing.authorize_selector
        ports: set[int] = set()
        for prog in program.contracts("source"):
            for em in prog.emissions:
                if em.topic != pairing.deposit_event or (em.address, em.block) not in emitting:
                    continue
                for i, defs in enumerate(em.args):
                    ports.add(i)
                    for d in sorted(defs):
                        edges.append(XDfgEdge(_def_node(prog, d), DNode("relayer", "", i, port_sel), ("event_arg", i)))
        found = program.find_selector(port_sel, "destination")
        if found is None:
            continue
        dprog, fn = found
        if (dprog.address, fn.entry) not in informing:
            continue
        for i in sorted(ports):
            targets = range(fn.params) if pairing.arg_map is None else [j for e, j in pairing.arg_map if e == i]
            for j in targets:
                edges.append(XDfgEdge(
                    DNode("relayer", "", i, port_sel), DNode("param", dprog.address, j, port_sel), ("call_arg", j)
                ))

    nodes = {e.src for e in edges} | {e.dst for e in edges} | params
    domain = {
        n: n.kind if n.kind in ("relayer", "client") else program.programs[n.address].role for n in nodes
    }
    out = XDfg(sorted(set(edges), key=lambda e: (e.src, e.dst, e.carried)), domain)
    for n in nodes:
        out.succ.setdefault(n, [])
    return out


def dump_graph(xcfg: XCfg, xdfg: XDfg | None = None) -> str:
    lines = [f"{e.src} -> {e.dst} [{e.label}]" for e in xcfg.edges]
    if xdfg is not None:
        for e in xdfg.edges:
            label = ":".join(str(x) for x in e.carried)
            lines.append(f"{e.src} -> {e.dst} [{label}]")
    return "\n".join(lines) + "\n"


# -- semantic checks -----------------------------------------------------------------


@dataclass(frozen=True)
class SemFinding:
    kind: str  # Granularity or Integrity
    address: str
    function: str
    witness: dict
    deposit_functions: tuple[tuple[str, str], ...] = ()


def _deposit_functions(program: BridgeProgram, topic: str) -> list[tuple[str, str]]:
    out = []
    for prog in program.contracts("source"):
        for em in prog.emissions:
            if em.topic == topic:
                for fn in prog.functions_containing(em.block):
                    out.append((prog.address, fn.selector))
    return sorted(set(out))


def check_granularity(xcfg: XCfg, program: BridgeProgram) -> list[SemFinding]:
    """Distinct deposit paths (function, event) that converge on the same destination function."""
    relayed = {(e.src.address, e.src.block) for e in xcfg.labelled(EMITTING) if e.dst == RELAYER}
    informed = {(e.dst.address, e.dst.block) for e in xcfg.labelled(INFORMING)}
    converging: dict[tuple[str, str], set[tuple[str, str, str]]] = {}
    for pairing in program.descriptor.pairings:
        found = program.find_selector(pairing.authorize_selector, "destination")
        if found is None or (found[0].address, found[1].entry) not in informed:
            continue
        dest = (found[0].address, found[1].selector)
        for prog in program.contracts("source"):
            for em in prog.emissions:
                if em.topic != pairing.deposit_event or (em.address, em.block) not in relayed:
                    continue
                for fn in prog.functions_containing(em.block):
                    converging.setdefault(dest, set()).add((prog.address, fn.selector, em.topic))
    out = []
    for (addr, sel), keys in sorted(converging.items()):
        ordered = sorted(keys)
        for i, a in enumerate(ordered):
            for b in ordered[i + 1:]:
                out.append(SemFinding(
                    "Granularity", addr, sel,
                    {
                        "paths": [
                            {"contract": k[0], "deposit_function": k[1], "event": k[2]} for k in (a, b)
                        ],
                    },
                    tuple(sorted({(a[0], a[1]), (b[0], b[1])})),
                ))
    return out


@dataclass(frozen=True)
class WithdrawalVar:
    role: str  # amount or type
    sink: int
    sink_kind: str  # value-call or balance-store
    defs: frozenset[int]


def _reaches(prog: ContractProgram, start: int | None, target: int) -> bool:
    if start is None:
        return False
    return target in reachable_blocks(prog.cfg, start, frozenset())


def withdrawal_variables(prog: ContractProgram, fn: FunctionBody) -> list[WithdrawalVar]:
    cfg = prog.cfg
    out: list[WithdrawalVar] = []
    branches = [c for c in extract_checks(fn, prog) if c.form == BRANCH and c.condition is not None]
    for ins in cfg.sites(fn.blocks, {"CALL", "CALLCODE", "SSTORE"}):
        if ins.opcode == "SSTORE":
            fam = slot_family(cfg, cfg.facts.operand_defs(ins.offset, 0))
            if prog.entry.meaning_of(fam) not in ("balance", "liquidity"):
                continue
            kind, amount = "balance-store", cfg.facts.operand_defs(ins.offset, 1)
        else:
            if cfg.facts.operand_const(ins.offset, 2) == 0:
                continue
            kind, amount = "value-call", cfg.facts.operand_defs(ins.offset, 2)
        out.append(WithdrawalVar("amount", ins.offset, kind, amount))
        sink_block = cfg.block_of(ins.offset)
        for c in branches:
            a = _reaches(prog, c.pass_target, sink_block)
            b = _reaches(prog, c.fail_target, sink_block)
            if a != b:
                out.append(WithdrawalVar("type", ins.offset, kind, frozenset({c.condition})))
    return out


def deposit_values(program: BridgeProgram) -> set[DNode]:
    """Every value defined inside a source-chain function that emits a paired deposit event."""
    topics = {p.deposit_event for p in program.descriptor.pairings}
    out: set[DNode] = set()
    for prog in program.contracts("source"):
        fns = {
            fn.selector: fn for em in prog.emissions if em.topic in topics
            for fn in prog.functions_containing(em.block)
        }
        for sel, fn in sorted(fns.items()):
            for ins in prog.cfg.sites(fn.blocks):
                out.add(_def_node(prog, ins.offset))
            for j in range(fn.params):
                out.add(DNode("param", prog.address, j, sel))
    return out


def withdrawal_functions(program: BridgeProgram) -> list[tuple[ContractProgram, FunctionBody]]:
    paired = {p.authorize_selector for p in program.descriptor.pairings}
    out = []
    for prog in program.contracts("destination"):
        for sel, fn in sorted(prog.cfg.functions.items()):
            if sel in paired or prog.kind_of(sel) in ("authorize", "withdraw"):
                out.append((prog, fn))
    return out


def check_integrity(xdfg: XDfg, program: BridgeProgram) -> list[SemFinding]:
    """Withdrawal amount/type values with no data-flow path from any source-chain deposit value."""
    reached = xdfg.reach(sorted(deposit_values(program)))
    out = []
    for prog, fn in withdrawal_functions(program):
        independent = []
        for var in withdrawal_variables(prog, fn):
            if not any(_def_node(prog, d) in reached for d in var.defs):
                independent.append(var)
        if not independent:
            continue
        deposits = set()
        for pairing in program.descriptor.pairings:
            if pairing.authorize_selector == fn.selector:
                deposits.update(_deposit_functions(program, pairing.deposit_event))
        out.append(SemFinding(
            "Integrity", prog.address, fn.selector,
            {
                "independent": [
                    {"variable": v.role, "sink": f"{v.sink:#x}", "sink_kind": v.sink_kind} for v in independent
                ],
                "sinks": sorted({v.sink for v in independent}),
            },
            tuple(sorted(deposits)),
        ))
    return out
