"""Control-flow recovery by abstract stack simulation.

Every stack slot carries an :class:`AbsVal`: the set of instruction offsets that
may have produced it plus a bounded set of constants it may hold.  Running the
simulation to a fixpoint over basic blocks gives both the jump targets and the
def-use facts (stack operands and constant-offset memory words) that the later
analyses are built on.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import product

from axe.evm.disasm import Instruction
from axe.evm.opcodes import CALLS, HALTING, TERMINATORS, info

log = logging.getLogger(__name__)

WORD = 1 << 256
MASK = WORD - 1
CONST_BOUND = 16
MAX_STACK = 1024
MAX_VISITS = 200_000


@dataclass(frozen=True)
class AbsVal:
    defs: frozenset[int] = frozenset()
    consts: frozenset[int] | None = None

    @property
    def const(self) -> int | None:
        if self.consts is not None and len(self.consts) == 1:
            return next(iter(self.consts))
        return None

    def join(self, other: AbsVal) -> AbsVal:
        if self == other:
            return self
        if self.consts is None or other.consts is None:
            consts = None
        else:
            consts = self.consts | other.consts
            if len(consts) > CONST_BOUND:
                consts = None
        return AbsVal(self.defs | other.defs, consts)


UNKNOWN = AbsVal()


@dataclass
class BasicBlock:
    id: int
    instructions: tuple[Instruction, ...]
    terminator: str = "fallthrough"

    @property
    def start(self) -> int:
        return self.instructions[0].offset

    @property
    def last(self) -> Instruction:
        return self.instructions[-1]

    def offsets(self) -> range:
        last = self.last
        return range(self.start, last.offset + last.size)


@dataclass(frozen=True)
class CallSite:
    block: int
    site: int
    callee: int
    return_to: int


@dataclass
class FunctionBody:
    selector: str
    entry: int
    blocks: frozenset[int]
    params: int = 0
    param_kinds: tuple[str, ...] = ()
    is_public: bool = True
    name: str = ""


@dataclass
class InternalFunction:
    entry: int
    blocks: frozenset[int]
    name: str = ""


@dataclass
class ValueFacts:
    """Def-use facts collected during simulation, keyed by instruction offset."""

    operands: dict[int, tuple[AbsVal, ...]] = field(default_factory=dict)
    # constant-offset memory words read by the instruction: word offset -> defs
    mem_reads: dict[int, dict[int, frozenset[int]]] = field(default_factory=dict)
    results: dict[int, AbsVal] = field(default_factory=dict)
    # stack below a JUMP target (top first), for call/return recognition
    jump_stack: dict[int, tuple[AbsVal, ...]] = field(default_factory=dict)

    def operand_defs(self, site: int, index: int) -> frozenset[int]:
        ops = self.operands.get(site)
        if ops is None or index >= len(ops):
            return frozenset()
        return ops[index].defs

    def operand_const(self, site: int, index: int) -> int | None:
        ops = self.operands.get(site)
        if ops is None or index >= len(ops):
            return None
        return ops[index].const

    def all_inputs(self, site: int) -> frozenset[int]:
        """Every def site feeding ``site`` through the stack or memory."""
        out: set[int] = set()
        for val in self.operands.get(site, ()):
            out |= val.defs
        for defs in self.mem_reads.get(site, {}).values():
            out |= defs
        return frozenset(out)


@dataclass
class ContractCfg:
    instructions: tuple[Instruction, ...]
    blocks: dict[int, BasicBlock]
    edges: frozenset[tuple[int, int]]
    entry: int
    dead: frozenset[int]
    facts: ValueFacts
    calls: tuple[CallSite, ...] = ()
    functions: dict[str, FunctionBody] = field(default_factory=dict)
    visibility: dict[str, str] = field(default_factory=dict)
    internal: dict[int, InternalFunction] = field(default_factory=dict)
    dispatcher: frozenset[int] = frozenset()
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self._by_offset = {ins.offset: ins for ins in self.instructions}
        self._block_of = {}
        for b in self.blocks.values():
            for ins in b.instructions:
                self._block_of[ins.offset] = b.id
        succ: dict[int, list[int]] = {b: [] for b in self.blocks}
        pred: dict[int, list[int]] = {b: [] for b in self.blocks}
        for a, b in sorted(self.edges):
            succ[a].append(b)
            pred[b].append(a)
        self.succ = {k: tuple(v) for k, v in succ.items()}
        self.pred = {k: tuple(v) for k, v in pred.items()}
        self.calls_from: dict[int, tuple[CallSite, ...]] = {}
        for c in self.calls:
            self.calls_from[c.block] = self.calls_from.get(c.block, ()) + (c,)
        self.return_edges = self._return_edges()

    def _return_edges(self) -> frozenset[tuple[int, int]]:
        """Edges taken by a JUMP whose target arrived through the stack and lands on a return address."""
        rets = {c.return_to for c in self.calls}
        out = set()
        for a, b in self.edges:
            if b not in rets:
                continue
            last = self.blocks[a].last
            if last.opcode != "JUMP":
                continue
            target = self.facts.operands.get(last.offset, (UNKNOWN,))[0]
            span = self.blocks[a].offsets()
            if not target.defs or not all(d in span for d in target.defs):
                out.add((a, b))
        return frozenset(out)

    def local_succ(self, bid: int) -> tuple[int, ...]:
        """Successors with internal calls summarised: call blocks step to their return address."""
        out = [s for s in self.succ.get(bid, ()) if (bid, s) not in self.return_edges]
        for c in self.calls_from.get(bid, ()):
            if c.return_to not in out:
                out.append(c.return_to)
        return tuple(out)

    def instruction(self, offset: int) -> Instruction:
        return self._by_offset[offset]

    def block_of(self, offset: int) -> int:
        return self._block_of[offset]

    def sites(self, blocks=None, opcodes=None):
        """Instructions in ``blocks`` (default: all live blocks), optionally filtered by mnemonic."""
        ids = sorted(self.blocks) if blocks is None else sorted(blocks)
        for bid in ids:
            if blocks is None and bid in self.dead:
                continue
            for ins in self.blocks[bid].instructions:
                if opcodes is None or ins.opcode in opcodes:
                    yield ins

    @property
    def jumpdests(self) -> frozenset[int]:
        return frozenset(i.offset for i in self.instructions if i.opcode == "JUMPDEST")


def split_blocks(instructions: list[Instruction]) -> dict[int, BasicBlock]:
    blocks: dict[int, BasicBlock] = {}
    current: list[Instruction] = []
    for ins in instructions:
        if ins.opcode == "JUMPDEST" and current:
            blocks[current[0].offset] = BasicBlock(current[0].offset, tuple(current))
            current = []
        current.append(ins)
        if ins.opcode in TERMINATORS:
            blocks[current[0].offset] = BasicBlock(current[0].offset, tuple(current))
            current = []
    if current:
        blocks[current[0].offset] = BasicBlock(current[0].offset, tuple(current))
    return blocks


def _signed(x: int) -> int:
    return x - WORD if x >> 255 else x


def _fold(op: str, args: tuple[int, ...]) -> int | None:
    if op == "ADD":
        return (args[0] + args[1]) & MASK
    if op == "SUB":
        return (args[0] - args[1]) & MASK
    if op == "MUL":
        return (args[0] * args[1]) & MASK
    if op == "DIV":
        return args[0] // args[1] if args[1] else 0
    if op == "MOD":
        return args[0] % args[1] if args[1] else 0
    if op == "AND":
        return args[0] & args[1]
    if op == "OR":
        return args[0] | args[1]
    if op == "XOR":
        return args[0] ^ args[1]
    if op == "NOT":
        return ~args[0] & MASK
    if op == "SHL":
        return (args[1] << args[0]) & MASK if args[0] < 256 else 0
    if op == "SHR":
        return args[1] >> args[0] if args[0] < 256 else 0
    if op == "EQ":
        return int(args[0] == args[1])
    if op == "LT":
        return int(args[0] < args[1])
    if op == "GT":
        return int(args[0] > args[1])
    if op == "SLT":
        return int(_signed(args[0]) < _signed(args[1]))
    if op == "SGT":
        return int(_signed(args[0]) > _signed(args[1]))
    if op == "ISZERO":
        return int(args[0] == 0)
    if op == "BYTE":
        return (args[1] >> (8 * (31 - args[0]))) & 0xFF if args[0] < 32 else 0
    return None


FOLDABLE = frozenset(
    {"ADD", "SUB", "MUL", "DIV", "MOD", "AND", "OR", "XOR", "NOT", "SHL", "SHR",
     "EQ", "LT", "GT", "SLT", "SGT", "ISZERO", "BYTE"}
)


def fold_consts(op: str, operands: list[AbsVal]) -> frozenset[int] | None:
    sets = [v.consts for v in operands]
    if op not in FOLDABLE or any(s is None for s in sets):
        return None
    size = 1
    for s in sets:
        size *= len(s)
    if size == 0 or size > CONST_BOUND:
        return None
    out = frozenset(_fold(op, combo) for combo in product(*[sorted(s) for s in sets]))
    return out if len(out) <= CONST_BOUND else None


@dataclass(frozen=True)
class _State:
    stack: tuple[AbsVal, ...]
    mem: tuple[tuple[int, AbsVal], ...]

    def join(self, other: _State) -> _State:
        n = min(len(self.stack), len(other.stack))
        a = self.stack[len(self.stack) - n :]
        b = other.stack[len(other.stack) - n :]
        stack = tuple(x.join(y) for x, y in zip(a, b))
        ma, mb = dict(self.mem), dict(other.mem)
        mem = tuple(sorted((k, ma[k].join(mb[k])) for k in ma.keys() & mb.keys()))
        return _State(stack, mem)


def _kill_words(mem: dict[int, AbsVal], start: int, length: int) -> None:
    for k in [k for k in mem if k < start + length and start < k + 32]:
        del mem[k]


class _Simulator:
    def __init__(self, blocks: dict[int, BasicBlock], jumpdests: frozenset[int]):
        self.blocks = blocks
        self.jumpdests = jumpdests
        self.order = sorted(blocks)
        self.next_block = {a: b for a, b in zip(self.order, self.order[1:])}
        self.facts = ValueFacts()
        self.diagnostics: list[str] = []

    def _record(self, table: dict, site: int, values: tuple) -> None:
        old = table.get(site)
        if old is None or len(old) != len(values):
            table[site] = values
        else:
            table[site] = tuple(x.join(y) for x, y in zip(old, values))

    def _record_mem(self, site: int, mem: dict[int, AbsVal], start: int | None, length: int | None) -> None:
        if start is None or length is None or length > 32 * 64:
            return
        reads = self.facts.mem_reads.setdefault(site, {})
        for word in range(start, start + length, 32):
            if word in mem:
                reads[word] = reads.get(word, frozenset()) | mem[word].defs

    def run_block(self, block: BasicBlock, state: _State):
        stack = list(state.stack)
        mem = dict(state.mem)
        facts = self.facts

        def pop() -> AbsVal:
            return stack.pop() if stack else UNKNOWN

        for ins in block.instructions:
            op = ins.opcode
            site = ins.offset
            if op.startswith("PUSH"):
                stack.append(AbsVal(frozenset({site}), frozenset({ins.value or 0})))
            elif op.startswith("DUP"):
                n = int(op[3:])
                stack.append(stack[-n] if len(stack) >= n else UNKNOWN)
            elif op.startswith("SWAP"):
                n = int(op[4:])
                while len(stack) < n + 1:
                    stack.insert(0, UNKNOWN)
                stack[-1], stack[-1 - n] = stack[-1 - n], stack[-1]
            elif op == "POP":
                pop()
            elif op == "JUMPDEST":
                pass
            else:
                spec = info(op)
                args = [pop() for _ in range(spec.pops)]
                self._record(facts.operands, site, tuple(args))
                consts = [a.const for a in args]
                if op == "MSTORE":
                    if consts[0] is not None:
                        _kill_words(mem, consts[0], 32)
                        mem[consts[0]] = args[1]
                    else:
                        mem.clear()
                elif op == "MSTORE8":
                    if consts[0] is not None:
                        _kill_words(mem, consts[0], 1)
                    else:
                        mem.clear()
                elif op == "MLOAD":
                    self._record_mem(site, mem, consts[0], 32)
                elif op in ("SHA3", "RETURN", "REVERT"):
                    self._record_mem(site, mem, consts[0], consts[1])
                elif op.startswith("LOG"):
                    self._record_mem(site, mem, consts[0], consts[1])
                elif op in ("CALLDATACOPY", "CODECOPY", "RETURNDATACOPY", "EXTCODECOPY"):
                    dest, length = (consts[1], consts[3]) if op == "EXTCODECOPY" else (consts[0], consts[2])
                    if dest is not None and length is not None:
                        _kill_words(mem, dest, length)
                        for word in range(dest, dest + length, 32):
                            mem[word] = AbsVal(frozenset({site}))
                    else:
                        mem.clear()
                elif op == "MCOPY":
                    mem.clear()
                elif op in CALLS:
                    base = 3 if op in ("CALL", "CALLCODE") else 2
                    self._record_mem(site, mem, consts[base], consts[base + 1])
                    out, out_len = consts[base + 2], consts[base + 3]
                    if out is not None and out_len is not None:
                        _kill_words(mem, out, out_len)
                        for word in range(out, out + out_len, 32):
                            mem[word] = AbsVal(frozenset({site}))
                    else:
                        mem.clear()
                elif op == "JUMP":
                    facts.jump_stack[site] = tuple(reversed(stack[-16:]))
                if spec.pushes:
                    result = AbsVal(frozenset({site}), fold_consts(op, args))
                    old = facts.results.get(site)
                    facts.results[site] = result if old is None else old.join(result)
                    stack.append(result)
            if len(stack) > MAX_STACK:
                del stack[: len(stack) - MAX_STACK]

        out = _State(tuple(stack), tuple(sorted(mem.items())))
        return out

    def successors(self, block: BasicBlock) -> tuple[list[int], str]:
        last = block.last
        op = last.opcode
        fall = self.next_block.get(block.id)
        if op in HALTING:
            return [], op.lower()
        if op not in ("JUMP", "JUMPI"):
            return ([fall] if fall is not None else []), "fallthrough"
        target = self.facts.operands.get(last.offset, (UNKNOWN,))[0]
        succ: list[int] = []
        kind = op.lower()
        if target.consts is None or not target.consts:
            kind = "unresolved"
            self.diagnostics.append(f"unresolved jump at {last.offset:#x}")
        else:
            good = sorted(t for t in target.consts if t in self.jumpdests)
            if len(good) < len(target.consts):
                bad = sorted(t for t in target.consts if t not in self.jumpdests)
                self.diagnostics.append(
                    f"jump at {last.offset:#x} to non-JUMPDEST {', '.join(hex(b) for b in bad)}"
                )
            if not good and op == "JUMP":
                kind = "invalid"
            succ.extend(good)
        if op == "JUMPI" and fall is not None:
            succ.append(fall)
        return succ, kind

    def run(self, entry: int):
        states: dict[int, _State] = {entry: _State((), ())}
        succs: dict[int, list[int]] = {}
        kinds: dict[int, str] = {}
        work = deque([entry])
        queued = {entry}
        visits = 0
        while work:
            bid = work.popleft()
            queued.discard(bid)
            visits += 1
            if visits > MAX_VISITS:
                self.diagnostics.append("abstract simulation hit its visit bound; CFG may be partial")
                break
            block = self.blocks[bid]
            out = self.run_block(block, states[bid])
            nxt, kind = self.successors(block)
            succs[bid] = nxt
            kinds[bid] = kind
            for s in nxt:
                old = states.get(s)
                new = out if old is None else old.join(out)
                if new != old:
                    states[s] = new
                    if s not in queued:
                        work.append(s)
                        queued.add(s)
        return succs, kinds, frozenset(states)


def recover_cfg(instructions: list[Instruction]) -> ContractCfg:
    instructions = list(instructions)
    blocks = split_blocks(instructions)
    jumpdests = frozenset(i.offset for i in instructions if i.opcode == "JUMPDEST")
    sim = _Simulator(blocks, jumpdests)
    entry = instructions[0].offset if instructions else 0
    succs, kinds, reached = sim.run(entry)

    for bid, kind in kinds.items():
        blocks[bid].terminator = kind
    for bid, block in blocks.items():
        if bid not in kinds:
            op = block.last.opcode
            block.terminator = op.lower() if op in HALTING or op in ("JUMP", "JUMPI") else "fallthrough"
    edges = frozenset((a, b) for a, bs in succs.items() for b in bs)
    dead = frozenset(b for b in blocks if b not in reached)
    calls = _find_calls(blocks, sim.facts, edges, jumpdests)
    # unique diagnostics, stable order
    diags = tuple(dict.fromkeys(sim.diagnostics))
    for d in diags:
        log.debug(d)
    return ContractCfg(
        instructions=tuple(instructions),
        blocks=blocks,
        edges=edges,
        entry=entry,
        dead=dead,
        facts=sim.facts,
        calls=calls,
        diagnostics=diags,
    )


def _find_calls(blocks, facts: ValueFacts, edges, jumpdests) -> tuple[CallSite, ...]:
    """Recognise internal jump-calls: ``PUSH ret ... PUSH fn JUMP`` inside one block.

    The target must be pushed in the jumping block and a distinct JUMPDEST
    constant pushed in the same block must sit below it on the stack.
    """
    out = []
    for bid, block in blocks.items():
        last = block.last
        if last.opcode != "JUMP":
            continue
        target = facts.operands.get(last.offset, (UNKNOWN,))[0]
        span = block.offsets()
        if target.const is None or not target.defs or not all(d in span for d in target.defs):
            continue
        for below in facts.jump_stack.get(last.offset, ()):
            ret = below.const
            if ret is None or ret not in jumpdests or ret == target.const:
                continue
            if below.defs and all(d in span for d in below.defs):
                if (bid, target.const) in edges:
                    out.append(CallSite(bid, last.offset, target.const, ret))
                break
    return tuple(sorted(out, key=lambda c: (c.block, c.callee)))
