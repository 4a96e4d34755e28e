"""Security checks, protected resources, and check-model coverage."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

from axe.bridge import BridgeProgram, ContractProgram
from axe.evm.cfg import ContractCfg, FunctionBody
from axe.evm.functions import ADDRESS_MASK, reachable_blocks
from axe.evm.opcodes import CALLS
from axe.evm.values import ECRECOVER, Atom, backward_atoms, slot_family
from axe.rules import DEFAULT_RULES, RuleSet

log = logging.getLogger(__name__)

UNCLASSIFIED = "Unclassified"
REVERT_GUARD = "revert-guard"
BRANCH = "branch"

_ORDERING = frozenset({"LT", "GT", "SLT", "SGT", "EQ"})
_CALLER_LIKE = frozenset({"CALLER", "ORIGIN", "CALLVALUE"})


@dataclass(frozen=True)
class SecurityCheck:
    address: str
    block: int
    site: int
    form: str
    pass_target: int | None
    fail_target: int | None
    # root of the condition once ISZERO chains are stripped
    condition: int | None
    perspective: str = UNCLASSIFIED
    features: tuple[str, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return (self.address, self.site)

    def short(self) -> str:
        return f"{self.address[:10]}@{self.site:#x}"


@dataclass(frozen=True)
class Resource:
    kind: str  # f, m, a, e
    address: str
    block: int
    site: int
    touched_slots: frozenset[int] = frozenset()
    write: bool = False
    selector: str | None = None
    callee: int | None = None
    topic: str | None = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.address, self.kind, self.site)

    def short(self) -> str:
        return f"{self.kind}:{self.address[:10]}@{self.site:#x}"


@dataclass
class PerspectiveStatus:
    satisfied: bool
    witnesses: tuple[SecurityCheck, ...] = ()


@dataclass
class CheckModelCoverage:
    role: str
    per_category: dict[str, dict[str, PerspectiveStatus]]
    notes: list[str] = field(default_factory=list)

    def satisfied(self, category: str) -> bool:
        return all(p.satisfied for p in self.per_category[category].values())

    def missing(self) -> tuple[str, ...]:
        out: list[str] = []
        for persp in self.per_category.values():
            out.extend(p for p, st in persp.items() if not st.satisfied and p not in out)
        return tuple(sorted(out))


# -- extraction ------------------------------------------------------------


def _only_reverts(cfg: ContractCfg, start: int) -> bool:
    """Every path from ``start`` ends in REVERT or INVALID."""
    seen = {start}
    todo = [start]
    while todo:
        b = todo.pop()
        nxt = cfg.local_succ(b)
        if not nxt and cfg.blocks[b].terminator not in ("revert", "invalid"):
            return False
        for s in nxt:
            if s not in seen:
                seen.add(s)
                todo.append(s)
    return True


def _strip_iszero(cfg: ContractCfg, site: int) -> tuple[int | None, bool]:
    """Condition root below the ISZERO chain, and whether the chain negates it."""
    defs = cfg.facts.operand_defs(site, 1)
    if len(defs) != 1:
        return None, False
    root = next(iter(defs))
    negated = False
    while cfg.instruction(root).opcode == "ISZERO":
        inner = cfg.facts.operand_defs(root, 0)
        if len(inner) != 1:
            break
        root = next(iter(inner))
        negated = not negated
    return root, negated


def extract_checks(fn: FunctionBody, prog: ContractProgram) -> list[SecurityCheck]:
    cfg = prog.cfg
    out = []
    for bid in sorted(fn.blocks - cfg.dispatcher):
        last = cfg.blocks[bid].last
        if last.opcode != "JUMPI":
            continue
        succ = cfg.succ.get(bid, ())
        fall = last.offset + last.size
        jump = next((s for s in succ if s != fall), None)
        fall = fall if fall in succ else None
        root, negated = _strip_iszero(cfg, last.offset)
        reverting = [s for s in (jump, fall) if s is not None and _only_reverts(cfg, s)]
        if len(reverting) == 1 and len(succ) == 2:
            form = REVERT_GUARD
            fail = reverting[0]
            ok = fall if fail == jump else jump
        else:
            form = BRANCH
            ok, fail = _branch_sides(cfg, jump, fall, negated)
        out.append(SecurityCheck(prog.address, bid, last.offset, form, ok, fail, root))
    return out


def _branch_sides(cfg: ContractCfg, jump: int | None, fall: int | None, negated: bool):
    """Pick the pass edge of a non-reverting branch.

    An ``if`` body rejoins the code after it, so when exactly one successor
    reaches the other, that one is the guarded side. Otherwise the pass edge is
    the one taken when the stripped condition holds.
    """
    if jump is not None and fall is not None:
        j_to_f = fall in reachable_blocks(cfg, jump, frozenset())
        f_to_j = jump in reachable_blocks(cfg, fall, frozenset())
        if j_to_f != f_to_j:
            return (jump, fall) if j_to_f else (fall, jump)
    return (fall, jump) if negated else (jump, fall)


def _sides(cfg: ContractCfg, root: int) -> tuple[list[frozenset[int]], bool]:
    """Compared operand def-sets and whether the condition is a zero test."""
    op = cfg.instruction(root).opcode
    if op in _ORDERING:
        sides = [cfg.facts.operand_defs(root, 0), cfg.facts.operand_defs(root, 1)]
        consts = [cfg.facts.operand_const(root, i) for i in (0, 1)]
        if 0 in consts:
            k = consts.index(0)
            return [sides[1 - k]], True
        return sides, False
    return [frozenset({root})], True


def _is_const(atoms: frozenset[Atom]) -> bool:
    return all(a.kind == "const" for a in atoms if not a.via_key)


def _value_bearing(cfg: ContractCfg, site: int) -> bool:
    ins = cfg.instruction(site)
    return ins.opcode in ("CALL", "CALLCODE") and cfg.facts.operand_const(site, 2) != 0


def _leaf_ids(atoms) -> frozenset[tuple]:
    """Identity of external inputs: calldata by argument offset, caller-like opcodes by name."""
    out = set()
    for a in atoms:
        if a.kind == "calldata" and a.detail is not None:
            out.add(("calldata", a.detail))
        elif a.kind in ("CALLER", "ORIGIN"):
            out.add((a.kind,))
    return frozenset(out)


def _ids_of(cfg: ContractCfg, defs) -> frozenset[tuple]:
    return _leaf_ids(a for a in backward_atoms(cfg, defs) if not a.via_key)


def _flows_to_call_target(cfg: ContractCfg, leaves: frozenset[tuple], value_only: bool) -> bool:
    for ins in cfg.sites(opcodes=CALLS):
        if value_only and not _value_bearing(cfg, ins.offset):
            continue
        if leaves & _ids_of(cfg, cfg.facts.operand_defs(ins.offset, 1)):
            return True
    return False


def _is_address_word(cfg: ContractCfg, d: int) -> bool:
    ins = cfg.instruction(d)
    if ins.opcode in ("CALLER", "ORIGIN"):
        return True
    return ins.opcode == "AND" and ADDRESS_MASK in (cfg.facts.operand_const(d, 0), cfg.facts.operand_const(d, 1))


def _receiver_use(prog: ContractProgram, leaves: frozenset[tuple]) -> bool:
    cfg = prog.cfg
    if _flows_to_call_target(cfg, leaves, value_only=True):
        return True
    for ins in cfg.sites(opcodes={"SSTORE"}):
        key = cfg.facts.operand_defs(ins.offset, 0)
        if prog.entry.meaning_of(slot_family(cfg, key)) == "balance" and leaves & _ids_of(cfg, key):
            return True
    # an address word handed to a value transfer as call input
    for ins in cfg.sites(opcodes={"CALL", "CALLCODE"}):
        for defs in cfg.facts.mem_reads.get(ins.offset, {}).values():
            words = {d for d in defs if _is_address_word(cfg, d)}
            if words and leaves & _ids_of(cfg, words):
                return True
    return False


def _match(check: SecurityCheck, prog: ContractProgram) -> tuple[str, tuple[str, ...]]:
    cfg = prog.cfg
    if check.condition is None:
        return UNCLASSIFIED, ()
    sides, zero_test = _sides(cfg, check.condition)
    atoms = [backward_atoms(cfg, s) for s in sides]
    every = frozenset().union(*atoms)
    direct = {a for a in every if not a.via_key}

    def hinted(meaning: str) -> bool:
        return any(a.kind == "sload" and prog.entry.meaning_of(a.detail) == meaning for a in direct)

    if any(a.kind in ("TIMESTAMP", "NUMBER") for a in direct):
        return "P4", ("timeout-comparison",)
    if hinted("authorization"):
        return "P4", ("signatory-authorization",)
    recovered = [any(a.kind == "callout" and a.detail == ECRECOVER and not a.via_key for a in s) for s in atoms]
    if any(recovered):
        if zero_test:
            return "P4", ("signature-validity",)
        other = atoms[1] if recovered[0] else atoms[0]
        if not _is_const(other):
            return "P4", ("signature-comparison",)
    if hinted("recordList"):
        return "P5", ("record-list-lookup",)
    if any(a.kind in ("BALANCE", "SELFBALANCE") for a in direct):
        return "P1", ("bridge-balance-comparison",)
    if hinted("balance"):
        return "P1", ("user-balance-vs-deposit-amount",)
    if hinted("liquidity"):
        return "P1", ("liquidity-threshold",)
    if any(a.kind == "CHAINID" for a in direct) or hinted("support"):
        return "P3", ("support-id",)
    leaves = _leaf_ids(direct)
    if leaves and _receiver_use(prog, leaves):
        return "P6", ("receiver-address",)
    if zero_test and leaves and _flows_to_call_target(cfg, leaves, value_only=False):
        return "P3", ("external-address-zero",)
    tags = []
    if any(a.kind == "calldata" for a in direct):
        tags.append("function-argument")
    if any(a.kind in _CALLER_LIKE for a in direct):
        tags.append("caller-argument")
    if tags:
        return "P2", tuple(tags)
    return UNCLASSIFIED, ()


def classify_check(check: SecurityCheck, prog: ContractProgram) -> SecurityCheck:
    """Assign a perspective using the feature matchers, first match wins."""
    perspective, features = _match(check, prog)
    return dataclasses.replace(check, perspective=perspective, features=features)


def function_checks(fn: FunctionBody, prog: ContractProgram) -> list[SecurityCheck]:
    return [classify_check(c, prog) for c in extract_checks(fn, prog)]


def extract_resources(fn: FunctionBody, prog: ContractProgram) -> list[Resource]:
    cfg = prog.cfg
    addr = prog.address
    out = [Resource("a", addr, fn.entry, fn.entry, selector=fn.selector)]
    emitted = {e.site: e for e in prog.emissions}
    for bid in sorted(fn.blocks):
        for call in cfg.calls_from.get(bid, ()):
            out.append(Resource("m", addr, bid, call.site, callee=call.callee))
        for ins in cfg.blocks[bid].instructions:
            op = ins.opcode
            if op in ("SSTORE", "SLOAD"):
                fam = slot_family(cfg, cfg.facts.operand_defs(ins.offset, 0))
                if op == "SLOAD" and prog.entry.meaning_of(fam) is None:
                    continue
                slots = frozenset() if fam is None else frozenset({fam})
                out.append(Resource("f", addr, bid, ins.offset, slots, write=op == "SSTORE"))
            elif ins.offset in emitted:
                out.append(Resource("e", addr, bid, ins.offset, topic=emitted[ins.offset].topic))
    return out


def protected(resources: list[Resource]) -> list[Resource]:
    """Resources whose guards count toward coverage: writes, internal calls, known events."""
    return [r for r in resources if r.kind in ("m", "e") or (r.kind == "f" and r.write)]


def role_relevant(fn: FunctionBody, prog: ContractProgram, program: BridgeProgram) -> bool:
    kind = prog.kind_of(fn.selector)
    emits = {e.kind for e in prog.emissions if e.block in fn.blocks}
    if prog.role == "source":
        return kind == "deposit" or "deposit" in emits
    paired = {p.authorize_selector for p in program.descriptor.pairings}
    return fn.selector in paired or kind in ("authorize", "withdraw") or "withdraw" in emits


def witnesses(check: SecurityCheck, perspective: str, rules: RuleSet = DEFAULT_RULES) -> bool:
    if check.perspective != perspective:
        return False
    return bool(set(check.features) & rules.perspective(perspective).witness_tags())


def evaluate_model(checks, role: str, rules: RuleSet = DEFAULT_RULES) -> CheckModelCoverage:
    """Alternatives within a perspective are OR'ed; perspectives within a category are AND'ed."""
    per_category: dict[str, dict[str, PerspectiveStatus]] = {}
    for cat in rules.categories_for(role):
        persp = {}
        for pid in cat.perspectives:
            wit = tuple(c for c in checks if witnesses(c, pid, rules))
            persp[pid] = PerspectiveStatus(bool(wit), wit)
        per_category[cat.id] = persp
    cov = CheckModelCoverage(role, per_category)
    for cat in per_category.values():
        st = cat.get("P4")
        if st is not None and st.satisfied and not any("timeout-comparison" in c.features for c in st.witnesses):
            cov.notes.append("P4 satisfied without a timeout check")
    return cov
