"""Path enumeration, check-resource association inference, and access-control detectors."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import count
from typing import Callable, Hashable, Iterable

from axe.access_control import (
    UNCLASSIFIED,
    CheckModelCoverage,
    Resource,
    SecurityCheck,
    evaluate_model,
    extract_resources,
    function_checks,
    protected,
    role_relevant,
)
from axe.bridge import BridgeProgram, ContractProgram
from axe.evm.cfg import ContractCfg
from axe.evm.values import backward_sites, slot_family
from axe.rules import DEFAULT_RULES, RuleSet

log = logging.getLogger(__name__)

# prior probability per inference pattern
PATTERNS = {
    "P1": ("ControlFlowDependency", 0.95),
    "P2": ("ControlFlowDependencySet", 0.60),
    "P3": ("SameBlock", 0.60),
    "P4": ("SemanticCorrelation", 0.70),
    "P5": ("DataFlowDependency", 0.80),
}
PRIORS = {k: p for k, (_, p) in PATTERNS.items()}

DEFAULT_THRESHOLD = 0.5
DEFAULT_MAX_DEPTH = 64
DEFAULT_UNROLL = 1
MAX_PATHS = 4096
MAX_CALL_DEPTH = 8

_END = object()


def noisy_or(probabilities: Iterable[float]) -> float:
    return 1.0 - math.prod(1.0 - p for p in probabilities)


def all_paths(
    succ: Callable[[Hashable], Iterable[Hashable]],
    start: Hashable,
    target,
    max_depth: int = DEFAULT_MAX_DEPTH,
    unroll: int = DEFAULT_UNROLL,
    max_paths: int = MAX_PATHS,
    tick: Callable[[], None] | None = None,
) -> tuple[list[tuple], bool]:
    """Every path from ``start`` to the first arrival at ``target``.

    A node may appear at most ``unroll + 1`` times on a path and a path holds at
    most ``max_depth`` nodes.  Returns the paths and whether a bound cut the search.
    ``target`` is a node or a predicate; ``tick`` is polled periodically (deadline checks).
    """
    is_target = target if callable(target) else (lambda n: n == target)
    if is_target(start):
        return [(start,)], False
    limit = unroll + 1
    paths: list[tuple] = []
    truncated = False
    seen = Counter({start: 1})
    path = [start]
    stack = [iter(succ(start))]
    steps = 0
    while stack:
        steps += 1
        if tick is not None and steps % 1024 == 0:
            tick()
        nxt = next(stack[-1], _END)
        if nxt is _END:
            stack.pop()
            seen[path.pop()] -= 1
            continue
        if seen[nxt] >= limit:
            continue
        if len(path) + 1 > max_depth:
            truncated = True
            continue
        if is_target(nxt):
            paths.append(tuple(path) + (nxt,))
            if len(paths) >= max_paths:
                return paths, True
            continue
        path.append(nxt)
        seen[nxt] += 1
        stack.append(iter(succ(nxt)))
    return paths, truncated


def call_aware_succ(cfg: ContractCfg):
    """Successor function over ``(block, return stack)`` nodes; returns only go to the matching caller."""
    callee_of = {(c.block, c.callee): c.return_to for c in cfg.calls}

    def succ(node):
        bid, stack = node
        for s in cfg.succ.get(bid, ()):
            if (bid, s) in cfg.return_edges:
                if stack and stack[-1] == s:
                    yield (s, stack[:-1])
            elif (bid, s) in callee_of:
                if len(stack) < MAX_CALL_DEPTH:
                    yield (s, stack + (callee_of[(bid, s)],))
            else:
                yield (s, stack)

    return succ


@dataclass(frozen=True)
class PathRecord:
    id: str
    address: str
    function: str
    blocks: tuple[int, ...]
    checks: tuple[SecurityCheck, ...]
    resource: tuple

    def passes(self, check: SecurityCheck) -> bool:
        """``check`` sits on this path (before its end) and the path takes its pass edge."""
        b = self.blocks
        return any(b[i] == check.block and b[i + 1] == check.pass_target for i in range(len(b) - 1))


@dataclass(frozen=True)
class Evidence:
    pattern: str
    probability: float
    via: tuple | None = None

    @property
    def name(self) -> str:
        return PATTERNS[self.pattern][0]


@dataclass
class Association:
    check: SecurityCheck
    resource: Resource
    path: PathRecord
    evidence: list[Evidence] = field(default_factory=list)

    @property
    def combined(self) -> float:
        return noisy_or(e.probability for e in self.evidence)

    @property
    def state_carried(self) -> bool:
        return any(e.pattern == "P5" for e in self.evidence)


@dataclass(frozen=True)
class AcFinding:
    kind: str  # Omission or ViolationPath
    address: str
    function: str
    missing: tuple[str, ...]
    evidence: dict
    paths: tuple[str, ...] = ()
    other_function: str | None = None


def _path_checks(blocks: tuple[int, ...], by_block: dict[int, SecurityCheck]) -> tuple[SecurityCheck, ...]:
    out: list[SecurityCheck] = []
    for b in blocks[:-1]:
        c = by_block.get(b)
        if c is not None and c not in out:
            out.append(c)
    return tuple(out)


def enumerate_paths(
    program: BridgeProgram,
    resource: Resource,
    max_depth: int = DEFAULT_MAX_DEPTH,
    unroll: int = DEFAULT_UNROLL,
    checks: dict[int, SecurityCheck] | None = None,
    ids=None,
    diagnostics: list[str] | None = None,
    tick: Callable[[], None] | None = None,
) -> list[PathRecord]:
    """Entry-to-resource paths from every public function of the resource's contract."""
    prog = program.programs[resource.address]
    cfg = prog.cfg
    if checks is None:
        checks = {}
        for fn in cfg.functions.values():
            checks.update({c.block: c for c in function_checks(fn, prog)})
    ids = ids if ids is not None else count()
    succ = call_aware_succ(cfg)
    out = []
    for sel, fn in sorted(cfg.functions.items()):
        if resource.block not in fn.blocks:
            continue
        raw, truncated = all_paths(
            succ, (fn.entry, ()), lambda n: n[0] == resource.block, max_depth, unroll, tick=tick
        )
        if truncated and diagnostics is not None:
            diagnostics.append(f"path enumeration to {resource.short()} from {sel} truncated by bounds")
        for nodes in raw:
            blocks = tuple(n[0] for n in nodes)
            out.append(PathRecord(
                f"p{next(ids)}", prog.address, sel, blocks, _path_checks(blocks, checks), resource.key
            ))
    return out


# -- association inference ------------------------------------------------------


def _influence(prog: ContractProgram, r: Resource, dominating: Iterable[SecurityCheck]) -> frozenset[int]:
    cfg = prog.cfg
    facts = cfg.facts
    roots: set[int] = set()
    if r.kind == "m":
        for val in facts.jump_stack.get(r.site, ()):
            roots |= val.defs
    elif r.kind == "e":
        for em in prog.emissions:
            if em.site == r.site:
                for arg in em.args:
                    roots |= arg
    elif r.kind == "f":
        roots |= facts.all_inputs(r.site)
    for c in dominating:
        if c.condition is not None:
            roots.add(c.condition)
    return backward_sites(cfg, roots)


def _sload_families(cfg: ContractCfg, sites: frozenset[int]) -> set[int]:
    out = set()
    for s in sites:
        if cfg.instruction(s).opcode == "SLOAD":
            fam = slot_family(cfg, cfg.facts.operand_defs(s, 0))
            if fam is not None:
                out.add(fam)
    return out


def _semantic_tag(prog: ContractProgram, r: Resource) -> tuple | None:
    if r.kind == "f" and len(r.touched_slots) == 1:
        meaning = prog.entry.meaning_of(next(iter(r.touched_slots)))
        return ("slot", meaning) if meaning and meaning != "other" else None
    if r.kind == "e":
        em = next((e for e in prog.emissions if e.site == r.site), None)
        return ("event", em.kind) if em and em.kind != "other" else None
    if r.kind == "a":
        kind = prog.kind_of(r.selector)
        return ("abi", kind) if kind != "other" else None
    return None


def infer_associations(
    program: BridgeProgram,
    resources: list[Resource],
    checks: list[SecurityCheck],
    paths: dict[tuple, list[PathRecord]],
    threshold: float = DEFAULT_THRESHOLD,
) -> dict[tuple, Association]:
    """Assign pattern evidence to (check, resource) pairs and run transfers to a fixpoint.

    Keys of the returned mapping are ``(check.key, resource.key)``.
    """
    dominated: dict[tuple, set[tuple]] = {c.key: set() for c in checks}
    for r in resources:
        rp = paths.get(r.key, [])
        if not rp:
            continue
        for c in checks:
            if c.address == r.address and all(p.passes(c) for p in rp):
                dominated[c.key].add(r.key)

    assoc: dict[tuple, Association] = {}
    for r in resources:
        for p in paths.get(r.key, []):
            for c in p.checks:
                k = (c.key, r.key)
                if k not in assoc:
                    assoc[k] = Association(c, r, p)
    for (ck, rk), a in sorted(assoc.items()):
        dom = dominated.get(ck, set())
        if rk in dom:
            pattern = "P1" if dom == {rk} else "P2"
            a.evidence.append(Evidence(pattern, PRIORS[pattern]))

    # resource relations driving transfers: r1 receives from r2
    relations: list[tuple[tuple, tuple, str]] = []
    dominating_checks = {
        r.key: [c for c in checks if r.key in dominated[c.key]] for r in resources
    }
    for r1 in resources:
        prog = program.programs[r1.address]
        infl = None
        for r2 in resources:
            if r2.key == r1.key or r2.address != r1.address:
                continue
            if r1.block == r2.block:
                relations.append((r1.key, r2.key, "P3"))
            t1, t2 = _semantic_tag(prog, r1), _semantic_tag(prog, r2)
            if t1 is not None and t1 == t2:
                relations.append((r1.key, r2.key, "P4"))
            if r2.kind == "f" and r2.write and r2.touched_slots:
                if infl is None:
                    infl = _sload_families(prog.cfg, _influence(prog, r1, dominating_checks[r1.key]))
                if r2.touched_slots & infl:
                    relations.append((r1.key, r2.key, "P5"))

    # transfers draw only on direct (dominance) evidence, and each pattern counts once per pair
    direct = {k: noisy_or(e.probability for e in a.evidence) for k, a in assoc.items()}
    rounds = 0
    for r1k, r2k, pattern in sorted(relations):
        rounds += 1
        for (ck, rk), a in sorted(assoc.items()):
            if rk != r1k or direct.get((ck, r2k), 0.0) < threshold:
                continue
            if all(e.pattern != pattern for e in a.evidence):
                a.evidence.append(Evidence(pattern, PRIORS[pattern], r2k))
    log.debug("association transfers: %d relations", rounds)
    return assoc


# -- detectors ---------------------------------------------------------------


def guards_of(
    assoc: dict[tuple, Association], resources: Iterable[Resource], threshold: float
) -> list[SecurityCheck]:
    keys = {r.key for r in resources}
    out: dict[tuple, SecurityCheck] = {}
    for (ck, rk), a in sorted(assoc.items()):
        if rk in keys and a.combined >= threshold:
            out.setdefault(ck, a.check)
    return list(out.values())


def _guard_doc(check: SecurityCheck, assoc: dict[tuple, Association], resources) -> dict:
    keys = {r.key for r in resources}
    best = max(a.combined for (ck, rk), a in assoc.items() if ck == check.key and rk in keys)
    return {
        "site": f"{check.site:#x}",
        "perspective": check.perspective,
        "features": list(check.features),
        "probability": round(best, 6),
    }


def detect_omission(
    program: BridgeProgram,
    per_function: dict[tuple[str, str], list[Resource]],
    assoc: dict[tuple, Association],
    threshold: float = DEFAULT_THRESHOLD,
    rules: RuleSet = DEFAULT_RULES,
) -> tuple[list[AcFinding], dict[tuple[str, str], CheckModelCoverage]]:
    """One Omission per role-relevant function whose associated guards leave a perspective uncovered."""
    findings = []
    coverage = {}
    for (addr, sel), resources in sorted(per_function.items()):
        prog = program.programs[addr]
        fn = prog.cfg.functions[sel]
        if not role_relevant(fn, prog, program):
            continue
        guarded = protected(resources)
        if not guarded:
            continue
        guards = guards_of(assoc, guarded, threshold)
        cov = evaluate_model(guards, prog.role, rules)
        coverage[(addr, sel)] = cov
        missing = cov.missing()
        if missing:
            findings.append(AcFinding(
                "Omission", addr, sel, missing,
                {
                    "role": prog.role,
                    "coverage": {
                        cat: {p: st.satisfied for p, st in sorted(persp.items())}
                        for cat, persp in sorted(cov.per_category.items())
                    },
                    "notes": list(cov.notes),
                    "guards": [_guard_doc(c, assoc, guarded) for c in guards],
                },
            ))
    return findings, coverage


def detect_violation_paths(
    paths: dict[tuple, list[PathRecord]],
    assoc: dict[tuple, Association],
    threshold: float = DEFAULT_THRESHOLD,
) -> list[AcFinding]:
    """Compare the guard perspectives of every pair of paths reaching the same resource."""
    findings = []
    seen = set()
    for rk, rp in sorted(paths.items()):
        if len(rp) < 2:
            continue
        strong_assoc = [a for (ck, k), a in sorted(assoc.items()) if k == rk and a.combined >= threshold]
        sets = []
        for p in rp:
            persp = set()
            for a in strong_assoc:
                if a.check.perspective == UNCLASSIFIED:
                    continue
                # data-flow carried guards protect through state, whatever the control path
                if p.passes(a.check) or (a.state_carried and a.path.function == p.function):
                    persp.add(a.check.perspective)
            sets.append(frozenset(persp))
        for i, p in enumerate(rp):
            for j, q in enumerate(rp):
                if i == j or not sets[i] < sets[j]:
                    continue
                missing = tuple(sorted(sets[j] - sets[i]))
                key = (p.address, p.function, q.function, missing)
                if key in seen:
                    continue
                seen.add(key)
                findings.append(AcFinding(
                    "ViolationPath", p.address, p.function, missing,
                    {
                        "resource": f"{rk[1]}@{rk[2]:#x}",
                        "weak_guards": sorted(sets[i]),
                        "strong_guards": sorted(sets[j]),
                    },
                    (p.id, q.id),
                    q.function,
                ))
    return findings


@dataclass
class AccessControlResult:
    checks: dict[tuple[str, str], list[SecurityCheck]]
    resources: dict[tuple[str, str], list[Resource]]
    paths: dict[tuple, list[PathRecord]]
    associations: dict[tuple, Association]
    coverage: dict[tuple[str, str], CheckModelCoverage]
    findings: list[AcFinding]
    diagnostics: list[str]


def analyze_access_control(
    program: BridgeProgram,
    threshold: float = DEFAULT_THRESHOLD,
    max_depth: int = DEFAULT_MAX_DEPTH,
    unroll: int = DEFAULT_UNROLL,
    rules: RuleSet = DEFAULT_RULES,
    tick: Callable[[], None] | None = None,
) -> AccessControlResult:
    checks: dict[tuple[str, str], list[SecurityCheck]] = {}
    resources: dict[tuple[str, str], list[Resource]] = {}
    paths: dict[tuple, list[PathRecord]] = {}
    diagnostics: list[str] = []
    all_checks: dict[tuple, SecurityCheck] = {}
    unique: dict[tuple, Resource] = {}
    ids = count()
    for addr, prog in sorted(program.programs.items()):
        by_block: dict[int, SecurityCheck] = {}
        for sel, fn in sorted(prog.cfg.functions.items()):
            cs = function_checks(fn, prog)
            checks[(addr, sel)] = cs
            for c in cs:
                by_block[c.block] = c
                all_checks[c.key] = c
            resources[(addr, sel)] = extract_resources(fn, prog)
            for r in resources[(addr, sel)]:
                unique.setdefault(r.key, r)
        for rk, r in sorted(unique.items()):
            if r.address != addr or rk in paths:
                continue
            if tick:
                tick()
            paths[rk] = enumerate_paths(program, r, max_depth, unroll, by_block, ids, diagnostics, tick)
    assoc = infer_associations(
        program, list(unique.values()), list(all_checks.values()), paths, threshold
    )
    omissions, coverage = detect_omission(program, resources, assoc, threshold, rules)
    guarded = {r.key for r in protected(list(unique.values()))}
    violations = detect_violation_paths({k: v for k, v in paths.items() if k in guarded}, assoc, threshold)
    return AccessControlResult(
        checks, resources, paths, assoc, coverage, omissions + violations, list(dict.fromkeys(diagnostics))
    )

