"""End-to-end orchestration: ingest, bind, detect, trace, report."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

from axe.association import AccessControlResult, analyze_access_control
from axe.bridge import BridgeDescriptor, BridgeProgram, bind, ingest
from axe.errors import AnalysisTimeout, UsageError
from axe.report import Finding, assemble, render
from axe.taint import Indicator, discover_trace, propagate, seed_sources, state_sinks
from axe.xgraph import XCfg, XDfg, build_xcfg, build_xdfg, check_granularity, check_integrity, dump_graph

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    assoc_threshold: float = 0.5
    max_path_depth: int = 64
    loop_unroll: int = 1
    timeout_secs: float = 600

    def validate(self) -> None:
        if not 0 < self.assoc_threshold < 1:
            raise UsageError("assoc_threshold must lie strictly between 0 and 1")
        if self.max_path_depth < 1:
            raise UsageError("max_path_depth must be at least 1")
        if self.loop_unroll < 0:
            raise UsageError("loop_unroll must be non-negative")
        if self.timeout_secs < 1:
            raise UsageError("timeout_secs must be at least 1")

    def report_config(self) -> dict:
        return {
            "assoc_threshold": self.assoc_threshold,
            "max_path_depth": self.max_path_depth,
            "loop_unroll": self.loop_unroll,
        }


def resolve_config(descriptor: BridgeDescriptor | None, overrides: dict | None = None) -> RunConfig:
    """CLI overrides beat manifest config, which beats the defaults."""
    values = asdict(RunConfig())
    if descriptor is not None:
        values.update(dict(descriptor.config))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    cfg = RunConfig(
        float(values["assoc_threshold"]),
        int(values["max_path_depth"]),
        int(values["loop_unroll"]),
        float(values["timeout_secs"]),
    )
    cfg.validate()
    return cfg


class Deadline:
    def __init__(self, seconds: float):
        self.expires = time.monotonic() + seconds

    def __call__(self) -> None:
        if time.monotonic() > self.expires:
            raise AnalysisTimeout("analysis exceeded its time budget")


@dataclass
class AnalysisResult:
    descriptor: BridgeDescriptor
    config: RunConfig
    program: BridgeProgram | None = None
    access: AccessControlResult | None = None
    xcfg: XCfg | None = None
    xdfg: XDfg | None = None
    findings: list[Finding] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    timed_out: bool = False

    @property
    def high(self) -> int:
        return sum(f.severity == "high" for f in self.findings)

    def render(self, fmt: str) -> str:
        extra = {"timed_out": True} if self.timed_out else {}
        return render(self.findings, fmt, self.descriptor.name, self.config.report_config(), extra)

    def graphs(self) -> str:
        return dump_graph(self.xcfg, self.xdfg) if self.xcfg is not None else ""


def _names(program: BridgeProgram, pairs) -> tuple[tuple[str, str], ...]:
    return tuple((sel, program.programs[addr].function_name(sel)) for addr, sel in pairs)


def _collect(program: BridgeProgram, ac: list, sem: list, taint) -> list[Finding]:
    pairs = []
    for f in ac:
        prog = program.programs[f.address]
        fn = prog.cfg.functions[f.function]
        ind = Indicator(f.address, f.function, tuple(state_sinks(prog, fn)))
        pairs.append((f, discover_trace(program, ind, taint), prog.function_name(f.function)))
    for f in sem:
        prog = program.programs[f.address]
        fn = prog.cfg.functions[f.function]
        sites = tuple(f.witness.get("sinks", ())) or tuple(state_sinks(prog, fn))
        ind = Indicator(f.address, f.function, sites, _names(program, f.deposit_functions))
        pairs.append((f, discover_trace(program, ind, taint), prog.function_name(f.function)))
    return assemble(pairs)


def run_analysis(descriptor: BridgeDescriptor, config: RunConfig) -> AnalysisResult:
    """Run every stage; on timeout, keep the findings of the stages that completed."""
    result = AnalysisResult(descriptor, config)
    tick = Deadline(config.timeout_secs)
    ac_findings: list = []
    sem_findings: list = []
    taint: dict = {}
    try:
        program = bind(descriptor, ingest(descriptor))
        result.program = program
        result.warnings.extend(program.warnings)
        tick()
        access = analyze_access_control(
            program, config.assoc_threshold, config.max_path_depth, config.loop_unroll, tick=tick
        )
        result.access = access
        result.warnings.extend(access.diagnostics)
        ac_findings = access.findings
        tick()
        result.xcfg = build_xcfg(program)
        result.warnings.extend(result.xcfg.warnings)
        result.xdfg = build_xdfg(result.xcfg, program)
        sem_findings = check_granularity(result.xcfg, program) + check_integrity(result.xdfg, program)
        tick()
        taint = propagate(result.xdfg, seed_sources(program), diagnostics=result.warnings)
    except AnalysisTimeout:
        result.timed_out = True
        result.warnings.append("analysis timed out; partial report")
    if result.program is not None:
        result.findings = _collect(result.program, ac_findings, sem_findings, taint)
    result.warnings = list(dict.fromkeys(result.warnings))
    for w in result.warnings:
        log.info(w)
    return result
