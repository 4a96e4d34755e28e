"""Deterministic findings report in structured (JSON) and text form."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from axe import __version__
from axe.errors import UsageError
from axe.taint import VulnTrace

KINDS = {
    "Omission": "ACCESS_CONTROL_OMISSION",
    "ViolationPath": "ACCESS_CONTROL_VIOLATION_PATH",
    "Granularity": "SEMANTIC_GRANULARITY",
    "Integrity": "SEMANTIC_INTEGRITY",
}
ALL_KINDS = tuple(sorted(KINDS.values()))
FORMATS = ("structured", "text")


@dataclass(frozen=True)
class Finding:
    id: str
    kind: str
    severity: str
    contract: str
    function_selector: str
    function_name: str
    evidence: dict
    trace: VulnTrace | None = None


def finding_id(kind: str, contract: str, function: str, witness) -> str:
    blob = json.dumps([kind, contract, function, witness], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def make_finding(indicator, trace: VulnTrace | None, function_name: str = "") -> Finding:
    """Wrap an access-control or semantic finding; severity is high exactly when a trace exists."""
    kind = KINDS[indicator.kind]
    evidence = dict(indicator.evidence if hasattr(indicator, "evidence") else indicator.witness)
    if hasattr(indicator, "missing"):
        evidence["missing_perspectives"] = list(indicator.missing)
        if indicator.paths:
            evidence["paths"] = list(indicator.paths)
        if indicator.other_function:
            evidence["compared_function"] = indicator.other_function
    if getattr(indicator, "deposit_functions", None):
        evidence["deposit_functions"] = [list(d) for d in indicator.deposit_functions]
    fid = finding_id(kind, indicator.address, indicator.function, evidence)
    return Finding(
        fid, kind, "high" if trace is not None else "info", indicator.address, indicator.function,
        function_name or indicator.function, evidence, trace,
    )


def assemble(pairs) -> list[Finding]:
    """``pairs`` holds ``(indicator, trace, function_name)`` triples; duplicates by id are merged."""
    out: dict[str, Finding] = {}
    for indicator, trace, name in pairs:
        f = make_finding(indicator, trace, name)
        out.setdefault(f.id, f)
    return sorted(out.values(), key=lambda f: (f.contract, f.function_selector, f.kind, f.id))


def _trace_doc(trace: VulnTrace | None):
    if trace is None:
        return None
    return {
        "entry_chain": [sel for sel, _ in trace.entry_chain],
        "entry_names": [name for _, name in trace.entry_chain],
        "affected": [{"name": v.name, "slot": v.slot, "meaning": v.meaning} for v in trace.affected],
        "rendered": trace.render(),
    }


def to_document(findings: list[Finding], bridge: str, config: dict, extra: dict | None = None) -> dict:
    summary = {k: 0 for k in ALL_KINDS}
    for f in findings:
        summary[f.kind] += 1
    summary["total"] = len(findings)
    summary["high"] = sum(f.severity == "high" for f in findings)
    doc = {
        "tool_version": __version__,
        "bridge": bridge,
        "config": dict(config),
        "summary": summary,
        "findings": [
            {
                "id": f.id,
                "kind": f.kind,
                "severity": f.severity,
                "contract": f.contract,
                "function_selector": f.function_selector,
                "function_name": f.function_name,
                "evidence": f.evidence,
                "trace": _trace_doc(f.trace),
            }
            for f in findings
        ],
    }
    doc.update(extra or {})
    return doc


def render(findings: list[Finding], fmt: str, bridge: str = "", config: dict | None = None,
           extra: dict | None = None) -> str:
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    doc = to_document(findings, bridge, config or {}, extra)
    if fmt == "structured":
        return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    lines = [f"bridge: {bridge}", f"findings: {len(findings)} (high: {doc['summary']['high']})"]
    if doc.get("timed_out"):
        lines.append("analysis timed out; report is partial")
    for f in findings:
        lines.append("")
        lines.append(f"[{f.severity.upper()}] {f.kind} {f.id}")
        lines.append(f"  contract: {f.contract}")
        lines.append(f"  function: {f.function_name} ({f.function_selector})")
        missing = f.evidence.get("missing_perspectives")
        if missing:
            lines.append(f"  missing: {', '.join(missing)}")
        for item in f.evidence.get("independent", ()):
            lines.append(f"  independent {item['variable']} at {item['sink']} ({item['sink_kind']})")
        if f.trace is not None:
            lines.append(f"  trace: {f.trace.render()}")
        else:
            lines.append("  trace: none (no entry trace from a public function)")
    return "\n".join(lines) + "\n"
