"""``axe`` command-line driver."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from axe import __version__
from axe.bridge import load_manifest_file
from axe.errors import AxeError, BindError, ManifestError, UsageError
from axe.pipeline import resolve_config, run_analysis
from axe.rules import dump_rules

log = logging.getLogger("axe")

EXIT_CLEAN, EXIT_FINDINGS, EXIT_USAGE, EXIT_TIMEOUT = 0, 1, 2, 3
MANIFEST_SUFFIXES = (".yaml", ".yml", ".json")
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _setup_logging() -> None:
    level = _LEVELS.get(os.environ.get("AXE_LOG", "warn").lower(), logging.WARNING)
    root = logging.getLogger("axe")
    root.setLevel(level)
    if not any(isinstance(h, logging.StreamHandler) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("axe: %(levelname)s: %(message)s"))
        root.addHandler(handler)


def _analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", default="structured", help="structured or text")
    p.add_argument("--assoc-threshold", type=float)
    p.add_argument("--max-path-depth", type=int)
    p.add_argument("--loop-unroll", type=int)
    p.add_argument("--timeout-secs", type=float)
    p.add_argument("--dump-graphs", action="store_true", help="write xCFG/xDFG edge listings")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="axe", description="Cross-chain bridge bytecode analyzer")
    parser.add_argument("--version", action="version", version=f"axe {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    a = sub.add_parser("analyze", help="analyze one bridge manifest")
    a.add_argument("--manifest", required=True)
    a.add_argument("--out", help="report path (default: stdout)")
    _analysis_flags(a)

    b = sub.add_parser("batch", help="analyze every manifest in a directory")
    b.add_argument("dir")
    b.add_argument("--out", help="directory for per-bridge reports (default: DIR/reports)")
    _analysis_flags(b)

    r = sub.add_parser("rules", help="show the built-in check model")
    r.add_argument("--dump", action="store_true")
    return parser


def _overrides(args) -> dict:
    return {
        "assoc_threshold": args.assoc_threshold,
        "max_path_depth": args.max_path_depth,
        "loop_unroll": args.loop_unroll,
        "timeout_secs": args.timeout_secs,
    }


def _analyze_one(path: Path, args):
    descriptor = load_manifest_file(path)
    config = resolve_config(descriptor, _overrides(args))
    result = run_analysis(descriptor, config)
    return result, result.render(args.format)


def cmd_analyze(args) -> int:
    if args.format not in ("structured", "text"):
        raise UsageError(f"unknown format {args.format!r}")
    result, text = _analyze_one(Path(args.manifest), args)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.dump_graphs:
        target = Path(args.out + ".graph") if args.out else None
        if target:
            target.write_text(result.graphs())
        else:
            sys.stderr.write(result.graphs())
    if result.timed_out:
        return EXIT_TIMEOUT
    return EXIT_FINDINGS if result.high else EXIT_CLEAN


def cmd_batch(args) -> int:
    if args.format not in ("structured", "text"):
        raise UsageError(f"unknown format {args.format!r}")
    root = Path(args.dir)
    if not root.is_dir():
        raise UsageError(f"not a directory: {root}")
    manifests = sorted(p for p in root.iterdir() if p.suffix in MANIFEST_SUFFIXES and p.is_file())
    if not manifests:
        raise UsageError(f"no manifests found in {root}")
    out = Path(args.out) if args.out else root / "reports"
    out.mkdir(parents=True, exist_ok=True)
    ext = ".json" if args.format == "structured" else ".txt"
    rows = []
    for path in manifests:
        try:
            result, text = _analyze_one(path, args)
        except (AxeError, OSError) as exc:
            log.error("%s: %s", path.name, exc)
            rows.append((path.stem, None, 0, f"error: {exc}"))
            continue
        (out / f"{path.stem}{ext}").write_text(text)
        status = "timeout" if result.timed_out else "ok"
        rows.append((path.stem, len(result.findings), result.high, status))
    rows.sort(key=lambda r: (-(r[1] or 0), r[0]))
    lines = [f"{'bridge':<32} {'findings':>8} {'high':>5}  status"]
    for name, n, high, status in rows:
        lines.append(f"{name:<32} {('-' if n is None else n):>8} {high:>5}  {status}")
    errors = sum(r[1] is None for r in rows)
    lines.append(f"{len(rows)} manifests, {len(rows) - errors} reports, {errors} errors")
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    if errors == len(rows):
        return EXIT_USAGE
    if any(r[3] == "timeout" for r in rows):
        return EXIT_TIMEOUT
    return EXIT_FINDINGS if any(r[2] for r in rows) else EXIT_CLEAN


def cmd_rules(args) -> int:
    sys.stdout.write(dump_rules())
    return EXIT_CLEAN


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing command (analyze, batch or rules)")
        handler = {"analyze": cmd_analyze, "batch": cmd_batch, "rules": cmd_rules}[args.command]
        return handler(args)
    except (UsageError, ManifestError, BindError) as exc:
        sys.stderr.write(f"axe: error: {exc}\n")
        return EXIT_USAGE
    except AxeError as exc:
        # bytecode that cannot be decoded is an input problem, not a crash
        sys.stderr.write(f"axe: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
