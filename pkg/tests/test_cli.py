import json
import subprocess
import sys

import pytest

from axe import fixtures
from axe.cli import main

EXPECTED_EXIT = {
    "fixture_a": 1,
    "fixture_a_patched": 0,
    "fixture_b": 1,
    "fixture_b_event_type": 0,
    "fixture_c": 1,
    "fixture_d": 0,
    "case_study": 1,
    "two_deposits": 1,
    "minimal": 0,
}


@pytest.mark.parametrize("name", sorted(EXPECTED_EXIT))
def test_exit_status_per_fixture(fixture_dir, tmp_path, name):
    out = tmp_path / "r.json"
    code = main(["analyze", "--manifest", str(fixture_dir / f"{name}.yaml"), "--out", str(out)])
    assert code == EXPECTED_EXIT[name]
    doc = json.loads(out.read_text())
    assert (doc["summary"]["high"] > 0) == (code == 1)


def test_text_report_carries_trace(fixture_dir, capsys):
    assert main(["analyze", "--manifest", str(fixture_dir / "fixture_a.yaml"), "--format", "text"]) == 1
    assert "trace: Receive -> _transfer -> {received, balance}" in capsys.readouterr().out


def test_usage_errors(tmp_path, capsys):
    assert main(["analyze", "--manifest", str(tmp_path / "missing.yaml")]) == 2
    assert main([]) == 2
    assert main(["analyze"]) == 2
    assert main(["frobnicate"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("bridge: {name: x}\n")
    assert main(["analyze", "--manifest", str(bad)]) == 2
    assert "chains" in capsys.readouterr().err


def test_bad_flag_values(fixture_dir):
    m = str(fixture_dir / "minimal.yaml")
    assert main(["analyze", "--manifest", m, "--assoc-threshold", "1.5"]) == 2
    assert main(["analyze", "--manifest", m, "--format", "xml"]) == 2
    assert main(["analyze", "--manifest", m, "--max-path-depth", "0"]) == 2


def test_timeout_exit(tmp_path):
    path = fixtures.fixture_slow().write(tmp_path)
    out = tmp_path / "slow.json"
    code = main(["analyze", "--manifest", str(path), "--timeout-secs", "1", "--out", str(out)])
    assert code == 3
    assert json.loads(out.read_text())["timed_out"] is True


def test_config_precedence(tmp_path):
    fx = fixtures.fixture_minimal()
    fx.config = {"assoc_threshold": 0.7, "loop_unroll": 2}
    path = fx.write(tmp_path)
    out = tmp_path / "r.json"
    main(["analyze", "--manifest", str(path), "--out", str(out), "--loop-unroll", "3"])
    cfg = json.loads(out.read_text())["config"]
    assert cfg == {"assoc_threshold": 0.7, "loop_unroll": 3, "max_path_depth": 64}


def test_batch_summary_and_isolation(fixture_dir, tmp_path):
    work = tmp_path / "in"
    work.mkdir()
    for f in fixture_dir.iterdir():
        if f.name.startswith(("fixture_a.", "minimal.")):
            (work / f.name).write_text(f.read_text())
    (work / "broken.yaml").write_text("bridge: [\n")
    out = tmp_path / "reports"
    assert main(["batch", str(work), "--out", str(out)]) == 1
    summary = (out / "summary.txt").read_text()
    assert "3 manifests, 2 reports, 1 errors" in summary
    lines = summary.splitlines()
    assert lines[1].startswith("fixture_a") and "error" in summary
    single = tmp_path / "single.json"
    main(["analyze", "--manifest", str(work / "fixture_a.yaml"), "--out", str(single)])
    assert (out / "fixture_a.json").read_bytes() == single.read_bytes()


def test_batch_needs_manifests(tmp_path):
    assert main(["batch", str(tmp_path)]) == 2
    assert main(["batch", str(tmp_path / "nope")]) == 2


def test_dump_graphs(fixture_dir, tmp_path):
    out = tmp_path / "r.json"
    main(["analyze", "--manifest", str(fixture_dir / "minimal.yaml"), "--out", str(out), "--dump-graphs"])
    graph = (tmp_path / "r.json.graph").read_text()
    assert "[Emitting]" in graph and "[Informing]" in graph and "Relayer" in graph


def test_rules_dump(capsys):
    assert main(["rules", "--dump"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["categories"]) == 3


def test_console_script_and_log_level(fixture_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "axe.cli", "analyze", "--manifest", str(fixture_dir / "fixture_a.yaml")],
        capture_output=True, text=True, env={"AXE_LOG": "debug", "PATH": ""},
    )
    assert proc.returncode == 1
    assert "axe: DEBUG" in proc.stderr or "axe: INFO" in proc.stderr
    quiet = subprocess.run(
        [sys.executable, "-m", "axe.cli", "analyze", "--manifest", str(fixture_dir / "fixture_a.yaml")],
        capture_output=True, text=True, env={"AXE_LOG": "error", "PATH": ""},
    )
    assert quiet.returncode == 1 and quiet.stderr == ""
    assert proc.stdout == quiet.stdout
