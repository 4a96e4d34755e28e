import json

import pytest

from axe.errors import UsageError
from axe.report import ALL_KINDS, render


def test_reports_are_byte_identical_across_runs(fixture_dir, tmp_path):
    from axe.cli import main

    for manifest in sorted(fixture_dir.glob("*.yaml")):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["analyze", "--manifest", str(manifest), "--out", str(a)])
        main(["analyze", "--manifest", str(manifest), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes(), manifest.name


def test_structured_shape(run_fixture):
    _, r = run_fixture("fixture_a")
    doc = json.loads(r.render("structured"))
    assert set(doc) >= {"tool_version", "bridge", "config", "summary", "findings"}
    assert set(ALL_KINDS) <= set(doc["summary"])
    (f,) = doc["findings"]
    assert f["kind"] == "ACCESS_CONTROL_OMISSION" and f["severity"] == "high"
    assert f["evidence"]["missing_perspectives"] == ["P4"]
    assert f["trace"]["entry_names"] == ["Receive", "_transfer"]
    assert [v["name"] for v in f["trace"]["affected"]] == ["received", "balance"]
    assert len(f["id"]) == 16


def test_ids_are_stable_and_distinct(run_fixture):
    ids = []
    for name in ("fixture_a", "fixture_b", "fixture_c", "case_study", "two_deposits"):
        _, r = run_fixture(name)
        ids += [f.id for f in r.findings]
    assert len(ids) == len(set(ids))


def test_unknown_format():
    with pytest.raises(UsageError):
        render([], "xml")


def test_empty_report():
    doc = json.loads(render([], "structured", "x", {}))
    assert doc["summary"]["total"] == 0 and doc["findings"] == []
    assert "findings: 0" in render([], "text", "x")
