import json

from axe.rules import DEFAULT_RULES, dump_rules, load_rules


def test_round_trip():
    text = dump_rules()
    assert load_rules(text) == DEFAULT_RULES
    assert dump_rules(load_rules(text)) == text


def test_shape():
    doc = json.loads(dump_rules())
    assert doc["version"] == DEFAULT_RULES.version
    assert [c.id for c in DEFAULT_RULES.categories] == ["C1", "C2", "C3"]
    assert {p.id for p in DEFAULT_RULES.perspectives} == {f"P{i}" for i in range(1, 7)}
    assert set(DEFAULT_RULES.required("source")) == {"P1", "P2", "P3"}
    assert set(DEFAULT_RULES.required("destination")) == {"P3", "P4", "P5", "P6"}


def test_every_perspective_has_features():
    for p in DEFAULT_RULES.perspectives:
        assert p.features and p.witness_tags()
