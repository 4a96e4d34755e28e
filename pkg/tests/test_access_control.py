import pytest

from axe.access_control import REVERT_GUARD, UNCLASSIFIED, evaluate_model
from axe.rules import DEFAULT_RULES


def _checks(result, name):
    for (addr, sel), cs in result.access.checks.items():
        if result.program.programs[addr].function_name(sel) == name:
            return cs
    raise KeyError(name)


def _persp(result, name):
    return sorted(c.perspective for c in _checks(result, name))


def test_source_checks_of_lock_contract(run_fixture):
    _, r = run_fixture("fixture_a")
    assert _persp(r, "send") == ["P1", "P2", "P3"]
    assert all(c.form == REVERT_GUARD for c in _checks(r, "send"))


def test_destination_checks_without_signatory_binding(run_fixture):
    _, r = run_fixture("fixture_a")
    by = {c.perspective: c.features for c in _checks(r, "Receive")}
    assert by["P3"] == ("support-id",)
    assert by["P5"] == ("record-list-lookup",)
    assert by["P6"] == ("receiver-address",)
    # a non-zero test on the recovered signer proves nothing about who signed
    assert by["P4"] == ("signature-validity",)


def test_quota_guard_binds_the_signer(run_fixture):
    fx, r = run_fixture("fixture_a_patched")
    quota = fx.marks("ChainSwapDestination")["quota"]
    (c,) = [c for c in _checks(r, "Receive") if c.site == quota]
    assert (c.perspective, c.features) == ("P4", ("signatory-authorization",))


def test_heterogeneous_deposit_checks_normalize_to_p1(run_fixture):
    fx, r = run_fixture("fixture_c")
    (radar,) = _checks(r, "depositTokens")
    (polka,) = _checks(r, "swap")
    assert radar.site == fx.marks("Radar")["radar_check"]
    assert polka.site == fx.marks("Polkabridge")["polka_check"]
    assert radar.perspective == polka.perspective == "P1"
    assert radar.features != polka.features


def test_timeout_and_bridge_balance_features(run_fixture):
    _, r = run_fixture("fixture_b")
    feats = {f for c in _checks(r, "Withdrawal") for f in c.features}
    assert {"timeout-comparison", "signatory-authorization", "receiver-address"} <= feats
    assert ("P1", ("bridge-balance-comparison",)) in {(c.perspective, c.features) for c in _checks(r, "Deposit")}
    assert any(c.perspective == UNCLASSIFIED for c in _checks(r, "Withdrawal"))


def test_if_body_is_the_pass_edge(run_fixture):
    fx, r = run_fixture("fixture_d")
    c5 = fx.marks("MultisigDestination")["c5"]
    (c,) = [c for c in _checks(r, "withdraw") if c.site == c5]
    assert c.form == "branch"
    # the fall-through into the body passes; jumping over it fails
    assert c.pass_target == c5 + 1
    assert c.fail_target != c.pass_target


def test_model_coverage(run_fixture):
    _, r = run_fixture("case_study")
    for (addr, sel), cov in r.access.coverage.items():
        name = r.program.programs[addr].function_name(sel)
        if name.startswith("saveWithdraw"):
            assert list(cov.missing()) == ["P3"]
            assert cov.satisfied("C3") and not cov.satisfied("C2")


def test_p4_note_when_no_timeout_check():
    from axe.access_control import SecurityCheck

    zero = "0x" + "00" * 20
    auth = SecurityCheck(zero, 0, 1, REVERT_GUARD, 2, 3, 1, "P4", ("signatory-authorization",))
    cov = evaluate_model([auth], "destination", DEFAULT_RULES)
    assert cov.per_category["C3"]["P4"].satisfied
    assert any("timeout" in n for n in cov.notes)
    timeout = SecurityCheck(zero, 0, 5, REVERT_GUARD, 6, 7, 5, "P4", ("timeout-comparison",))
    assert not evaluate_model([auth, timeout], "destination", DEFAULT_RULES).notes


@pytest.mark.parametrize("name,expected", [
    ("fixture_a", {("Receive", ("P4",))}),
    ("fixture_a_patched", set()),
    ("fixture_c", {("depositTokens", ("P2", "P3")), ("swap", ("P2", "P3"))}),
    ("fixture_d", set()),
    ("case_study", {("saveWithdrawNative", ("P3",)), ("saveWithdrawAlien", ("P3",))}),
    ("minimal", set()),
])
def test_omissions(run_fixture, name, expected):
    _, r = run_fixture(name)
    got = {
        (r.program.programs[f.address].function_name(f.function), f.missing)
        for f in r.access.findings if f.kind == "Omission"
    }
    assert got == expected
    assert not [f for f in r.access.findings if f.kind == "ViolationPath"]


def _all_checks():
    from conftest import analyzed
    from axe import fixtures

    out = []
    for name in sorted(fixtures.ALL):
        _, r = analyzed(name)
        for (addr, _), cs in sorted(r.access.checks.items()):
            out += [(r.program.programs[addr].cfg, c) for c in cs]
    return out


def test_revert_guard_fail_edges_only_revert():
    """Independent re-check by plain graph search over all successors."""
    for cfg, c in _all_checks():
        if c.form != REVERT_GUARD:
            continue
        seen, todo = {c.fail_target}, [c.fail_target]
        while todo:
            b = todo.pop()
            succ = cfg.succ.get(b, ())
            if not succ:
                assert cfg.blocks[b].last.opcode in ("REVERT", "INVALID"), hex(c.site)
            for s in succ:
                if s not in seen:
                    seen.add(s)
                    todo.append(s)


def test_coverage_is_monotone():
    import random

    checks = [c for _, c in _all_checks()]
    rng = random.Random(3)
    for role in ("source", "destination"):
        for _ in range(200):
            base = rng.sample(checks, rng.randint(0, 6))
            more = base + rng.sample(checks, rng.randint(1, 4))
            a = evaluate_model(base, role, DEFAULT_RULES).per_category
            b = evaluate_model(more, role, DEFAULT_RULES).per_category
            for cat, persp in a.items():
                for pid, st in persp.items():
                    assert not st.satisfied or b[cat][pid].satisfied


def test_unclassified_never_covers():
    for _, c in _all_checks():
        if c.perspective == UNCLASSIFIED:
            cov = evaluate_model([c], "destination", DEFAULT_RULES)
            assert not any(st.satisfied for p in cov.per_category.values() for st in p.values())
