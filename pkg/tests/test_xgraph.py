import pytest

from axe.evm.opcodes import CALLS
from axe.pipeline import resolve_config, run_analysis
from axe.xgraph import CLIENT, EMITTING, INFORMING, RELAYER
from randbridge import random_bridge

LOGS = {"LOG1", "LOG2", "LOG3", "LOG4"}


def _run(fx):
    desc = fx.descriptor()
    return run_analysis(desc, resolve_config(desc))


def audit(result):
    """Every cross-domain data edge must carry an event or call argument of a paired emission."""
    program, xcfg, xdfg = result.program, result.xcfg, result.xdfg
    paired = {(p.deposit_event, p.authorize_selector) for p in program.descriptor.pairings}
    for e in xcfg.labelled(EMITTING):
        assert e.dst in (RELAYER, CLIENT)
        cfg = program.programs[e.src.address].cfg
        assert any(i.opcode in LOGS for i in cfg.blocks[e.src.block].instructions)
    for e in xcfg.labelled(INFORMING):
        assert e.src == RELAYER
    crossing = 0
    for edge in xdfg.edges:
        a, b = xdfg.domain[edge.src], xdfg.domain[edge.dst]
        if a == b:
            continue
        crossing += 1
        kind = edge.carried[0]
        assert {a, b} != {"source", "destination"}, edge
        if b == "relayer":
            assert a == "source" and kind == "event_arg"
            i = edge.carried[1]
            prog = program.programs[edge.src.address]
            ems = [em for em in prog.emissions if (em.topic, edge.dst.selector) in paired]
            assert any(i < len(em.args) and edge.src.index in em.args[i] for em in ems), edge
            # never the LOG's own offset, size or topic0 operands
            for em in ems:
                for k in (0, 1, 2):
                    own = prog.cfg.facts.operand_defs(em.site, k)
                    assert edge.src.index not in own or any(edge.src.index in w for w in em.args)
        elif a == "relayer":
            assert b == "destination" and kind == "call_arg"
            assert edge.dst.kind == "param" and edge.dst.selector == edge.src.selector
            assert edge.dst.index == edge.carried[1]
        elif b == "client":
            assert a == "destination" and kind == "event_arg"
            prog = program.programs[edge.src.address]
            assert any(
                em.kind == "withdraw" and edge.src.index in em.args[edge.carried[1]] for em in prog.emissions
            )
        else:
            pytest.fail(f"unexpected crossing {edge}")
    return crossing


@pytest.mark.parametrize("seed", range(50))
def test_boundary_audit_on_random_bridges(seed):
    result = _run(random_bridge(seed))
    audit(result)


@pytest.mark.parametrize("name", ["fixture_a", "fixture_b", "fixture_d", "case_study", "two_deposits", "minimal"])
def test_boundary_audit_on_fixtures(run_fixture, name):
    _, result = run_fixture(name)
    assert audit(result) > 0


def test_minimal_graph_shape(run_fixture):
    _, r = run_fixture("minimal")
    assert len(r.xcfg.labelled(EMITTING)) == 2
    assert len(r.xcfg.labelled(INFORMING)) == 1


def test_log3_arguments_cover_topics_then_data(run_fixture):
    _, r = run_fixture("minimal")
    (em,) = [em for p in r.program.contracts("source") for em in p.emissions]
    # two indexed words, then two data words
    assert len(em.args) == 4
    cfg = r.program.programs[em.address].cfg
    assert {cfg.instruction(d).opcode for d in em.args[0]} == {"CALLER"}


def test_call_outputs_never_alias_inputs(run_fixture):
    _, r = run_fixture("fixture_b")
    for e in r.xdfg.edges:
        if e.dst.kind == "site":
            ins = r.program.programs[e.dst.address].cfg.instruction(e.dst.index)
            if ins.opcode in CALLS:
                assert e.src != e.dst
        if e.src.kind == "out":
            assert e.src.index != e.dst.index


def test_arg_map_restricts_relay(run_fixture):
    fx = random_bridge(3)
    for p in fx.pairings:
        p["arg_map"] = [{"event_arg": 0, "param": 1}]
    r = _run(fx)
    relay = [e for e in r.xdfg.edges if e.src.kind == "relayer"]
    assert relay and all(e.carried == ("call_arg", 1) and e.src.index == 0 for e in relay)


def test_integrity_flags_rederived_type(run_fixture):
    _, r = run_fixture("fixture_b")
    sem = [f for f in r.findings if f.kind == "SEMANTIC_INTEGRITY"]
    assert len(sem) == 1
    assert [i["variable"] for i in sem[0].evidence["independent"]] == ["type"]
    _, r = run_fixture("fixture_b_event_type")
    assert not [f for f in r.findings if f.kind == "SEMANTIC_INTEGRITY"]


def test_granularity_on_shared_event(run_fixture):
    _, r = run_fixture("two_deposits")
    (g,) = [f for f in r.findings if f.kind == "SEMANTIC_GRANULARITY"]
    names = {p["deposit_function"] for p in g.evidence["paths"]}
    assert len(names) == 2
    for other in ("fixture_a", "case_study", "minimal"):
        _, r = run_fixture(other)
        assert not [f for f in r.findings if f.kind == "SEMANTIC_GRANULARITY"]
