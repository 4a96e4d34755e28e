import random

import networkx as nx
import pytest

from axe.taint import TaintFact, propagate
from axe.xgraph import DNode, XDfg, XDfgEdge


def random_xdfg(seed: int):
    rng = random.Random(seed)
    n = rng.randint(1, 50)
    kinds = ["site", "param", "relayer", "out"]
    nodes = [DNode(rng.choice(kinds), f"0x{rng.randint(1, 3):040x}", i, "0x00000001") for i in range(n)]
    edges = []
    density = rng.uniform(0.0, 3.0 / max(n, 1))
    for a in nodes:
        for b in nodes:
            if rng.random() < density:
                edges.append(XDfgEdge(a, b, ("local",)))
    g = XDfg(edges, {x: "source" for x in nodes})
    for x in nodes:
        g.succ.setdefault(x, [])
    seeds = rng.sample(nodes, rng.randint(1, min(5, n)))
    return nodes, edges, g, seeds


@pytest.mark.parametrize("seed", range(100))
def test_fixpoint_equals_transitive_closure(seed):
    nodes, edges, g, seeds = random_xdfg(seed)
    taint = propagate(g, [TaintFact(s, s, (s,)) for s in seeds])
    got = {(f.origin, node) for node, facts in taint.items() for f in facts}

    nxg = nx.DiGraph()
    nxg.add_nodes_from(nodes)
    nxg.add_edges_from((e.src, e.dst) for e in edges)
    expected = {(s, t) for s in seeds for t in nx.descendants(nxg, s) | {s}}
    assert got == expected


def test_chain_records_boundary_nodes_only():
    a = DNode("site", "0x1", 1)
    r = DNode("relayer", "", 0, "0xaa")
    p = DNode("param", "0x2", 0, "0xaa")
    b = DNode("site", "0x2", 9)
    g = XDfg([XDfgEdge(a, r, ("event_arg", 0)), XDfgEdge(r, p, ("call_arg", 0)), XDfgEdge(p, b, ("local",))], {})
    taint = propagate(g, [TaintFact(a, a, (a,))])
    (fact,) = taint[b]
    assert fact.chain == (a, r, p)


def test_fact_bound_is_reported():
    nodes = [DNode("site", "0x1", i) for i in range(30)]
    edges = [XDfgEdge(x, y, ("local",)) for x in nodes for y in nodes]
    g = XDfg(edges, {})
    diags = []
    propagate(g, [TaintFact(n, n, (n,)) for n in nodes], max_facts=100, diagnostics=diags)
    assert diags


def _constant_release():
    from axe import fixtures as fx

    fix = fx.fixture_minimal()
    dst = fix.destination[0]
    # a release that writes only constants: nothing the caller controls reaches state
    dst.bodies = [(lab, s, b) for lab, s, b in dst.bodies if s != fx.sel(fx.RELEASE)]
    dst.abi = []
    dst.function(fx.RELEASE, "withdraw", fx.sstore(["PUSH 5"], ["PUSH 1"]))
    return fix


def test_untainted_indicator_is_informational(tmp_path):
    from axe.cli import main
    from axe.pipeline import resolve_config, run_analysis

    fix = _constant_release()
    desc = fix.descriptor()
    r = run_analysis(desc, resolve_config(desc))
    omissions = [f for f in r.findings if f.kind == "ACCESS_CONTROL_OMISSION"]
    assert omissions and all(f.severity == "info" and f.trace is None for f in omissions)
    assert main(["analyze", "--manifest", str(fix.write(tmp_path))]) == 0


def test_trace_follows_internal_callee(run_fixture):
    _, r = run_fixture("case_study")
    for f in r.findings:
        assert f.trace.entry_chain[-1][1] == "_transfer"
        assert "balance" in [v.name for v in f.trace.affected]
