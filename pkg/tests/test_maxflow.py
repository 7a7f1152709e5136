import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpplab.capacities import DistributionSpec, sample_capacities
from fpplab.lattice_cylinder import CylinderSpec, build_cylinder
from fpplab.maxflow import (DegenerateCylinderError, FlowNetwork, InvalidInputError, OracleSizeError, SimpleGraph,
                            Stream, flow_value, graph_from_edges, max_flow, min_cut_bruteforce, path_graph, phi,
                            read_dimacs, tau, validate_stream, write_dimacs)
from oracles import nx_max_flow


def test_single_edge():
    g = graph_from_edges(2, [(0, 1)])
    res = max_flow(g, np.array([3]), [0], [1])
    assert res.value == 3
    assert res.cut.tolist() == [0]
    assert min_cut_bruteforce(g, np.array([3]), [0], [1]) == 3


def test_two_parallel_paths():
    # s=0, t=3, paths 0-1-3 with caps (1,5) and 0-2-3 with caps (2,4)
    g = graph_from_edges(4, [(0, 1), (1, 3), (0, 2), (2, 3)])
    caps = np.array([1, 5, 2, 4])
    res = max_flow(g, caps, [0], [3])
    assert res.value == 3
    assert sorted(caps[res.cut].tolist()) == [1, 2]
    assert min_cut_bruteforce(g, caps, [0], [3]) == 3


def test_zero_capacities():
    g = path_graph(4)
    res = max_flow(g, np.zeros(3, dtype=np.int64), [0], [3])
    assert res.value == 0
    assert not res.stream.g.any()
    assert flow_value(res.stream, g, [3]) == 0


def test_straight_patch_tau():
    spec = CylinderSpec.straight(2, [2], n=1, height=1)
    graph = build_cylinder(spec)
    caps = np.ones(graph.num_edges, dtype=np.int64)
    res = tau(graph, caps)
    assert res.value == 3
    assert min_cut_bruteforce(graph, caps, graph.upper, graph.lower) == 3
    cut_edges = graph.vertices[graph.edges[res.cut]]
    # the three vertical edges crossing the mid line
    assert all(e[0][0] == e[1][0] for e in cut_edges)


def test_tau_and_phi_on_larger_cylinder():
    spec = CylinderSpec.straight(2, [1], n=10, height=5)
    graph = build_cylinder(spec)
    caps = np.ones(graph.num_edges, dtype=np.int64)
    t = tau(graph, caps)
    p = phi(graph, caps)
    assert t.value == 11 and p.value == 11
    assert validate_stream(graph, caps, graph.upper, graph.lower, t.stream) == []
    assert flow_value(t.stream, graph, graph.lower) == t.value
    assert flow_value(t.stream, graph, graph.lower, region=spec) == t.value
    zero = np.zeros(graph.num_edges, dtype=np.int64)
    assert tau(graph, zero).value == 0 and phi(graph, zero).value == 0


def test_degenerate_cylinders():
    graph = build_cylinder(CylinderSpec.straight(2, [1], n=1, height=0))
    with pytest.raises(DegenerateCylinderError):
        tau(graph, np.ones(graph.num_edges, dtype=np.int64))
    with pytest.raises(DegenerateCylinderError):
        phi(graph, np.ones(graph.num_edges, dtype=np.int64))


def test_invalid_inputs():
    g = path_graph(3)
    with pytest.raises(InvalidInputError):
        max_flow(g, np.ones(2), [0], [0])
    with pytest.raises(InvalidInputError):
        max_flow(g, np.ones(2), [], [2])
    with pytest.raises(InvalidInputError):
        max_flow(g, np.ones(3), [0], [2])
    with pytest.raises(InvalidInputError):
        SimpleGraph(2, np.array([[0, 0]]))
    with pytest.raises(OracleSizeError):
        min_cut_bruteforce(path_graph(20), np.ones(19, dtype=np.int64), [0], [19])


def test_validate_stream_detects_violations():
    g = path_graph(3)
    caps = np.array([2, 2])
    good = Stream(np.array([1, 1]), np.array([1, 1], dtype=np.int8))
    assert validate_stream(g, caps, [0], [2], good) == []
    over = Stream(np.array([3, 1]), np.array([1, 1], dtype=np.int8))
    v = validate_stream(g, caps, [0], [2], over)
    assert [x.kind for x in v].count("capacity") == 1 and v[0].where == 0
    imbalance = Stream(np.array([2, 1]), np.array([1, 1], dtype=np.int8))
    v = validate_stream(g, caps, [0], [2], imbalance)
    assert len(v) == 1 and v[0].kind == "conservation" and v[0].where == 1


def test_flow_value_single_path():
    g = path_graph(3)
    s = Stream(np.array([2, 2]), np.array([1, 1], dtype=np.int8), exits={(2, None): 2})
    assert flow_value(s, g, [2]) == 2
    assert flow_value(Stream.zero(2), g, [2]) == 0


def _random_instance(rng, max_v=8, max_e=16, float_caps=False):
    V = int(rng.integers(2, max_v + 1))
    pairs = [(a, b) for a in range(V) for b in range(a + 1, V)]
    E = int(rng.integers(1, min(max_e, len(pairs)) + 1))
    edges = [pairs[i] for i in rng.choice(len(pairs), E, replace=False)]
    caps = rng.random(E) * 5 if float_caps else rng.integers(0, 8, E)
    perm = rng.permutation(V)
    k = int(rng.integers(1, V))
    src = perm[: int(rng.integers(1, k + 1))]
    snk = perm[k:][: int(rng.integers(1, V - k + 1))]
    return graph_from_edges(V, edges), caps, src, snk


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_solver_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    g, caps, src, snk = _random_instance(rng)
    res = max_flow(g, caps, src, snk)
    assert res.value == min_cut_bruteforce(g, caps, src, snk)
    assert res.cut_value(caps) == res.value
    assert validate_stream(g, caps, src, snk, res.stream) == []


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_solver_matches_networkx_on_floats(seed):
    rng = np.random.default_rng(seed)
    g, caps, src, snk = _random_instance(rng, max_v=20, max_e=60, float_caps=True)
    res = max_flow(g, caps, src, snk)
    ref = nx_max_flow(g.num_vertices, g.edges.tolist(), caps, src, snk)
    assert res.value == pytest.approx(ref, rel=1e-9, abs=1e-12)
    assert res.cut_value(caps) == pytest.approx(res.value, rel=1e-9, abs=1e-12)
    assert validate_stream(g, caps, src, snk, res.stream) == []


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_cut_separates_terminals(seed):
    rng = np.random.default_rng(seed)
    g, caps, src, snk = _random_instance(rng, max_v=12, max_e=30)
    res = max_flow(g, caps, src, snk)
    keep = np.ones(g.num_edges, dtype=bool)
    keep[res.cut] = False
    reach = set(src.tolist())
    changed = True
    while changed:
        changed = False
        for (a, b) in g.edges[keep].tolist():
            if (a in reach) != (b in reach):
                reach |= {a, b}
                changed = True
    assert not reach & set(snk.tolist())


@pytest.mark.parametrize("normal", [(0, 1), (1, 1), (1, 2), (0, 0, 1), (1, 1, 1)])
def test_cylinder_flows_against_networkx(normal):
    d = len(normal)
    spec = CylinderSpec.tilted(normal, [3] * (d - 1), n=1, height=2)
    graph = build_cylinder(spec)
    for r in range(5):
        caps = sample_capacities(graph, DistributionSpec.parse("exponential:1"), 3, r)
        t = tau(graph, caps)
        ref = nx_max_flow(graph.num_vertices, graph.edges.tolist(), caps.values,
                          np.flatnonzero(graph.upper), np.flatnonzero(graph.lower))
        assert t.value == pytest.approx(ref, rel=1e-9)
        assert phi(graph, caps).value <= t.value * (1 + 1e-9)


def test_network_reuse_matches_fresh_solve():
    graph = build_cylinder(CylinderSpec.straight(2, [1], n=8, height=4))
    net = FlowNetwork(graph, graph.upper, graph.lower)
    dist = DistributionSpec.parse("bernoulli:0.6")
    for r in range(10):
        caps = sample_capacities(graph, dist, 1, r)
        assert net.value(caps) == tau(graph, caps).value


def test_flow_is_monotone_in_capacities():
    graph = build_cylinder(CylinderSpec.tilted((1, 2), [4], n=1, height=2))
    rng = np.random.default_rng(0)
    for _ in range(20):
        caps = rng.integers(0, 5, graph.num_edges)
        more = caps + rng.integers(0, 2, graph.num_edges)
        assert tau(graph, more).value >= tau(graph, caps).value


def test_dimacs_round_trip():
    graph = build_cylinder(CylinderSpec.straight(2, [1], n=3, height=2))
    caps = sample_capacities(graph, DistributionSpec.parse("bernoulli:0.7"), 0, 0)
    buf = io.StringIO()
    write_dimacs(graph, caps, graph.upper, graph.lower, buf, comment="test instance")
    prob = read_dimacs(buf.getvalue().splitlines())
    V = graph.num_vertices
    assert prob.num_nodes == V + 2 and prob.source == V + 1 and prob.sink == V + 2
    # solve the read-back problem with the package solver on a directed expansion
    g = graph_from_edges(prob.num_nodes, [(a - 1, b - 1) for a, b, _ in prob.arcs if a < b and
                                          a <= V and b <= V])
    cap_map = {}
    for a, b, c in prob.arcs:
        if a <= V and b <= V:
            cap_map[(min(a, b) - 1, max(a, b) - 1)] = c
    g_caps = np.array([cap_map[tuple(e)] for e in g.edges.tolist()])
    srcs = [b - 1 for a, b, _ in prob.arcs if a == prob.source]
    snks = [a - 1 for a, b, _ in prob.arcs if b == prob.sink]
    assert max_flow(g, g_caps, srcs, snks).value == tau(graph, caps).value
    # and the same instance in networkx directly from the arcs
    import networkx as nx

    dg = nx.DiGraph()
    for a, b, c in prob.arcs:
        dg.add_edge(a, b, capacity=c)
    assert nx.maximum_flow_value(dg, prob.source, prob.sink) == tau(graph, caps).value


def test_dimacs_reader_rejects_garbage():
    with pytest.raises(ValueError):
        read_dimacs(["p min 3 2"])
    with pytest.raises(ValueError):
        read_dimacs(["x 1 2"])
    with pytest.raises(ValueError):
        read_dimacs(["p max 3 0"])
