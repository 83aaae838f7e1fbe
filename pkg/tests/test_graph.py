import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles as orc
from pathcode.errors import (
    CycleDetected,
    DuplicateArc,
    InvalidPath,
    MissingArcCost,
    SelfLoop,
    ZeroProbabilityArc,
)
from pathcode.graph import (
    CostConfig,
    augment,
    build_dag,
    coding_costs,
    dagify,
    load_network,
    parse_edge_list,
    shortest_path,
    uniform_transitions,
    weight_of_path,
    write_edge_list,
)

DIAMOND = [(1, 2), (1, 3), (2, 4), (3, 4)]


def _topo_ok(dag):
    pos = {v: k for k, v in enumerate(dag.topo_order)}
    return sorted(dag.topo_order) == list(range(1, dag.p + 1)) and all(
        pos[u] < pos[v] for u, v in dag.arcs
    )


@st.composite
def tiny_dags(draw, p_max=7):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    p = draw(st.integers(1, p_max))
    arcs = orc.random_dag_arcs(rng, p, 3 * p)
    gamma = draw(st.sampled_from([0.0, 0.25, 1.0, 3.0]))
    return p, arcs, gamma


# ---------------------------------------------------------------- build_dag


def test_diamond_order():
    dag = build_dag(DIAMOND, 4)
    assert dag.topo_order in ((1, 2, 3, 4), (1, 3, 2, 4))
    assert _topo_ok(dag)


def test_two_cycle_detected():
    with pytest.raises(CycleDetected) as exc:
        build_dag([(1, 2), (2, 1)], 2)
    assert exc.value.arc in ((1, 2), (2, 1))


def test_longer_cycle_names_an_arc_on_it():
    arcs = [(1, 2), (2, 3), (3, 1), (3, 4)]
    with pytest.raises(CycleDetected) as exc:
        build_dag(arcs, 4)
    assert exc.value.arc in {(1, 2), (2, 3), (3, 1)}


def test_empty_arc_set():
    dag = build_dag([], 3)
    assert dag.n_arcs == 0 and sorted(dag.topo_order) == [1, 2, 3]


@pytest.mark.parametrize(
    "arcs, err",
    [([(1, 1)], SelfLoop), ([(1, 2), (1, 2)], DuplicateArc), ([(1, 5)], ValueError),
     ([(0, 1)], ValueError)],
)
def test_build_dag_rejects(arcs, err):
    with pytest.raises(err):
        build_dag(arcs, 3)


@given(tiny_dags())
@settings(max_examples=60, deadline=None)
def test_topo_order_is_witness(inst):
    p, arcs, _ = inst
    assert _topo_ok(build_dag(arcs, p))


# ---------------------------------------------------------------- dagify


def test_dagify_single_edge_follows_permutation():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(2) + 1
        dag = dagify([(1, 2)], 2, seed)
        assert list(dag.arcs) == [(int(perm[0]), int(perm[1]))]


def test_dagify_triangle():
    for seed in range(10):
        dag = dagify([(1, 2), (2, 3), (1, 3)], 3, seed)
        assert dag.n_arcs == 3 and _topo_ok(dag)


def test_dagify_deterministic_and_keeps_edges():
    rng = np.random.default_rng(0)
    pairs = {tuple(sorted(rng.choice(40, 2, replace=False) + 1)) for _ in range(200)}
    edges = sorted(pairs)
    a = dagify(edges, 40, 7)
    b = dagify(edges, 40, 7)
    assert a.arcs == b.arcs
    assert {tuple(sorted(e)) for e in a.arcs} == set(edges)


def test_dagify_jazz_scale():
    rng = np.random.default_rng(1)
    pairs = set()
    while len(pairs) < 2742:
        u, v = rng.choice(198, 2, replace=False) + 1
        pairs.add((min(u, v), max(u, v)))
    dag = dagify(sorted(pairs), 198, 3)
    assert dag.n_arcs == 2742 and _topo_ok(dag)


@given(st.integers(0, 10_000), st.integers(2, 12))
@settings(max_examples=40, deadline=None)
def test_dagify_always_acyclic(seed, p):
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(1, p + 1) for j in range(i + 1, p + 1) if rng.random() < 0.5]
    dag = dagify(edges, p, seed)
    assert dag.n_arcs == len(edges) and _topo_ok(dag)


# ---------------------------------------------------------------- augment / weights


def test_augment_arc_count():
    net = augment(build_dag(DIAMOND, 4), CostConfig.uniform(1.0))
    assert net.n_arcs == 4 + 2 * 4


def test_fig3a_style_path_weight():
    dag = build_dag([(4, 2), (2, 3), (1, 2), (1, 4)], 4)
    for gamma in (0.0, 0.5, 2.0):
        net = augment(dag, CostConfig.uniform(gamma))
        assert weight_of_path(net, (4, 2, 3)) == pytest.approx(gamma + 3)


def test_explicit_costs_path_weight():
    dag = build_dag([(1, 2)], 2)
    net = augment(dag, CostConfig.explicit([1.0, 5.0], [7.0, 1.0], {(1, 2): 2.0}))
    assert weight_of_path(net, (1, 2)) == 4.0


def test_explicit_costs_missing_arc():
    dag = build_dag(DIAMOND, 4)
    with pytest.raises(MissingArcCost):
        augment(dag, CostConfig.explicit(np.ones(4), np.ones(4), {(1, 2): 1.0}))


def test_weight_examples_and_invalid_path():
    net = augment(build_dag(DIAMOND, 4), CostConfig.uniform(1.0))
    assert weight_of_path(net, (3,)) == 2.0
    assert weight_of_path(net, (1, 2, 4)) == 4.0
    with pytest.raises(InvalidPath):
        weight_of_path(net, (1, 4))


@given(tiny_dags())
@settings(max_examples=60, deadline=None)
def test_uniform_weight_is_gamma_plus_length(inst):
    p, arcs, gamma = inst
    net = augment(build_dag(arcs, p), CostConfig.uniform(gamma))
    for g in orc.all_paths(p, arcs):
        assert weight_of_path(net, g) == pytest.approx(gamma + len(g))


# ---------------------------------------------------------------- shortest path


def test_shortest_path_zero_lengths():
    net = augment(build_dag(DIAMOND, 4), CostConfig.uniform(0.5))
    path, length = shortest_path(net, np.zeros(4))
    assert len(path) == 1 and length == 1.5
    assert path == (1,)  # lexicographic tie-break


def test_shortest_path_diamond():
    net = augment(build_dag(DIAMOND, 4), CostConfig.uniform(1.0))
    path, length = shortest_path(net, np.array([-2.0, -2.0, 0.0, -2.0]))
    assert path == (1, 2, 4) and length == -2.0


def test_shortest_path_single_vertex():
    net = augment(build_dag([], 1), CostConfig.uniform(0.0))
    assert shortest_path(net, np.array([5.0])) == ((1,), 6.0)


@given(tiny_dags(p_max=8), st.integers(0, 2**32 - 1))
@settings(max_examples=80, deadline=None)
def test_shortest_path_matches_enumeration(inst, seed):
    p, arcs, gamma = inst
    net = augment(build_dag(arcs, p), CostConfig.uniform(gamma))
    lengths = np.random.default_rng(seed).normal(size=p) * 2
    path, length = shortest_path(net, lengths)
    paths = orc.all_paths(p, arcs)
    vals = [gamma + len(g) + sum(lengths[v - 1] for v in g) for g in paths]
    best = min(vals)
    assert length == pytest.approx(best, abs=1e-12)
    ties = [g for g, v in zip(paths, vals) if abs(v - best) <= 1e-12]
    assert path == min(ties)


# ---------------------------------------------------------------- coding costs


def test_coding_costs_uniform_out_arcs():
    dag = build_dag(DIAMOND, 4)
    cfg = coding_costs(dag, uniform_transitions(dag))
    # vertex 1 has 2 successors plus the sink: k = 3
    assert cfg.internal[(1, 2)] == pytest.approx(math.log2(3))
    assert cfg.source[0] == pytest.approx(1 + math.log2(4))


def test_coding_costs_chain_probability_one():
    dag = build_dag([], 1)
    net = augment(dag, coding_costs(dag, {("s", 1): 1.0, (1, "t"): 1.0}))
    assert weight_of_path(net, (1,)) == 1.0


def test_coding_costs_zero_probability():
    dag = build_dag([(1, 2)], 2)
    trans = {("s", 1): 1.0, ("s", 2): 0.0, (1, 2): 0.5, (1, "t"): 0.5, (2, "t"): 1.0}
    with pytest.raises(ZeroProbabilityArc):
        coding_costs(dag, trans)


@given(tiny_dags(p_max=7), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_kraft_equality(inst, seed):
    p, arcs, _ = inst
    dag = build_dag(arcs, p)
    rng = np.random.default_rng(seed)
    trans = {}
    src = rng.dirichlet(np.ones(p))
    for v in range(1, p + 1):
        trans[("s", v)] = src[v - 1]
    for u in range(1, p + 1):
        succ = dag.successors(u)
        q = rng.dirichlet(np.ones(len(succ) + 1))
        trans[(u, "t")] = q[0]
        for v, qq in zip(succ, q[1:]):
            trans[(u, v)] = qq
    net = augment(dag, coding_costs(dag, trans))
    total = math.fsum(2.0 ** -(weight_of_path(net, g) - 1) for g in orc.all_paths(p, arcs))
    assert total == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- edge-list format


def test_edge_list_round_trip(tmp_path):
    path = tmp_path / "g.txt"
    write_edge_list(path, 4, DIAMOND)
    el = parse_edge_list(path.read_text())
    assert el.p == 4 and el.directed and el.edges == DIAMOND
    net = load_network(path, gamma=1.0)
    assert net.n_arcs == 12


def test_edge_list_comments_and_explicit_costs(tmp_path):
    text = "# comment\n2 1 directed\n1 2 2.0  # arc\ns 1 1\ns 2 1\n1 t 1\n2 t 3\n"
    path = tmp_path / "g.txt"
    path.write_text(text)
    net = load_network(path)
    assert weight_of_path(net, (1, 2)) == 6.0


def test_edge_list_missing_cost(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("2 1 directed\n1 2 2.0\n")
    with pytest.raises(MissingArcCost):
        load_network(path)


@pytest.mark.parametrize("text", ["", "3 1 sideways\n1 2\n", "3 2 directed\n1 2\n"])
def test_edge_list_malformed(text):
    with pytest.raises(ValueError):
        parse_edge_list(text)


def test_undirected_file_is_oriented(tmp_path):
    path = tmp_path / "g.txt"
    write_edge_list(path, 3, [(1, 2), (2, 3), (1, 3)], directed=False)
    net = load_network(path, gamma=0.5, seed=4)
    assert net.n_arcs == 3 + 6
