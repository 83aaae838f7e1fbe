"""Directed acyclic graphs, source/sink augmentation and path weights.

Vertices are numbered ``1..p`` in every public function. Inside an
:class:`AugmentedNetwork` the source is node ``0`` and the sink is node
``p + 1``.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DuplicateArc,
    InvalidPath,
    MissingArcCost,
    SelfLoop,
    ZeroProbabilityArc,
)

Path = tuple[int, ...]


@dataclass(frozen=True)
class Dag:
    """A validated DAG on vertices ``1..p``.

    ``arcs`` keeps the insertion order of the input; ``topo_order`` is a
    permutation of ``1..p`` in which every arc goes forward.
    """

    p: int
    arcs: tuple[tuple[int, int], ...]
    topo_order: tuple[int, ...]
    _succ: tuple[tuple[int, ...], ...] = field(repr=False, compare=False)
    _pred: tuple[tuple[int, ...], ...] = field(repr=False, compare=False)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def successors(self, u: int) -> tuple[int, ...]:
        return self._succ[u]

    def predecessors(self, v: int) -> tuple[int, ...]:
        return self._pred[v]

    def has_arc(self, u: int, v: int) -> bool:
        return 1 <= u <= self.p and v in self._succ[u]

    def arc_array(self) -> np.ndarray:
        """Arcs as an ``(m, 2)`` integer array (1-based)."""
        if not self.arcs:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.arcs, dtype=np.int64)

    def subgraph(self, vertices: Iterable[int], arcs: Iterable[tuple[int, int]]):
        """Induce a smaller DAG; returns ``(dag, vertex_map)``.

        ``vertex_map[i]`` is the original id of new vertex ``i + 1``.
        """
        keep = sorted(set(vertices))
        index = {v: i + 1 for i, v in enumerate(keep)}
        sub_arcs = [(index[u], index[v]) for u, v in arcs]
        return build_dag(sub_arcs, len(keep)), tuple(keep)


def build_dag(edge_list: Iterable[tuple[int, int]], p: int) -> Dag:
    """Validate an arc list and compute a topological order (Kahn).

    Among the vertices available at each step the smallest id is taken, so
    the order is deterministic.
    """
    if p < 0:
        raise ValueError("vertex count must be non-negative")
    arcs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    succ: list[list[int]] = [[] for _ in range(p + 1)]
    pred: list[list[int]] = [[] for _ in range(p + 1)]
    for u, v in edge_list:
        u, v = int(u), int(v)
        if not (1 <= u <= p and 1 <= v <= p):
            raise ValueError(f"arc ({u}, {v}) has an endpoint outside 1..{p}")
        if u == v:
            raise SelfLoop(f"self-loop on vertex {u}")
        if (u, v) in seen:
            raise DuplicateArc(f"arc ({u}, {v}) appears twice")
        seen.add((u, v))
        arcs.append((u, v))
        succ[u].append(v)
        pred[v].append(u)

    indeg = [len(pred[v]) for v in range(p + 1)]
    heap = [v for v in range(1, p + 1) if indeg[v] == 0]
    heapq.heapify(heap)
    order: list[int] = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(order) < p:
        placed = set(order)
        for u, v in arcs:
            if u not in placed and v not in placed:
                raise CycleDetected(f"arc ({u}, {v}) lies on a cycle", arc=(u, v))
        raise CycleDetected("graph contains a cycle")  # pragma: no cover

    return Dag(
        p=p,
        arcs=tuple(arcs),
        topo_order=tuple(order),
        _succ=tuple(tuple(sorted(s)) for s in succ),
        _pred=tuple(tuple(sorted(s)) for s in pred),
    )


def dagify(undirected_edges: Iterable[Sequence[int]], p: int, seed: int) -> Dag:
    """Orient every edge along a random total order of the vertices."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(p) + 1  # perm[k] is the vertex at rank k
    rank = np.empty(p + 1, dtype=np.int64)
    rank[perm] = np.arange(p)
    arcs = []
    seen = set()
    for edge in undirected_edges:
        a, b = (int(x) for x in edge)
        if a == b:
            raise SelfLoop(f"self-loop on vertex {a}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise DuplicateArc(f"edge {{{a}, {b}}} appears twice")
        seen.add(key)
        arcs.append((a, b) if rank[a] < rank[b] else (b, a))
    return build_dag(arcs, p)


@dataclass(frozen=True)
class CostConfig:
    """Arc costs of the augmented graph.

    Either ``gamma`` is set (uniform configuration: source arcs cost gamma,
    every other arc costs 1) or the three explicit cost containers are.
    """

    gamma: float | None = None
    source: np.ndarray | None = None
    sink: np.ndarray | None = None
    internal: Mapping[tuple[int, int], float] | None = None

    @classmethod
    def uniform(cls, gamma: float) -> "CostConfig":
        if gamma < 0:
            raise ValueError("gamma must be non-negative")
        return cls(gamma=float(gamma))

    @classmethod
    def explicit(cls, source, sink, internal: Mapping[tuple[int, int], float]):
        return cls(
            source=np.asarray(source, dtype=float),
            sink=np.asarray(sink, dtype=float),
            internal=dict(internal),
        )

    @property
    def is_uniform(self) -> bool:
        return self.gamma is not None


@dataclass(frozen=True)
class AugmentedNetwork:
    """The DAG plus a source linked to every vertex and every vertex linked to a sink."""

    dag: Dag
    source_cost: np.ndarray  # cost of (s, v), indexed by v - 1
    sink_cost: np.ndarray  # cost of (u, t), indexed by u - 1
    arc_cost: np.ndarray  # aligned with dag.arcs

    @property
    def p(self) -> int:
        return self.dag.p

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return self.dag.p + 1

    @property
    def n_arcs(self) -> int:
        return self.dag.n_arcs + 2 * self.dag.p

    def arcs_with_costs(self) -> list[tuple[int, int, float]]:
        """All arcs of the augmented graph as ``(u, v, cost)``, s = 0 and t = p + 1."""
        p = self.p
        out = [(0, v, float(self.source_cost[v - 1])) for v in range(1, p + 1)]
        out += [(u, v, float(c)) for (u, v), c in zip(self.dag.arcs, self.arc_cost)]
        out += [(u, p + 1, float(self.sink_cost[u - 1])) for u in range(1, p + 1)]
        return out

    def cost(self, u: int, v: int) -> float:
        if u == 0:
            return float(self.source_cost[v - 1])
        if v == self.p + 1:
            return float(self.sink_cost[u - 1])
        return float(self.arc_cost[self._arc_index[(u, v)]])

    @property
    def _arc_index(self) -> dict[tuple[int, int], int]:
        idx = self.__dict__.get("_arc_index_cache")
        if idx is None:
            idx = {a: i for i, a in enumerate(self.dag.arcs)}
            object.__setattr__(self, "_arc_index_cache", idx)
        return idx

    def scaled(self, factor: float) -> "AugmentedNetwork":
        return AugmentedNetwork(
            self.dag,
            self.source_cost * factor,
            self.sink_cost * factor,
            self.arc_cost * factor,
        )

    def restrict(self, vertices: Iterable[int], arcs: Iterable[tuple[int, int]]):
        """Network on a vertex/arc subset with the same costs.

        Returns ``(network, vertex_map)`` as :meth:`Dag.subgraph` does.
        """
        arcs = list(arcs)
        sub, vmap = self.dag.subgraph(vertices, arcs)
        idx = np.asarray(vmap, dtype=np.int64) - 1
        # subgraph keeps the order of ``arcs``
        arc_cost = np.array([self.cost(u, v) for u, v in arcs], dtype=float)
        return (
            AugmentedNetwork(sub, self.source_cost[idx], self.sink_cost[idx], arc_cost),
            vmap,
        )


def augment(dag: Dag, costs: CostConfig) -> AugmentedNetwork:
    """Attach source and sink to ``dag`` and assign arc costs."""
    p = dag.p
    if costs.is_uniform:
        return AugmentedNetwork(
            dag,
            np.full(p, costs.gamma),
            np.ones(p),
            np.ones(dag.n_arcs),
        )
    if costs.source is None or costs.sink is None or costs.internal is None:
        raise MissingArcCost("explicit costs need source, sink and internal arcs")
    if costs.source.shape != (p,):
        raise MissingArcCost(f"expected {p} source-arc costs, got {costs.source.shape}")
    if costs.sink.shape != (p,):
        raise MissingArcCost(f"expected {p} sink-arc costs, got {costs.sink.shape}")
    arc_cost = np.empty(dag.n_arcs)
    for i, arc in enumerate(dag.arcs):
        if arc not in costs.internal:
            raise MissingArcCost(f"no cost for arc {arc}")
        arc_cost[i] = costs.internal[arc]
    return AugmentedNetwork(dag, costs.source.copy(), costs.sink.copy(), arc_cost)


def check_path(dag: Dag, g: Sequence[int]) -> Path:
    g = tuple(int(v) for v in g)
    if not g:
        raise InvalidPath("a path needs at least one vertex")
    for v in g:
        if not 1 <= v <= dag.p:
            raise InvalidPath(f"vertex {v} outside 1..{dag.p}")
    for u, v in zip(g, g[1:]):
        if not dag.has_arc(u, v):
            raise InvalidPath(f"({u}, {v}) is not an arc")
    return g


def weight_of_path(net: AugmentedNetwork, g: Sequence[int]) -> float:
    """Sum of arc costs along ``(s, g, t)``."""
    g = check_path(net.dag, g)
    total = net.source_cost[g[0] - 1] + net.sink_cost[g[-1] - 1]
    for u, v in zip(g, g[1:]):
        total += net.cost(u, v)
    return float(total)


def shortest_path(net: AugmentedNetwork, node_lengths) -> tuple[Path, float]:
    """Shortest (s, t)-path where each visited vertex adds its node length.

    One backward sweep over the topological order computes, for every vertex,
    the best length of a path from it to the sink; ties between equal
    lengths are broken toward the lexicographically smallest vertex sequence
    (stopping at the sink ranks before any vertex).
    """
    from ._kernels import dag_shortest_path

    lengths = np.asarray(node_lengths, dtype=float)
    if lengths.shape != (net.p,):
        raise ValueError(f"expected {net.p} node lengths, got {lengths.shape}")
    if net.p == 0:
        raise ValueError("empty graph has no path")
    path, length = dag_shortest_path(_csr(net), lengths)
    return tuple(int(v) for v in path), float(length)


def _csr(net: AugmentedNetwork):
    """Successor lists in CSR form with costs, plus the topological order (0-based)."""
    cache = net.__dict__.get("_csr_cache")
    if cache is not None:
        return cache
    p = net.p
    arcs = net.dag.arc_array()
    costs = np.asarray(net.arc_cost, dtype=float)
    if len(arcs):
        order = np.lexsort((arcs[:, 1], arcs[:, 0]))
        tails, heads, costs = arcs[order, 0] - 1, arcs[order, 1] - 1, costs[order]
    else:
        tails = heads = np.zeros(0, dtype=np.int64)
    start = np.zeros(p + 1, dtype=np.int64)
    np.add.at(start, tails + 1, 1)
    start = np.cumsum(start)
    topo = np.asarray(net.dag.topo_order, dtype=np.int64) - 1
    cache = (
        start,
        np.ascontiguousarray(heads, dtype=np.int64),
        np.ascontiguousarray(costs, dtype=float),
        np.ascontiguousarray(net.source_cost, dtype=float),
        np.ascontiguousarray(net.sink_cost, dtype=float),
        topo,
    )
    object.__setattr__(net, "_csr_cache", cache)
    return cache


def coding_costs(dag: Dag, transition: Mapping) -> CostConfig:
    """Costs turning path weights into coding lengths plus one.

    ``transition`` maps each arc of the augmented graph to its probability,
    with keys ``("s", v)``, ``(u, v)`` and ``(u, "t")``. Probabilities out of
    the source and out of every vertex must each sum to one.
    """
    p = dag.p

    def prob(key):
        if key not in transition:
            raise ZeroProbabilityArc(f"no transition probability for arc {key}")
        q = float(transition[key])
        if not q > 0:
            raise ZeroProbabilityArc(f"arc {key} has probability {q}")
        return q

    src = [prob(("s", v)) for v in range(1, p + 1)]
    if not math.isclose(sum(src), 1.0, abs_tol=1e-9):
        raise ValueError(f"source transitions sum to {sum(src)}")
    for u in range(1, p + 1):
        row = prob((u, "t")) + sum(prob((u, v)) for v in dag.successors(u))
        if not math.isclose(row, 1.0, abs_tol=1e-9):
            raise ValueError(f"transitions out of {u} sum to {row}")

    return CostConfig.explicit(
        source=[1.0 - math.log2(q) for q in src],
        sink=[-math.log2(prob((u, "t"))) for u in range(1, p + 1)],
        internal={(u, v): -math.log2(prob((u, v))) for u, v in dag.arcs},
    )


def uniform_transitions(dag: Dag) -> dict:
    """Random-walk transitions spreading mass evenly over out-arcs (t counts as one)."""
    p = dag.p
    trans: dict = {("s", v): 1.0 / p for v in range(1, p + 1)}
    for u in range(1, p + 1):
        k = len(dag.successors(u)) + 1
        trans[(u, "t")] = 1.0 / k
        for v in dag.successors(u):
            trans[(u, v)] = 1.0 / k
    return trans


# ---------------------------------------------------------------- edge lists


@dataclass
class EdgeList:
    p: int
    directed: bool
    edges: list[tuple[int, int]]
    costs: dict[tuple, float]


def read_edge_list(path) -> EdgeList:
    """Parse the ``p m directed|undirected`` text format.

    Lines ``u v [cost]`` follow; ``s v cost`` and ``u t cost`` lines may add
    source and sink arc costs. ``#`` starts a comment.
    """
    with open(path) as fh:
        return parse_edge_list(fh.read())


def parse_edge_list(text: str) -> EdgeList:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    if not lines:
        raise ValueError("empty edge list")
    head = lines[0]
    if len(head) != 3 or head[2] not in ("directed", "undirected"):
        raise ValueError("header must read 'p m directed|undirected'")
    p, m, directed = int(head[0]), int(head[1]), head[2] == "directed"
    edges: list[tuple[int, int]] = []
    costs: dict[tuple, float] = {}
    for tok in lines[1:]:
        if len(tok) not in (2, 3):
            raise ValueError(f"bad edge line: {' '.join(tok)}")
        if tok[0] == "s" or tok[1] == "t":
            if len(tok) != 3:
                raise ValueError("source/sink lines need a cost")
            key = ("s", int(tok[1])) if tok[0] == "s" else (int(tok[0]), "t")
            costs[key] = float(tok[2])
            continue
        u, v = int(tok[0]), int(tok[1])
        edges.append((u, v))
        if len(tok) == 3:
            costs[(u, v)] = float(tok[2])
    if len(edges) != m:
        raise ValueError(f"header announces {m} edges, found {len(edges)}")
    return EdgeList(p, directed, edges, costs)


def write_edge_list(path, p: int, edges, directed: bool = True, costs=None) -> None:
    with open(path, "w") as fh:
        fh.write(f"{p} {len(edges)} {'directed' if directed else 'undirected'}\n")
        for u, v in edges:
            c = None if costs is None else costs.get((u, v))
            fh.write(f"{u} {v}\n" if c is None else f"{u} {v} {c!r}\n")
        if costs:
            for key, c in costs.items():
                if key[0] == "s" or key[1] == "t":
                    fh.write(f"{key[0]} {key[1]} {c!r}\n")


def load_network(path, gamma: float | None = None, seed: int = 0) -> AugmentedNetwork:
    """Read an edge-list file into an augmented network.

    Undirected files are oriented with :func:`dagify`. With ``gamma`` the
    uniform configuration is used, otherwise every arc needs a cost in the file.
    """
    el = read_edge_list(path)
    dag = build_dag(el.edges, el.p) if el.directed else dagify(el.edges, el.p, seed)
    if gamma is not None:
        return augment(dag, CostConfig.uniform(gamma))
    try:
        src = [el.costs[("s", v)] for v in range(1, el.p + 1)]
        snk = [el.costs[(u, "t")] for u in range(1, el.p + 1)]
    except KeyError as exc:
        raise MissingArcCost(f"no cost for arc {exc.args[0]}") from None
    internal = {}
    for u, v in dag.arcs:
        c = el.costs.get((u, v), el.costs.get((v, u)))
        if c is None:
            raise MissingArcCost(f"no cost for arc {(u, v)}")
        internal[(u, v)] = c
    return augment(dag, CostConfig.explicit(src, snk, internal))
