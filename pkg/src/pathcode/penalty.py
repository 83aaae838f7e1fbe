"""Path-coding penalties, their proximal operators and the dual norm.

For a vector ``w`` on the vertices of a DAG,

* ``phi(w)`` is the cheapest total weight of a set of paths covering the
  support of ``w`` (a weighted set cover over all paths);
* ``psi(w)`` is its convex relaxation, the cheapest non-negative combination
  of paths dominating ``|w|`` entry-wise.

Both are computed as minimum-cost flows on the source/sink augmented graph
with every vertex ``j`` split into ``j_in -> j_out``; the flow through that
arc is the throughput ``s_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import NotConverged, TooManyPaths
from .flow import (
    DEFAULT_CONFIG,
    FlowNetwork,
    FlowSolverConfig,
    FlowState,
    PathDecomposition,
    decompose,
    integer_cost,
    scale_costs,
    solve_scaled,
)
from .graph import AugmentedNetwork, Dag, Path, augment, shortest_path, weight_of_path


class PenaltyKind(str, Enum):
    PHI = "phi"
    PSI = "psi"
    L0 = "l0"
    L1 = "l1"

    @property
    def convex(self) -> bool:
        return self in (PenaltyKind.PSI, PenaltyKind.L1)

    @property
    def needs_graph(self) -> bool:
        return self in (PenaltyKind.PHI, PenaltyKind.PSI)


@dataclass(frozen=True)
class PenaltySpec:
    """Which penalty, on which network, with which regularization weight."""

    kind: PenaltyKind
    lam: float = 1.0
    net: AugmentedNetwork | None = None
    flow_config: FlowSolverConfig = DEFAULT_CONFIG

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")
        if self.kind.needs_graph:
            if self.net is None:
                raise ValueError(f"penalty {self.kind.value} needs a graph")
            _check_costs(self.net, self.kind)

    @property
    def p(self) -> int | None:
        return None if self.net is None else self.net.p

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.kind, lam, self.net, self.flow_config)


def _check_costs(net: AugmentedNetwork, kind: PenaltyKind) -> None:
    checked = net.__dict__.get("_checked_costs")
    if checked is None:
        costs = np.concatenate([net.source_cost, net.sink_cost, net.arc_cost])
        if np.any(costs < 0) or not np.all(np.isfinite(costs)):
            raise ValueError("path-coding penalties need finite non-negative arc costs")
        min_weight = shortest_path(net, np.zeros(net.p))[1] if net.p else 1.0
        checked = min_weight > 0
        object.__setattr__(net, "_checked_costs", checked)
    if kind is PenaltyKind.PSI and not checked:
        raise ValueError("some path has zero weight; psi would not be a norm")


@dataclass
class PenaltyValue:
    value: float
    support_cover: PathDecomposition
    flow: FlowState | None = field(default=None, repr=False)


@dataclass
class DualNormResult:
    tau: float
    witness_path: Path | None
    iterations: int


@dataclass
class PathBasis:
    """All paths of a small DAG with their incidence matrix and weights.

    ``N[j - 1, k] = 1`` when vertex ``j`` lies on ``paths[k]``.
    """

    paths: list[Path]
    N: np.ndarray
    eta: np.ndarray

    def __len__(self):
        return len(self.paths)


# ------------------------------------------------------------------ network


class _SplitTemplate:
    """Split-node flow network for an augmented graph, built once per graph.

    Nodes: ``s = 0``, ``j_in = j``, ``t = p + 1``, ``j_out = p + 1 + j``.
    Arcs: the augmented arcs in :meth:`AugmentedNetwork.arcs_with_costs`
    order, then two parallel split arcs per vertex (``A`` then ``B``), then
    the return arc ``t -> s``.
    """

    def __init__(self, net: AugmentedNetwork):
        p = net.p
        self.p = p
        self.n = 2 * p + 2
        aug = net.arcs_with_costs()
        self.n_aug = len(aug)
        tail = np.array([u for u, _, _ in aug], dtype=np.int64)
        head = np.array([v for _, v, _ in aug], dtype=np.int64)
        # arcs leave from j_out
        inner_tail = (tail >= 1) & (tail <= p)
        tail = np.where(inner_tail, tail + p + 1, tail)
        verts = np.arange(1, p + 1, dtype=np.int64)
        self.tail = np.concatenate([tail, verts, verts, [p + 1]]).astype(np.int64)
        self.head = np.concatenate([head, verts + p + 1, verts + p + 1, [0]]).astype(np.int64)
        self.aug_cost = np.array([c for _, _, c in aug], dtype=float)
        self.A = slice(self.n_aug, self.n_aug + p)
        self.B = slice(self.n_aug + p, self.n_aug + 2 * p)
        self.ret = self.n_aug + 2 * p
        self.m = self.ret + 1
        self.start, self.inc = _kernels.incidence(self.n, self.tail, self.head)
        self._aug_net = None
        self._net = net
        # last (scale, flow, prices) per problem family, for warm starts
        self.warm: dict = {}

    @classmethod
    def of(cls, net: AugmentedNetwork) -> "_SplitTemplate":
        tpl = net.__dict__.get("_split_template")
        if tpl is None:
            tpl = cls(net)
            object.__setattr__(net, "_split_template", tpl)
        return tpl

    def arrays(self, cost_factor: float, big: float):
        lower = np.zeros(self.m)
        upper = np.full(self.m, big)
        cost = np.zeros(self.m)
        cost[: self.n_aug] = cost_factor * self.aug_cost
        return lower, upper, cost

    def aug_network(self) -> FlowNetwork:
        if self._aug_net is None:
            aug = self._net.arcs_with_costs()
            self._aug_net = FlowNetwork.from_arcs(
                self.p + 2, [(u, v, 0.0, np.inf, c) for u, v, c in aug], 0, self.p + 1
            )
        return self._aug_net

    def throughput(self, x: np.ndarray) -> np.ndarray:
        return x[self.A] + x[self.B]

    def state(self, x: np.ndarray, cost: float, **kw) -> FlowState:
        flow = x[: self.n_aug].copy()
        through = np.zeros(self.p + 2)
        through[1 : self.p + 1] = self.throughput(x)
        return FlowState(flow=flow, throughput=through, cost=cost, **kw)

    def cover(self, state: FlowState) -> PathDecomposition:
        return decompose(self.aug_network(), state)


def _linear_solve(tpl: _SplitTemplate, lower, upper, cost, cfg, bump=None, warm_key=None):
    cint, scale = scale_costs(cost, tpl.n, cfg)
    if bump is not None:
        cint[bump] += 1
    warm = None
    if warm_key is not None:
        prev = tpl.warm.get(warm_key)
        if prev is not None and prev[0] == scale:
            warm = prev[1:]
    x, price = solve_scaled(tpl.n, tpl.tail, tpl.head, lower, upper, cint, tpl.start,
                            tpl.inc, cfg, warm=warm)
    if warm_key is not None:
        tpl.warm[warm_key] = (scale, x, price)
    return x, cint, scale


def _convex_violation(tpl, x, price, cost, qw, qa, lower, upper) -> float:
    """Largest breach of complementary slackness by ``(x, price)``."""
    delta = price[tpl.tail] - price[tpl.head]
    d = cost - qw * np.maximum(qa - x, 0.0)
    up = np.where(x < upper, delta - d, 0.0)
    down = np.where(x > lower, d - delta, 0.0)
    return float(max(up.max(initial=0.0), down.max(initial=0.0)))


def _as_vector(w, p: int | None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("expected a vector")
    if p is not None and w.shape[0] != p:
        raise ValueError(f"expected a vector of length {p}, got {w.shape[0]}")
    if not np.all(np.isfinite(w)):
        raise ValueError("vector has non-finite entries")
    return w


# ------------------------------------------------------------------ penalties


def phi(spec: PenaltySpec, w) -> PenaltyValue:
    """Non-convex path-coding penalty (unscaled by lambda).

    Lower capacity 1 on the split arc of every vertex in the support; the
    optimal integral flow is a minimum-weight path cover of the support.
    """
    tpl = _SplitTemplate.of(spec.net)
    w = _as_vector(w, tpl.p)
    supp = w != 0
    if not supp.any():
        return PenaltyValue(0.0, PathDecomposition([]))
    big = float(supp.sum()) + 1.0
    lower, upper, cost = tpl.arrays(1.0, big)
    lower[tpl.A] = supp.astype(float)
    upper[tpl.B] = 0.0
    x, cint, scale = _linear_solve(tpl, lower, upper, cost, spec.flow_config)
    value = integer_cost(x[: tpl.n_aug], cint[: tpl.n_aug]) / scale
    state = tpl.state(x, value, cost_scaled=integer_cost(x[: tpl.n_aug], cint[: tpl.n_aug]), scale=scale)
    return PenaltyValue(float(value), tpl.cover(state), state)


def psi(spec: PenaltySpec, w) -> PenaltyValue:
    """Convex path-coding penalty (unscaled by lambda); a norm for positive weights."""
    tpl = _SplitTemplate.of(spec.net)
    w = _as_vector(w, tpl.p)
    a = np.abs(w)
    if not a.any():
        return PenaltyValue(0.0, PathDecomposition([]))
    big = float(a.sum()) + 1.0
    lower, upper, cost = tpl.arrays(1.0, big)
    lower[tpl.A] = a
    upper[tpl.B] = 0.0
    x, _, scale = _linear_solve(tpl, lower, upper, cost, spec.flow_config)
    value = float(np.dot(x[: tpl.n_aug], tpl.aug_cost))
    state = tpl.state(x, value, scale=scale)
    return PenaltyValue(value, tpl.cover(state), state)


def prox_phi(spec: PenaltySpec, u, lam: float | None = None, return_cover: bool = False):
    """Exact proximal operator of ``lam * phi`` (a global minimizer).

    Minimizes ``0.5 * ||u - w||^2 + lam * phi(w)``. The node cost
    ``0.5 * u_j^2 * max(1 - s_j, 0)`` becomes a unit-capacity split arc of
    cost ``-u_j^2 / 2`` beside a free one. Exact ties between keeping and
    dropping a variable are resolved toward dropping it.
    """
    w, _, state = _prox_phi(spec, u, lam)
    if return_cover:
        tpl = _SplitTemplate.of(spec.net)
        return w, (PathDecomposition([]) if state is None else tpl.cover(state))
    return w


def _prox_phi(spec: PenaltySpec, u, lam: float | None = None):
    """``(w, phi(w), flow)``; the optimal flow is a cheapest cover of ``Supp(w)``."""
    tpl = _SplitTemplate.of(spec.net)
    u = _as_vector(u, tpl.p)
    lam = spec.lam if lam is None else lam
    if lam == 0:
        return u.copy(), None, None
    if not u.any():
        return np.zeros_like(u), 0.0, None
    big = float(tpl.p) + 1.0
    lower, upper, cost = tpl.arrays(lam, big)
    cost[tpl.A] = -0.5 * u * u
    upper[tpl.A] = 1.0
    bump = np.arange(tpl.A.start, tpl.A.stop)
    x, cint, scale = _linear_solve(tpl, lower, upper, cost, spec.flow_config, bump=bump,
                                   warm_key="prox_phi")
    s = tpl.throughput(x)
    w = np.where(s > 0.5, u, 0.0)
    val = float(np.dot(x[: tpl.n_aug], tpl.aug_cost))
    return w, val, tpl.state(x, val, scale=scale)


def prox_psi(spec: PenaltySpec, u, lam: float | None = None, return_cover: bool = False):
    """Proximal operator of ``lam * psi`` by epsilon-relaxation.

    Node cost ``0.5 * max(|u_j| - s_j, 0)^2``, arc costs scaled by ``lam``;
    the solution is ``sign(u_j) * min(|u_j|, s_j)``.
    """
    w, _, state = _prox_psi(spec, u, lam)
    if return_cover:
        tpl = _SplitTemplate.of(spec.net)
        return w, (PathDecomposition([]) if state is None else tpl.cover(state))
    return w


def _prox_psi(spec: PenaltySpec, u, lam: float | None = None):
    """``(w, psi(w), flow)``; the optimal flow also solves ``psi(w)``."""
    tpl = _SplitTemplate.of(spec.net)
    u = _as_vector(u, tpl.p)
    lam = spec.lam if lam is None else lam
    if lam == 0:
        return u.copy(), None, None
    a = np.abs(u)
    if not a.any():
        return np.zeros_like(u), 0.0, None
    cfg = spec.flow_config
    big = float(a.sum()) + 1.0
    lower, upper, cost = tpl.arrays(lam, big)
    upper[tpl.B] = 0.0
    qw = np.zeros(tpl.m)
    qa = np.zeros(tpl.m)
    qw[tpl.A] = 1.0
    qa[tpl.A] = a
    slope = float(lam * tpl.aug_cost.max(initial=0.0) + a.max())
    tol = 1e-14 * big
    eps_final = cfg.rel_eps * slope
    eps0 = slope
    prev = tpl.warm.get("prox_psi")
    status = None
    if prev is not None:
        # restart from the previous prices at the epsilon they achieve now; far-off
        # prices can leave large imbalances to clear in tiny price steps, so the warm
        # attempt gets a reduced budget and falls back to a cold start
        x, price = prev[0].copy(), prev[1].copy()
        np.clip(x, lower, upper, out=x)
        eps0 = min(slope, max(_convex_violation(tpl, x, price, cost, qw, qa, lower, upper),
                              eps_final))
        status, eps = _kernels.eps_relaxation(
            tpl.n, tpl.tail, tpl.head, lower, upper, cost, qw, qa, np.zeros(tpl.n), x, price,
            tpl.start, tpl.inc, tol, eps0, eps_final, float(cfg.divisor),
            max(cfg.max_work // 20, 1),
        )
    if status != _kernels.OK:
        x = lower.copy()
        price = np.zeros(tpl.n)
        status, eps = _kernels.eps_relaxation(
            tpl.n, tpl.tail, tpl.head, lower, upper, cost, qw, qa, np.zeros(tpl.n), x, price,
            tpl.start, tpl.inc, tol, slope, eps_final, float(cfg.divisor), cfg.max_work,
        )
    if status != _kernels.OK:
        tpl.warm.pop("prox_psi", None)
        raise NotConverged("prox_psi flow solver did not converge", tolerance=eps)
    tpl.warm["prox_psi"] = (x.copy(), price.copy())
    s = tpl.throughput(x)
    w = np.sign(u) * np.minimum(a, s)
    val = float(np.dot(x[: tpl.n_aug], tpl.aug_cost))
    return w, val, tpl.state(x, val, eps=eps)


def dual_norm_psi(spec: PenaltySpec, kappa) -> DualNormResult:
    """``psi*(kappa) = max_g ||kappa_g||_1 / eta_g`` by iterated shortest paths.

    Starts from the singleton path at ``argmax |kappa_j|``; each round sets
    ``tau`` to the ratio of the current path and looks for a path of
    negative length under node lengths ``-|kappa_j| / tau``.
    """
    net = spec.net
    a = np.abs(_as_vector(kappa, net.p))
    if not a.any():
        return DualNormResult(0.0, None, 0)
    g: Path = (int(np.argmax(a)) + 1,)
    tau = _ratio(net, a, g)
    iterations = 0
    while True:
        iterations += 1
        cand, delta = shortest_path(net, -a / tau)
        if delta >= -1e-12 * (1.0 + _path_sum(a, cand) / tau):
            break
        new_tau = _ratio(net, a, cand)
        if not new_tau > tau:
            break
        g, tau = cand, new_tau
    return DualNormResult(float(tau), g, iterations)


def _path_sum(a: np.ndarray, g: Path) -> float:
    return math.fsum(a[v - 1] for v in g)


def _ratio(net: AugmentedNetwork, a: np.ndarray, g: Path) -> float:
    return _path_sum(a, g) / weight_of_path(net, g)


# ------------------------------------------------------------------ baselines


def prox_l1(lam: float, u) -> np.ndarray:
    """Soft thresholding."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def prox_l0(lam: float, u) -> np.ndarray:
    """Hard thresholding: keep ``u_j`` when ``|u_j| > sqrt(2 lam)`` (ties dropped)."""
    u = np.asarray(u, dtype=float)
    return np.where(0.5 * u * u > lam, u, 0.0)


# ------------------------------------------------------------------ dispatch


def value(spec: PenaltySpec, w) -> float:
    """``Omega(w)`` without the lambda factor."""
    w = np.asarray(w, dtype=float)
    if spec.kind is PenaltyKind.L0:
        return float(np.count_nonzero(w))
    if spec.kind is PenaltyKind.L1:
        return float(np.abs(w).sum())
    if spec.kind is PenaltyKind.PHI:
        return phi(spec, w).value
    return psi(spec, w).value


def prox_with_value(spec: PenaltySpec, u, step: float = 1.0):
    """``(prox, Omega(prox))`` for ``step * lambda * Omega``; saves a flow solve."""
    lam = step * spec.lam
    if spec.kind is PenaltyKind.PHI:
        w, val, _ = _prox_phi(spec, u, lam)
    elif spec.kind is PenaltyKind.PSI:
        w, val, _ = _prox_psi(spec, u, lam)
    else:
        w = prox(spec, u, step)
        val = None
    if val is None:
        val = value(spec, w)
    return w, val


def prox(spec: PenaltySpec, u, step: float = 1.0) -> np.ndarray:
    """Proximal operator of ``step * lambda * Omega``."""
    lam = step * spec.lam
    if spec.kind is PenaltyKind.L0:
        return prox_l0(lam, u)
    if spec.kind is PenaltyKind.L1:
        return prox_l1(lam, u)
    if spec.kind is PenaltyKind.PHI:
        return prox_phi(spec, u, lam)
    return prox_psi(spec, u, lam)


def dual_norm(spec: PenaltySpec, kappa) -> float:
    """Dual norm of a convex penalty (``l_inf`` for ``l1``)."""
    if spec.kind is PenaltyKind.L1:
        return float(np.max(np.abs(kappa), initial=0.0))
    if spec.kind is PenaltyKind.PSI:
        return dual_norm_psi(spec, kappa).tau
    raise ValueError(f"{spec.kind.value} is not a norm")


def support_paths(spec: PenaltySpec, w) -> PathDecomposition:
    """Paths selected by ``w``: the cover realizing the penalty value."""
    if spec.kind is PenaltyKind.PHI:
        return phi(spec, w).support_cover
    if spec.kind is PenaltyKind.PSI:
        return psi(spec, w).support_cover
    return PathDecomposition([((int(j) + 1,), 1.0) for j in np.flatnonzero(w)])


# ------------------------------------------------------------------ enumeration


def enumerate_paths(dag_or_net, costs=None, max_vertices: int = 14,
                    max_paths: int = 200_000) -> PathBasis:
    """Every path of a small DAG, in lexicographic order of topological ranks.

    Accepts either an :class:`AugmentedNetwork` or a ``(Dag, CostConfig)`` pair.
    """
    if isinstance(dag_or_net, AugmentedNetwork):
        net = dag_or_net
    else:
        net = augment(dag_or_net, costs)
    dag: Dag = net.dag
    if dag.p > max_vertices:
        raise TooManyPaths(f"{dag.p} vertices exceed the enumeration limit {max_vertices}")
    rank = {v: k for k, v in enumerate(dag.topo_order)}
    paths: list[Path] = []

    def extend(prefix):
        paths.append(prefix)
        if len(paths) > max_paths:
            raise TooManyPaths(f"more than {max_paths} paths")
        for v in sorted(dag.successors(prefix[-1]), key=rank.__getitem__):
            extend(prefix + (v,))

    for v in dag.topo_order:
        extend((v,))
    N = np.zeros((dag.p, len(paths)))
    for k, g in enumerate(paths):
        N[np.asarray(g) - 1, k] = 1.0
    eta = np.array([weight_of_path(net, g) for g in paths])
    return PathBasis(paths, N, eta)
