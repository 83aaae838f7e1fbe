"""Minimum-cost flow on (s, t) networks.

Two engines sit behind :func:`min_cost_flow` and :func:`min_cost_flow_convex`:

* cost-scaling push-relabel on integer costs (real costs are multiplied by a
  power of two and rounded), exact for the rounded instance;
* epsilon-relaxation with real prices for the quadratic node costs used by
  the proximal operator of the convex penalty.

Flow from ``source`` to ``sink`` is free (any amount) unless ``flow_value``
fixes it; internally a return arc ``sink -> source`` closes the circulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import Infeasible, NonConservativeInput, NotConverged, Overflow

Path = tuple[int, ...]


@dataclass(frozen=True)
class FlowNetwork:
    """Arcs with bounds and linear costs, plus optional per-node throughput terms.

    ``node_lower`` / ``node_upper`` bound the flow entering a node.
    ``node_hinge[j] = a`` adds ``max(a * (1 - s_j), 0)`` to the objective and
    ``node_quad[j] = b`` adds ``0.5 * max(b - s_j, 0) ** 2`` (``s_j`` is the
    throughput). Entries for the source and sink are ignored.
    """

    n_nodes: int
    tail: np.ndarray
    head: np.ndarray
    cost: np.ndarray
    source: int
    sink: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    node_lower: np.ndarray | None = None
    node_upper: np.ndarray | None = None
    node_hinge: np.ndarray | None = None
    node_quad: np.ndarray | None = None
    flow_value: float | None = None

    def __post_init__(self):
        m = len(self.tail)
        object.__setattr__(self, "tail", np.asarray(self.tail, dtype=np.int64))
        object.__setattr__(self, "head", np.asarray(self.head, dtype=np.int64))
        object.__setattr__(self, "cost", np.asarray(self.cost, dtype=float))
        lo = np.zeros(m) if self.lower is None else np.asarray(self.lower, dtype=float)
        hi = np.full(m, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if np.any(lo < 0) or np.any(lo > hi):
            raise ValueError("arc bounds must satisfy 0 <= lower <= upper")
        for name in ("node_lower", "node_upper", "node_hinge", "node_quad"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=float)
                if val.shape != (self.n_nodes,):
                    raise ValueError(f"{name} needs one entry per node")
                object.__setattr__(self, name, val)

    @property
    def n_arcs(self) -> int:
        return len(self.tail)

    @property
    def has_node_terms(self) -> bool:
        return any(
            getattr(self, name) is not None
            for name in ("node_lower", "node_upper", "node_hinge", "node_quad")
        )

    @classmethod
    def from_arcs(cls, n_nodes, arcs, source, sink, **kw):
        """Build from ``(tail, head, lower, upper, cost)`` tuples."""
        arcs = list(arcs)
        if not arcs:
            z = np.zeros(0)
            return cls(n_nodes, z.astype(np.int64), z.astype(np.int64), z, source, sink,
                       lower=z, upper=z, **kw)
        t, h, lo, hi, c = (np.asarray(col) for col in zip(*arcs))
        return cls(n_nodes, t, h, c, source, sink, lower=lo, upper=hi, **kw)


@dataclass
class FlowState:
    """Solver output.

    ``flow`` is aligned with the arcs of the network handed to the solver;
    ``throughput[j]`` is the flow entering node ``j``. ``cost`` includes node
    terms. For the linear engine ``cost_scaled / scale`` is the exact cost of
    the rounded instance whenever the flow is integral.
    """

    flow: np.ndarray
    throughput: np.ndarray
    cost: float
    cost_scaled: int | float | None = None
    scale: float | None = None
    eps: float | None = None
    prices: np.ndarray | None = field(default=None, repr=False)


@dataclass
class PathDecomposition:
    paths: list[tuple[Path, float]]

    def __iter__(self):
        return iter(self.paths)

    def __len__(self):
        return len(self.paths)


@dataclass(frozen=True)
class FlowSolverConfig:
    """Knobs for both engines.

    ``cost_scale`` maps real costs to integers (reduced automatically, by
    powers of two, when prices could overflow). ``divisor`` is the epsilon
    reduction factor per phase. ``rel_eps`` sets the final epsilon of the
    convex engine relative to the largest cost slope.
    """

    cost_scale: float = 2.0**48
    min_cost_scale: float = 2.0**20
    divisor: int = 4
    rel_eps: float = 1e-13
    max_work: int = 200_000_000
    check_feasible: bool = True

    def __post_init__(self):
        if not self.cost_scale > 0:
            raise ValueError("cost_scale must be positive")
        if not self.rel_eps > 0:
            raise ValueError("rel_eps must be positive")


DEFAULT_CONFIG = FlowSolverConfig()
_PRICE_LIMIT = 2.0**62


def _throughput(n, head, flow):
    s = np.zeros(n)
    np.add.at(s, head, flow)
    return s


def _finite_bound(net: FlowNetwork) -> float:
    """A capacity no optimal flow needs to exceed on any arc.

    Used in place of infinite upper bounds; large enough whenever the
    instance has a bounded optimum.
    """
    lo = net.lower.sum()
    for name in ("node_lower", "node_hinge"):
        val = getattr(net, name)
        if val is not None:
            lo += np.maximum(val, 0).sum() if name == "node_lower" else float(np.count_nonzero(val))
    if net.node_quad is not None:
        lo += np.abs(net.node_quad).sum()
    hi = net.upper[np.isfinite(net.upper)].sum()
    if net.flow_value is not None:
        lo += abs(net.flow_value)
    return float(max(1.0, lo + hi))


def split_nodes(net: FlowNetwork) -> FlowNetwork:
    """Replace each node ``j`` other than s and t by ``j_in -> j_out``.

    ``j_in`` keeps id ``j``; ``j_out`` gets a new id. Original arcs come first
    in the result (same order), then one split arc per node. Throughput bounds
    move onto the split arc. Hinge costs become two parallel split arcs; the
    constant they leave out is recorded so callers can add it back (see
    :func:`min_cost_flow_convex`). Quadratic costs stay attached to the node
    ids of the result.
    """
    n = net.n_nodes
    inner = [j for j in range(n) if j not in (net.source, net.sink)]
    out_id = {j: n + k for k, j in enumerate(inner)}
    n2 = n + len(inner)

    tail = np.array([out_id.get(int(u), int(u)) for u in net.tail], dtype=np.int64)
    head = net.head.copy()
    big = _finite_bound(net)

    lo_n = net.node_lower if net.node_lower is not None else np.zeros(n)
    hi_n = net.node_upper if net.node_upper is not None else np.full(n, np.inf)
    hinge = net.node_hinge if net.node_hinge is not None else np.zeros(n)

    t2, h2, lo2, hi2, c2 = [], [], [], [], []
    for j in inner:
        a = float(hinge[j])
        if a != 0.0:
            if a < 0:
                raise ValueError("hinge coefficients must be non-negative")
            # first unit of throughput earns -a, the rest is free
            t2 += [j, j]
            h2 += [out_id[j], out_id[j]]
            lo2 += [0.0, 0.0]
            hi2 += [min(1.0, hi_n[j]), np.inf]
            c2 += [-a, 0.0]
            if lo_n[j] > 0:
                raise ValueError("hinge cost and throughput lower bound on the same node")
        else:
            t2.append(j)
            h2.append(out_id[j])
            lo2.append(lo_n[j])
            hi2.append(hi_n[j])
            c2.append(0.0)

    quad = None
    if net.node_quad is not None:
        quad = np.zeros(n2)
        quad[:n] = net.node_quad
    return FlowNetwork(
        n2,
        np.concatenate([tail, np.asarray(t2, dtype=np.int64)]),
        np.concatenate([head, np.asarray(h2, dtype=np.int64)]),
        np.concatenate([net.cost, np.asarray(c2, dtype=float)]),
        net.source,
        net.sink,
        lower=np.concatenate([net.lower, np.asarray(lo2, dtype=float)]),
        upper=np.concatenate([np.minimum(net.upper, np.inf), np.asarray(hi2, dtype=float)]),
        node_quad=quad,
        flow_value=net.flow_value,
    )


def _closed_arrays(net: FlowNetwork):
    """Arc arrays with the return arc appended and infinities replaced."""
    big = _finite_bound(net)
    upper = np.where(np.isfinite(net.upper), net.upper, big)
    if net.flow_value is None:
        rlo, rhi = 0.0, big
    else:
        rlo = rhi = float(net.flow_value)
    tail = np.append(net.tail, net.sink).astype(np.int64)
    head = np.append(net.head, net.source).astype(np.int64)
    lower = np.append(net.lower, rlo)
    upper = np.append(upper, rhi)
    cost = np.append(net.cost, 0.0)
    return tail, head, lower, upper, cost, big


def _structure(n, tail, head):
    return _kernels.incidence(n, tail, head)


def _pick_scale(max_abs_cost: float, n: int, cfg: FlowSolverConfig) -> float:
    scale = cfg.cost_scale
    if max_abs_cost == 0:
        return scale
    # prices move by at most 4 n eps0 over all phases, eps0 = max|c| S (n + 1)
    while 8.0 * n * (n + 1) * max_abs_cost * scale >= _PRICE_LIMIT:
        scale /= 2.0
        if scale < cfg.min_cost_scale:
            raise Overflow(
                f"costs up to {max_abs_cost:g} on {n} nodes do not fit 64-bit prices"
            )
    return scale


def scale_costs(cost: np.ndarray, n: int, cfg: FlowSolverConfig = DEFAULT_CONFIG):
    """Round ``cost * scale`` to int64; returns ``(integer_costs, scale)``."""
    max_abs = float(np.max(np.abs(cost), initial=0.0))
    scale = _pick_scale(max_abs, n, cfg)
    return np.rint(cost * scale).astype(np.int64), scale


def _warm_eps(tail, head, lower, upper, mult, x, price, tol) -> int | None:
    """Smallest ``eps`` for which ``(x, price)`` is eps-optimal under ``mult``.

    ``None`` when the prices are too spread out to be reused safely.
    """
    spread = float(price.max()) - float(price.min())
    if spread + float(np.max(np.abs(mult), initial=0)) >= _PRICE_LIMIT / 16:
        return None
    rc = mult + price[tail] - price[head]
    fwd = x < upper - tol
    bwd = x > lower + tol
    viol = 0
    if fwd.any():
        viol = max(viol, int(-rc[fwd].min()))
    if bwd.any():
        viol = max(viol, int(rc[bwd].max()))
    return viol


def solve_scaled(n, tail, head, lower, upper, cint, start, inc,
                 cfg: FlowSolverConfig = DEFAULT_CONFIG, warm=None):
    """Optimal circulation for integer costs ``cint`` (closed network, finite bounds).

    Returns ``(flow, prices)``; raises :class:`Infeasible` when the lower
    bounds cannot be met. ``warm = (flow, prices)`` from an earlier call with
    the same bounds restarts scaling at the epsilon those prices achieve for
    the new costs; if that is already 1 the old flow is returned as is (it
    meets the same optimality test as a cold solve).
    """
    tol = 1e-13 * max(1.0, float(np.max(upper, initial=1.0)))
    if warm is not None:
        mult = cint * (n + 1)
        x0, p0 = warm
        eps_w = _warm_eps(tail, head, lower, upper, mult, x0, p0, tol)
        if eps_w is not None and 4 * n * eps_w < _PRICE_LIMIT / 16:
            x = x0.copy()
            price = p0 - p0.min()
            if eps_w <= 1:
                return x, price
            status = _kernels.cost_scaling(
                n, tail, head, lower, upper, mult, np.zeros(n), x, price, start, inc, tol,
                eps_w * cfg.divisor, cfg.divisor,
            )
            if status == _kernels.OK:
                return x, price
    supply = np.zeros(n)
    if cfg.check_feasible:
        _, ok = _kernels.feasible_flow(n, tail, head, lower, upper, supply, start, inc, tol)
        if not ok:
            raise Infeasible("lower capacities cannot be satisfied")
    mult = cint * (n + 1)
    eps0 = int(np.max(np.abs(mult), initial=0))
    x = lower.copy()
    price = np.zeros(n, dtype=np.int64)
    status = _kernels.cost_scaling(
        n, tail, head, lower, upper, mult, supply, x, price, start, inc, tol,
        max(eps0, 1), cfg.divisor,
    )
    if status == _kernels.INFEASIBLE:
        raise Infeasible("lower capacities cannot be satisfied")
    return x, price


def integer_cost(flow: np.ndarray, cint: np.ndarray) -> int:
    """Exact ``sum(flow * cint)`` for integral flows (Python integers)."""
    nz = np.flatnonzero(flow)
    return sum(int(flow[a]) * int(cint[a]) for a in nz)


def min_cost_flow(net: FlowNetwork, cfg: FlowSolverConfig = DEFAULT_CONFIG) -> FlowState:
    """Optimal flow for linear arc costs (exact for the integer-rounded costs)."""
    if net.node_quad is not None and np.any(net.node_quad != 0):
        raise ValueError("quadratic node costs need min_cost_flow_convex")
    if net.has_node_terms:
        split = split_nodes(net)
        state = min_cost_flow(split, cfg)
        return _unsplit(net, split, state)

    n = net.n_nodes
    tail, head, lower, upper, cost, big = _closed_arrays(net)
    start, inc = _structure(n, tail, head)
    cint, scale = scale_costs(cost, n, cfg)
    x, price = solve_scaled(n, tail, head, lower, upper, cint, start, inc, cfg)

    m = net.n_arcs
    flow = x[:m]
    integral = bool(np.all(flow == np.rint(flow)))
    if integral:
        cost_scaled = integer_cost(flow, cint[:m])
    else:
        cost_scaled = float(np.dot(flow, cint[:m]))
    return FlowState(
        flow=flow.copy(),
        throughput=_throughput(n, net.head, flow),
        cost=float(np.dot(flow, net.cost)),
        cost_scaled=cost_scaled,
        scale=scale,
        prices=price,
    )


def min_cost_flow_convex(net: FlowNetwork, cfg: FlowSolverConfig = DEFAULT_CONFIG) -> FlowState:
    """Optimal flow with convex node costs (hinge and/or quadratic).

    Hinge-only networks are rewritten with parallel arcs and solved exactly by
    the linear engine. Quadratic costs go through epsilon-relaxation, whose
    final epsilon is reported in ``FlowState.eps``.
    """
    has_quad = net.node_quad is not None and np.any(net.node_quad != 0)
    if not has_quad:
        return min_cost_flow(replace(net, node_quad=None), cfg)
    if net.node_hinge is not None and np.any(net.node_hinge != 0):
        raise ValueError("hinge and quadratic costs on the same network are not supported")

    split = split_nodes(net)
    state = _solve_quadratic(split, cfg)
    out = _unsplit(net, split, state)
    return out


def _solve_quadratic(net: FlowNetwork, cfg: FlowSolverConfig, prices=None) -> FlowState:
    """Epsilon-relaxation on a split network whose quadratic terms sit on split arcs."""
    n = net.n_nodes
    tail, head, lower, upper, cost, big = _closed_arrays(net)
    m = net.n_arcs
    qw = np.zeros(len(tail))
    qa = np.zeros(len(tail))
    # quadratic throughput cost of node j lives on its split arc (tail j)
    quad = net.node_quad
    split_arc = {}
    for a in range(m):
        j = int(tail[a])
        if j < len(quad) and quad[j] != 0 and int(head[a]) >= 0:
            split_arc.setdefault(j, a)
    for j, a in split_arc.items():
        qw[a] = 1.0
        qa[a] = quad[j]
    slope = float(np.max(np.abs(cost), initial=0.0) + np.max(np.abs(qa), initial=0.0))
    slope = max(slope, 1e-300)
    tol = 1e-14 * max(1.0, big)
    start, inc = _structure(n, tail, head)
    x = lower.copy()
    price = np.zeros(n) if prices is None else prices.copy()
    status, eps = _kernels.eps_relaxation(
        n, tail, head, lower, upper, cost, qw, qa, np.zeros(n), x, price, start, inc,
        tol, slope, cfg.rel_eps * slope, float(cfg.divisor), cfg.max_work,
    )
    if status == _kernels.INFEASIBLE:
        raise Infeasible("no feasible flow")
    if status == _kernels.NOT_CONVERGED:
        raise NotConverged("epsilon-relaxation hit its work cap", tolerance=eps)
    flow = x[:m]
    total = float(np.dot(flow, net.cost) + 0.5 * np.sum(qw[:m] * np.maximum(qa[:m] - flow, 0) ** 2))
    return FlowState(
        flow=flow.copy(),
        throughput=_throughput(n, net.head, flow),
        cost=total,
        eps=eps,
        prices=price,
    )


def _unsplit(orig: FlowNetwork, split: FlowNetwork, state: FlowState) -> FlowState:
    m = orig.n_arcs
    flow = state.flow[:m].copy()
    through = _throughput(orig.n_nodes, orig.head, flow)
    cost = float(np.dot(flow, orig.cost))
    if orig.node_hinge is not None:
        inner = np.ones(orig.n_nodes, dtype=bool)
        inner[[orig.source, orig.sink]] = False
        cost += float(np.sum((orig.node_hinge * np.maximum(1 - through, 0))[inner]))
    if orig.node_quad is not None:
        inner = np.ones(orig.n_nodes, dtype=bool)
        inner[[orig.source, orig.sink]] = False
        cost += float(np.sum((0.5 * np.maximum(orig.node_quad - through, 0) ** 2)[inner]))
    cost_scaled = state.cost_scaled
    if cost_scaled is not None and orig.node_hinge is not None:
        hinge_const = float(orig.node_hinge[[j for j in range(orig.n_nodes) if j not in (orig.source, orig.sink)]].sum())
        # the split network omits the hinge constant
        cost_scaled = cost_scaled + int(np.rint(hinge_const * state.scale))
    return FlowState(
        flow=flow,
        throughput=through,
        cost=cost,
        cost_scaled=cost_scaled,
        scale=state.scale,
        eps=state.eps,
        prices=state.prices,
    )


def check_flow(net: FlowNetwork, state: FlowState, tol: float = 1e-9) -> None:
    """Raise ``AssertionError`` unless capacity and conservation hold."""
    f = state.flow
    assert f.shape == (net.n_arcs,)
    assert np.all(f >= net.lower - tol), "lower capacity violated"
    assert np.all(f <= net.upper + tol), "upper capacity violated"
    bal = np.zeros(net.n_nodes)
    np.add.at(bal, net.head, f)
    np.subtract.at(bal, net.tail, f)
    inner = np.ones(net.n_nodes, dtype=bool)
    inner[[net.source, net.sink]] = False
    assert np.all(np.abs(bal[inner]) <= tol * max(1.0, float(np.abs(f).max(initial=0)))), "conservation violated"
    if net.node_lower is not None:
        assert np.all(state.throughput[inner] >= net.node_lower[inner] - tol)
    if net.node_upper is not None:
        assert np.all(state.throughput[inner] <= net.node_upper[inner] + tol)


def decompose(net: FlowNetwork, state: FlowState, tol: float = 1e-12) -> PathDecomposition:
    """Peel (s, t)-path flows off an acyclic flow.

    From the source, follow the first arc (lowest arc index) still carrying
    flow until the sink is reached, subtract the bottleneck and repeat. Each
    peel zeroes at least one arc. Paths are returned without s and t.
    """
    f = np.array(state.flow, dtype=float)
    scale = max(1.0, float(np.abs(f).max(initial=0.0)))
    thr = tol * scale
    n = net.n_nodes
    bal = np.zeros(n)
    np.add.at(bal, net.head, f)
    np.subtract.at(bal, net.tail, f)
    for v in range(n):
        if v not in (net.source, net.sink) and abs(bal[v]) > 1e3 * thr:
            raise NonConservativeInput(f"flow is not conserved at node {v}")
    if np.any(f < -thr):
        raise NonConservativeInput("negative arc flow")

    out_arcs: list[list[int]] = [[] for _ in range(n)]
    for a in np.argsort(net.tail, kind="stable"):
        out_arcs[int(net.tail[a])].append(int(a))

    paths: list[tuple[Path, float]] = []
    max_peels = int(np.count_nonzero(f > thr)) + 1
    while True:
        arcs = []
        v = net.source
        visited = {v}
        while v != net.sink:
            nxt = next((a for a in out_arcs[v] if f[a] > thr), None)
            if nxt is None:
                break
            arcs.append(nxt)
            v = int(net.head[nxt])
            if v in visited:
                raise NonConservativeInput("flow contains a cycle")
            visited.add(v)
        if not arcs:
            break
        amount = float(min(f[a] for a in arcs))
        if v != net.sink:
            # rounding residue of a real-valued flow: drop it
            if amount > 1e3 * thr:
                raise NonConservativeInput(f"flow stops at node {v}")
            for a in arcs:
                f[a] = max(f[a] - amount, 0.0)
                if f[a] <= thr:
                    f[a] = 0.0
            continue
        for a in arcs:
            f[a] -= amount
            if f[a] <= thr:
                f[a] = 0.0
        verts = tuple(int(net.head[a]) for a in arcs[:-1])
        paths.append((verts, amount))
        if len(paths) > max_peels:  # pragma: no cover - guarded by the zeroing above
            raise NonConservativeInput("decomposition did not terminate")
    if np.any(f > 1e3 * thr):
        raise NonConservativeInput("flow left on arcs not reachable from the source")
    return PathDecomposition(paths)


def superpose(net: FlowNetwork, dec: PathDecomposition) -> np.ndarray:
    """Arc flows obtained by summing the path flows of ``dec``."""
    index = {}
    for a, (u, v) in enumerate(zip(net.tail, net.head)):
        index.setdefault((int(u), int(v)), a)
    f = np.zeros(net.n_arcs)
    for verts, amount in dec:
        nodes = (net.source, *verts, net.sink)
        for u, v in zip(nodes, nodes[1:]):
            f[index[(u, v)]] += amount
    return f


def dump(net: FlowNetwork, state: FlowState | None = None) -> str:
    """Line-oriented debug text: ``arc u v lower upper cost flow``."""
    lines = [f"network nodes {net.n_nodes} source {net.source} sink {net.sink}"]
    for a in range(net.n_arcs):
        f = "-" if state is None else repr(float(state.flow[a]))
        lines.append(
            f"arc {net.tail[a]} {net.head[a]} {net.lower[a]!r} {net.upper[a]!r} "
            f"{net.cost[a]!r} {f}"
        )
    return "\n".join(lines) + "\n"
