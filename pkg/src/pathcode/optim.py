"""Penalized empirical risk minimization: ``min_w L(w) + lambda * Omega(w)``.

Losses are the square loss ``0.5 * ||y - X w||^2`` and the class-balanced
logistic loss. Solvers are ISTA (any penalty, monotone), FISTA with a
duality-gap stopping rule (convex penalties) and an active-set method for the
convex path-coding penalty, plus warm-started continuation over a lambda grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from . import penalty as pen
from .errors import NotConverged
from .flow import PathDecomposition
from .penalty import PenaltyKind, PenaltySpec


class Loss(str, Enum):
    SQUARE = "square"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p) and response ``y``; labels in {-1, +1} for classification."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise ValueError("X must be a matrix")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("data must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def class_weights(self) -> np.ndarray:
        """``1 / n_{y_i}`` per sample; both classes must be present."""
        cached = self.__dict__.get("_beta")
        if cached is not None:
            return cached
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ValueError("logistic loss needs labels in {-1, +1}")
        n_pos = int(np.sum(self.y > 0))
        n_neg = self.n - n_pos
        if n_pos == 0 or n_neg == 0:
            raise ValueError("both classes must be present")
        beta = np.where(self.y > 0, 1.0 / n_pos, 1.0 / n_neg)
        object.__setattr__(self, "_beta", beta)
        return beta

    def columns(self, idx) -> "Dataset":
        return Dataset(self.X[:, idx], self.y)


def square_loss(data: Dataset, w) -> tuple[float, np.ndarray]:
    """``0.5 * ||X w - y||^2`` and its gradient ``X^T (X w - y)``."""
    r = data.X @ w - data.y
    return 0.5 * float(r @ r), data.X.T @ r


def logistic_loss(data: Dataset, w) -> tuple[float, np.ndarray]:
    """Class-balanced logistic loss ``sum_i log(1 + exp(-y_i x_i^T w)) / n_{y_i}``."""
    beta = data.class_weights()
    margin = data.y * (data.X @ w)
    value = float(beta @ np.logaddexp(0.0, -margin))
    grad = -(data.X.T @ (beta * data.y * expit(-margin)))
    return value, grad


_LOSSES: dict[Loss, Callable] = {Loss.SQUARE: square_loss, Loss.LOGISTIC: logistic_loss}


def loss_value_grad(loss: Loss, data: Dataset, w):
    return _LOSSES[Loss(loss)](data, w)


def lipschitz_bound(data: Dataset, loss: Loss = Loss.SQUARE, n_iter: int = 30) -> float:
    """Power-iteration estimate of ``||X||_2^2`` inflated by ``1e-3``.

    For the logistic loss the estimate is multiplied by half the largest
    sample weight. Backtracking in the solvers covers any underestimate.
    """
    X = data.X
    v = np.ones(X.shape[1]) / math.sqrt(max(X.shape[1], 1))
    sigma2 = 0.0
    for _ in range(n_iter):
        z = X.T @ (X @ v)
        sigma2 = float(np.linalg.norm(z))
        if sigma2 == 0.0:
            break
        v = z / sigma2
    rho = sigma2 * (1.0 + 1e-3)
    if Loss(loss) is Loss.LOGISTIC:
        rho *= 0.5 * float(data.class_weights().max())
    return max(rho, 1e-12)


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``rho=None`` means power iteration plus backtracking. ``tol`` is the
    relative duality gap for convex penalties; ``step_tol`` the stationarity
    threshold (sup-norm of an update, relative to ``max(1, ||w||_inf)``).
    """

    rho: float | None = None
    max_iter: int = 20_000
    tol: float = 1e-4
    step_tol: float = 1e-8
    gap_every: int = 10
    backtracking: bool = True
    restart: bool = True
    active_set_slack: float = 1e-6
    subproblem_tol: float = 1e-6

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class ProblemSpec:
    data: Dataset
    penalty: PenaltySpec
    loss: Loss = Loss.SQUARE
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        object.__setattr__(self, "loss", Loss(self.loss))
        p = self.penalty.p
        if p is not None and p != self.data.p:
            raise ValueError(f"penalty has {p} variables but X has {self.data.p} columns")
        if self.loss is Loss.LOGISTIC:
            self.data.class_weights()

    @property
    def lam(self) -> float:
        return self.penalty.lam

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return replace(self, penalty=self.penalty.with_lambda(lam))

    def value_grad(self, w):
        return loss_value_grad(self.loss, self.data, w)

    def objective(self, w) -> float:
        return self.value_grad(w)[0] + self.lam * pen.value(self.penalty, w)


@dataclass
class FitResult:
    w: np.ndarray
    lam: float
    objective: list[float]
    gap: float | None
    iterations: int
    converged: bool
    reason: str
    rho: float
    paths: PathDecomposition | None = None
    active_vertices: tuple[int, ...] | None = None
    extra: dict = field(default_factory=dict)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.w))

    @property
    def final_objective(self) -> float:
        return self.objective[-1]


# ------------------------------------------------------------------ duality


def dual_value(problem: ProblemSpec, w, grad=None) -> tuple[float, float]:
    """Dual objective at the scaled dual candidate, and the scaling ``alpha``.

    ``alpha = min(1, lambda / Omega*(grad L(w)))`` makes the candidate
    feasible; the square loss uses the scaled residual, the logistic loss
    scaled sample probabilities.
    """
    data = problem.data
    if grad is None:
        grad = problem.value_grad(w)[1]
    tau = pen.dual_norm(problem.penalty, grad)
    lam = problem.lam
    alpha = 1.0 if tau <= lam else lam / tau
    if problem.loss is Loss.SQUARE:
        r = data.y - data.X @ w
        theta = alpha * r
        return float(theta @ data.y - 0.5 * theta @ theta), alpha
    beta = data.class_weights()
    q = alpha * expit(-data.y * (data.X @ w))
    ent = np.zeros_like(q)
    pos = q > 0
    ent[pos] += q[pos] * np.log(q[pos])
    one = q < 1
    ent[one] += (1 - q[one]) * np.log1p(-q[one])
    return float(-(beta @ ent)), alpha


def duality_gap(problem: ProblemSpec, w, primal: float | None = None, grad=None) -> float:
    """Relative duality gap ``(primal - dual) / max(1, |primal|)``."""
    if not problem.penalty.kind.convex:
        raise ValueError("duality gap needs a convex penalty")
    w = np.asarray(w, dtype=float)
    if primal is None or grad is None:
        val, g = problem.value_grad(w)
        grad = g if grad is None else grad
        if primal is None:
            primal = val + problem.lam * pen.value(problem.penalty, w)
    dual, _ = dual_value(problem, w, grad)
    return (primal - dual) / max(1.0, abs(primal))


def lambda_max(problem: ProblemSpec) -> float:
    """Smallest lambda for which ``w = 0`` is a solution (convex) or fixed point (non-convex).

    For the non-convex penalties this is the threshold at which the first
    proximal-gradient step from zero returns zero.
    """
    grad = problem.value_grad(np.zeros(problem.data.p))[1]
    spec = problem.penalty
    if spec.kind.convex:
        return pen.dual_norm(spec, grad)
    rho = problem.solver.rho or lipschitz_bound(problem.data, problem.loss)
    if spec.kind is PenaltyKind.L0:
        return float(np.max(0.5 * grad * grad, initial=0.0)) / rho
    psi_spec = PenaltySpec(PenaltyKind.PSI, 1.0, spec.net, spec.flow_config)
    return pen.dual_norm_psi(psi_spec, 0.5 * grad * grad).tau / rho


def lambda_grid(lmax: float, n_points: int = 25, ratio: float = 2.0 ** -0.25) -> np.ndarray:
    """Descending grid ``lmax * ratio ** i``, ``i = 0..n_points-1``."""
    return lmax * ratio ** np.arange(n_points)


# ------------------------------------------------------------------ solvers


def _init(problem: ProblemSpec, w0):
    p = problem.data.p
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=float)
    if w.shape != (p,):
        raise ValueError(f"initial point must have length {p}")
    rho = problem.solver.rho or lipschitz_bound(problem.data, problem.loss)
    return w, rho


def ista(problem: ProblemSpec, w0=None) -> FitResult:
    """Proximal gradient with backtracking; the objective never increases.

    A step that would increase the objective (possible only through
    rounding in the flow solver) is rejected and the run stops.
    """
    cfg = problem.solver
    spec = problem.penalty
    lam = problem.lam
    w, rho = _init(problem, w0)
    f, g = problem.value_grad(w)
    obj = f + lam * pen.value(spec, w)
    trace = [obj]
    reason = "max_iter"
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        for _ in range(8):
            while True:
                w_new, om = pen.prox_with_value(spec, w - g / rho, 1.0 / rho)
                d = w_new - w
                f_new, g_new = problem.value_grad(w_new)
                if not cfg.backtracking or f_new <= f + g @ d + 0.5 * rho * (d @ d) + 1e-12 * abs(f):
                    break
                rho *= 2.0
            obj_new = f_new + lam * om
            if obj_new <= obj:
                break
            # rounding-level increase: retry with a shorter step
            rho *= 2.0
        if obj_new > obj:
            reason = "non_monotone_step_rejected"
            converged = True
            it -= 1
            break
        step = float(np.max(np.abs(d), initial=0.0))
        w, f, g, obj = w_new, f_new, g_new, obj_new
        trace.append(obj)
        if step <= cfg.step_tol * max(1.0, float(np.max(np.abs(w), initial=0.0))):
            reason = "stationary"
            converged = True
            break
    gap = None
    if spec.kind.convex:
        gap = duality_gap(problem, w, primal=obj, grad=g)
    return FitResult(w, lam, trace, gap, it, converged, reason, rho)


def fista(problem: ProblemSpec, w0=None, raise_on_failure: bool = False) -> FitResult:
    """Accelerated proximal gradient with backtracking and adaptive restart.

    Stops when the relative duality gap falls below ``solver.tol`` (checked
    every ``gap_every`` iterations and at the first one).
    """
    cfg = problem.solver
    spec = problem.penalty
    if not spec.kind.convex:
        raise ValueError("fista needs a convex penalty; use ista")
    lam = problem.lam
    x, rho = _init(problem, w0)
    f_x, g_x = problem.value_grad(x)
    om_x = pen.value(spec, x)
    trace = [f_x + lam * om_x]
    gap = duality_gap(problem, x, primal=trace[0], grad=g_x)
    best = (gap, x.copy(), trace[0])
    if gap <= cfg.tol:
        return FitResult(x, lam, trace, gap, 0, True, "gap", rho)
    y, f_y, g_y = x.copy(), f_x, g_x
    t = 1.0
    it = 0
    reason = "max_iter"
    for it in range(1, cfg.max_iter + 1):
        while True:
            x_new, om = pen.prox_with_value(spec, y - g_y / rho, 1.0 / rho)
            d = x_new - y
            f_new, g_new = problem.value_grad(x_new)
            if not cfg.backtracking or f_new <= f_y + g_y @ d + 0.5 * rho * (d @ d) + 1e-12 * abs(f_y):
                break
            rho *= 2.0
        trace.append(f_new + lam * om)
        if cfg.restart and (y - x_new) @ (x_new - x) > 0:
            t = 1.0
            y = x_new.copy()
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        if it % cfg.gap_every == 0 or it == 1:
            gap = duality_gap(problem, x, primal=trace[-1], grad=g_new)
            if gap < best[0]:
                best = (gap, x.copy(), trace[-1])
            if gap <= cfg.tol:
                reason = "gap"
                break
        if y is x_new or np.array_equal(y, x_new):
            f_y, g_y = f_new, g_new
        else:
            f_y, g_y = problem.value_grad(y)
    else:
        gap = duality_gap(problem, x, primal=trace[-1], grad=g_new)
        reason = "gap" if gap <= cfg.tol else "max_iter"
        if gap < best[0]:
            best = (gap, x.copy(), trace[-1])
    converged = reason == "gap"
    if not converged:
        result = FitResult(best[1], lam, trace, best[0], it, False, reason, rho)
        if raise_on_failure:
            raise NotConverged(f"relative gap {best[0]:.3g} above {cfg.tol:g}", best[0], result)
        return result
    return FitResult(x, lam, trace, gap, it, True, reason, rho)


def active_set(problem: ProblemSpec, w0=None, max_outer: int | None = None) -> FitResult:
    """Grow a subgraph path by path, solving each restricted problem with FISTA.

    A restricted solution is optimal for the full problem once
    ``psi*(grad L(w)) <= lambda * (1 + slack)``; otherwise the path attaining
    the dual norm is added together with the arcs joining its vertices.
    """
    spec = problem.penalty
    if spec.kind is not PenaltyKind.PSI:
        raise ValueError("the active-set method is for the convex path-coding penalty")
    cfg = problem.solver
    net = spec.net
    lam = problem.lam
    p = problem.data.p
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=float)
    rho = cfg.rho or 0.0

    verts: set[int] = set()
    arcs: set[tuple[int, int]] = set()
    if w0 is not None and np.any(w):
        # start from the paths that carry the initial point
        for g, _ in pen.psi(spec, w).support_cover:
            _add_path(net, g, verts, arcs)
    w = np.zeros(p) if not verts else w
    sub_tol = cfg.subproblem_tol
    inner_iters = 0
    outer = 0
    trace: list[float] = []
    reason = "certified"
    converged = True
    while True:
        if verts:
            sub_net, vmap = net.restrict(verts, sorted(arcs))
            idx = np.asarray(vmap) - 1
            sub_data = problem.data.columns(idx)
            # the restricted design has a smaller Lipschitz constant
            sub_rho = cfg.rho or lipschitz_bound(sub_data, problem.loss)
            sub = ProblemSpec(
                sub_data,
                PenaltySpec(PenaltyKind.PSI, lam, sub_net, spec.flow_config),
                problem.loss,
                replace(cfg, tol=sub_tol, rho=sub_rho),
            )
            res = fista(sub, w[idx])
            inner_iters += res.iterations
            rho = max(rho, res.rho)
            w = np.zeros(p)
            w[idx] = res.w
            trace.extend(res.objective)
        f, grad = problem.value_grad(w)
        dn = pen.dual_norm_psi(spec, grad)
        outer += 1
        if dn.tau <= lam * (1.0 + cfg.active_set_slack):
            break
        grew = _add_path(net, dn.witness_path, verts, arcs)
        if not grew:
            # the subproblem was not solved accurately enough to exclude this path
            if sub_tol <= 1e-12:
                reason = "stalled"
                converged = False
                break
            sub_tol *= 1e-2
        if max_outer is not None and outer >= max_outer:
            reason = "max_outer"
            converged = False
            break
    om = pen.value(spec, w)
    primal = f + lam * om
    trace.append(primal)
    gap = duality_gap(problem, w, primal=primal, grad=grad)
    if not rho:
        rho = lipschitz_bound(problem.data, problem.loss)
    out = FitResult(w, lam, trace, gap, inner_iters, converged, reason, rho,
                    active_vertices=tuple(sorted(verts)))
    out.extra["outer_iterations"] = outer
    return out


def _add_path(net, g, verts: set, arcs: set) -> bool:
    before = (len(verts), len(arcs))
    verts.update(g)
    gs = set(g)
    for u in g:
        for v in net.dag.successors(u):
            if v in gs:
                arcs.add((u, v))
    return (len(verts), len(arcs)) != before


def solve(problem: ProblemSpec, w0=None, method: str = "auto") -> FitResult:
    """Dispatch to a solver; ``auto`` is FISTA for convex penalties, ISTA otherwise."""
    if method == "auto":
        method = "fista" if problem.penalty.kind.convex else "ista"
    if method == "fista":
        return fista(problem, w0)
    if method == "ista":
        return ista(problem, w0)
    if method in ("active-set", "active_set"):
        return active_set(problem, w0)
    raise ValueError(f"unknown solver {method!r}")


def continuation(problem: ProblemSpec, grid: Sequence[float], method: str = "auto",
                 stop: Callable[[FitResult], bool] | None = None) -> list[FitResult]:
    """Solve along a descending lambda grid, warm-starting each point.

    ``stop(result)`` may end the sweep early (e.g. once supports grow too
    large). Solver failures at a grid point are recorded and the sweep
    continues from the best iterate.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) >= 0):
        raise ValueError("lambda grid must be strictly decreasing")
    results = []
    w = None
    for lam in grid:
        sub = problem.with_lambda(float(lam))
        try:
            res = solve(sub, w, method)
        except NotConverged as exc:  # pragma: no cover - solve() records failures itself
            res = exc.result
        results.append(res)
        w = res.w
        if stop is not None and stop(res):
            break
    return results


def ols_refit(data: Dataset, support, return_info: bool = False):
    """Least squares restricted to ``support`` (0-based indices), zeros elsewhere.

    A rank-deficient restricted design gets a ``1e-8`` ridge; ``return_info``
    reports whether that happened.
    """
    support = np.asarray(sorted(set(int(j) for j in np.atleast_1d(support))), dtype=np.int64)
    w = np.zeros(data.p)
    ridge = False
    if support.size:
        Xs = data.X[:, support]
        if support.size > data.n or np.linalg.matrix_rank(Xs) < support.size:
            ridge = True
            A = Xs.T @ Xs + 1e-8 * np.eye(support.size)
            w[support] = np.linalg.solve(A, Xs.T @ data.y)
        else:
            w[support] = np.linalg.lstsq(Xs, data.y, rcond=None)[0]
    if return_info:
        return w, ridge
    return w
