"""Independent reference implementations used as test oracles.

Nothing here calls the flow machinery: paths are enumerated by plain DFS,
set covers by dynamic programming over vertex subsets, linear programs by
``scipy.optimize.linprog`` and the convex prox as a small quadratic program
over per-path amounts.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog, minimize


# ---------------------------------------------------------------- random inputs


def random_dag_arcs(rng: np.random.Generator, p: int, m_max: int) -> list[tuple[int, int]]:
    """Random arcs on 1..p oriented along a random vertex order."""
    order = rng.permutation(p) + 1
    pairs = [(int(order[i]), int(order[j])) for i in range(p) for j in range(i + 1, p)]
    m = int(rng.integers(0, min(m_max, len(pairs)) + 1))
    pick = rng.choice(len(pairs), size=m, replace=False) if m else []
    return sorted(pairs[k] for k in pick)


def random_instance(rng, p_max=8, m_max=14, gammas=(0.0, 0.5, 1.0, 2.0)):
    p = int(rng.integers(1, p_max + 1))
    arcs = random_dag_arcs(rng, p, m_max)
    gamma = float(rng.choice(gammas))
    return p, arcs, gamma


# ---------------------------------------------------------------- paths


def all_paths(p: int, arcs) -> list[tuple[int, ...]]:
    """Every directed path (at least one vertex) by DFS from each vertex."""
    succ = {v: [] for v in range(1, p + 1)}
    for u, v in arcs:
        succ[u].append(v)
    out = []

    def dfs(path):
        out.append(tuple(path))
        for w in succ[path[-1]]:
            dfs(path + [w])

    for v in range(1, p + 1):
        dfs([v])
    return out


def path_weight(g, source_cost, sink_cost, arc_cost: dict) -> float:
    """``c(s, g1) + sum of internal arcs + c(gk, t)``."""
    total = source_cost[g[0] - 1] + sink_cost[g[-1] - 1]
    for u, v in zip(g, g[1:]):
        total += arc_cost[(u, v)]
    return total


def uniform_weights(paths, gamma):
    return np.array([gamma + len(g) for g in paths], dtype=float)


def incidence(p: int, paths) -> np.ndarray:
    N = np.zeros((p, len(paths)))
    for k, g in enumerate(paths):
        for v in g:
            N[v - 1, k] = 1.0
    return N


# ---------------------------------------------------------------- set cover


def cover_costs(p: int, paths, eta) -> list[float]:
    """``best[mask]``: cheapest collection of paths covering vertex set ``mask``.

    Dynamic programming on bitmasks; a path is a bitmask of its vertices.
    """
    masks = [sum(1 << (v - 1) for v in g) for g in paths]
    full = 1 << p
    best = [math.inf] * full
    best[0] = 0.0
    for mask in range(1, full):
        low = mask & -mask
        b = math.inf
        for pm, c in zip(masks, eta):
            if pm & low:
                cand = c + best[mask & ~pm]
                if cand < b:
                    b = cand
        best[mask] = b
    return best


def set_cover(p: int, paths, eta, support) -> float:
    mask = sum(1 << int(j) for j in support)
    return cover_costs(p, paths, eta)[mask]


# ---------------------------------------------------------------- convex penalty


def psi_lp(N: np.ndarray, eta: np.ndarray, w) -> float:
    """``min eta^T x  s.t.  N x >= |w|, x >= 0``."""
    a = np.abs(np.asarray(w, dtype=float))
    if not a.any():
        return 0.0
    res = linprog(eta, A_ub=-N, b_ub=-a, bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def dual_norm_enum(paths, eta, kappa) -> float:
    a = np.abs(np.asarray(kappa, dtype=float))
    return max(math.fsum(a[v - 1] for v in g) / e for g, e in zip(paths, eta))


def path_qp(N: np.ndarray, eta: np.ndarray, b) -> tuple[np.ndarray, float]:
    """``min 0.5 ||(b - N x)_+||^2 + eta^T x`` over ``x >= 0``.

    Solved as the equivalent quadratic program in ``(x, z)`` with
    ``z >= b - N x``, ``z >= 0`` by SLSQP (bound-constrained quasi-Newton on
    the piecewise-quadratic form stalls on degenerate instances).
    """
    b = np.asarray(b, dtype=float)
    p, k = N.shape

    def f(v):
        return 0.5 * v[k:] @ v[k:] + eta @ v[:k], np.concatenate([eta, v[k:]])

    jac = np.hstack([N, np.eye(p)])
    cons = {"type": "ineq", "fun": lambda v: v[k:] + N @ v[:k] - b, "jac": lambda v: jac}
    res = minimize(f, np.concatenate([np.zeros(k), np.maximum(b, 0)]), jac=True,
                   method="SLSQP", constraints=[cons], bounds=[(0, None)] * (k + p),
                   options={"ftol": 1e-15, "maxiter": 2000})
    x = res.x[:k]
    r = np.maximum(b - N @ x, 0.0)
    return x, float(0.5 * r @ r + eta @ x)


def prox_psi_oracle(N: np.ndarray, eta: np.ndarray, u, lam: float) -> np.ndarray:
    """Prox of ``lam * psi`` through per-path amounts ``x >= 0``.

    For fixed ``x`` the best ``|w_j|`` is ``min(|u_j|, (N x)_j)``, leaving
    ``min 0.5 ||(|u| - N x)_+||^2 + lam eta^T x``.
    """
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    x, _ = path_qp(N, lam * np.asarray(eta, dtype=float), a)
    return np.sign(u) * np.minimum(a, N @ x)


def prox_phi_brute(p: int, paths, eta, u, lam: float) -> tuple[np.ndarray, float]:
    """Global minimizer of ``0.5 ||u - w||^2 + lam phi(w)`` over all 2^p supports.

    Ties go to the smaller support.
    """
    u = np.asarray(u, dtype=float)
    best_cover = cover_costs(p, paths, eta)
    best = (math.inf, None)
    for mask in sorted(range(1 << p), key=lambda m: bin(m).count("1")):
        supp = [j for j in range(p) if mask >> j & 1]
        off = [j for j in range(p) if not mask >> j & 1]
        val = lam * best_cover[mask] + 0.5 * float(np.sum(u[off] ** 2))
        if val < best[0]:
            best = (val, supp)
    w = np.zeros(p)
    w[best[1]] = u[best[1]]
    return w, best[0]


# ---------------------------------------------------------------- flows


def min_cost_flow_lp(n, tail, head, lower, upper, cost, source, sink) -> float:
    """Minimum cost of a source-to-sink flow of any value (conservation elsewhere)."""
    m = len(tail)
    inner = [v for v in range(n) if v not in (source, sink)]
    A = np.zeros((len(inner), m))
    row = {v: i for i, v in enumerate(inner)}
    for a in range(m):
        if head[a] in row:
            A[row[head[a]], a] += 1.0
        if tail[a] in row:
            A[row[tail[a]], a] -= 1.0
    res = linprog(cost, A_eq=A if inner else None, b_eq=np.zeros(len(inner)) if inner else None,
                  bounds=list(zip(lower, upper)), method="highs")
    if res.status == 2:
        return math.nan
    assert res.status == 0, res.message
    return float(res.fun)


# ---------------------------------------------------------------- regression


def lasso_cd(X, y, lam, iters=100_000, tol=1e-13) -> np.ndarray:
    """Cyclic coordinate descent for ``0.5 ||y - X w||^2 + lam ||w||_1``."""
    n, p = X.shape
    w = np.zeros(p)
    r = y.astype(float).copy()
    col2 = np.sum(X * X, axis=0)
    for _ in range(iters):
        delta = 0.0
        for j in range(p):
            if col2[j] == 0:
                continue
            old = w[j]
            z = X[:, j] @ r + col2[j] * old
            new = math.copysign(max(abs(z) - lam, 0.0), z) / col2[j]
            if new != old:
                r -= X[:, j] * (new - old)
                w[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return w


def components_bfs(support, edges) -> int:
    supp = set(int(v) for v in support)
    nb = {v: set() for v in supp}
    for u, v in edges:
        if u in supp and v in supp:
            nb[u].add(v)
            nb[v].add(u)
    seen = set()
    count = 0
    for v in supp:
        if v in seen:
            continue
        count += 1
        stack = [v]
        seen.add(v)
        while stack:
            x = stack.pop()
            for y in nb[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
    return count


def powerset(items):
    items = list(items)
    return itertools.chain.from_iterable(itertools.combinations(items, r) for r in range(len(items) + 1))
