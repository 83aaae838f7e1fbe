"""Compiled inner loops: DAG shortest path and the two min-cost flow solvers.

Arc incidence is stored in CSR form: ``inc_start[v]:inc_start[v+1]`` indexes
``inc_arc`` where a value ``a >= 0`` is arc ``a`` leaving ``v`` and a value
``a < 0`` is arc ``~a`` entering ``v``.
"""
import numpy as np
from numba import njit

OK = 0
INFEASIBLE = 1
NOT_CONVERGED = 2


@njit(cache=True)
def _tie_tol(x):
    return 1e-12 * (1.0 + abs(x))


@njit(cache=True)
def dag_shortest_path(csr, lengths):
    start, heads, costs, src_cost, snk_cost, topo = csr
    p = lengths.shape[0]
    dist = np.empty(p)
    nxt = np.full(p, -1, dtype=np.int64)
    for k in range(p - 1, -1, -1):
        v = topo[k]
        best = snk_cost[v]
        arg = -1
        for e in range(start[v], start[v + 1]):
            cand = costs[e] + dist[heads[e]]
            # successors are sorted by id; the sink ranks first on ties
            if cand < best - _tie_tol(best):
                best = cand
                arg = heads[e]
        dist[v] = lengths[v] + best
        nxt[v] = arg
    best = np.inf
    first = -1
    for v in range(p):
        cand = src_cost[v] + dist[v]
        if first < 0 or cand < best - _tie_tol(best):
            best = cand
            first = v
    count = 0
    v = first
    while v >= 0:
        count += 1
        v = nxt[v]
    path = np.empty(count, dtype=np.int64)
    v = first
    for i in range(count):
        path[i] = v + 1
        v = nxt[v]
    return path, best


@njit(cache=True)
def incidence(n, tail, head):
    m = tail.shape[0]
    deg = np.zeros(n + 1, dtype=np.int64)
    for a in range(m):
        deg[tail[a] + 1] += 1
        deg[head[a] + 1] += 1
    for v in range(n):
        deg[v + 1] += deg[v]
    fill = deg[:n].copy()
    inc = np.empty(2 * m, dtype=np.int64)
    for a in range(m):
        inc[fill[tail[a]]] = a
        fill[tail[a]] += 1
        inc[fill[head[a]]] = ~a
        fill[head[a]] += 1
    return deg, inc


@njit(cache=True)
def feasible_flow(n, tail, head, lower, upper, supply, inc_start, inc_arc, tol):
    """Route the lower-bound imbalances with BFS augmenting paths.

    Returns a feasible flow and a success flag.
    """
    m = tail.shape[0]
    x = lower.copy()
    bal = supply.copy()
    for a in range(m):
        bal[head[a]] += lower[a]
        bal[tail[a]] -= lower[a]
    parent = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    while True:
        for v in range(n):
            parent[v] = -2
        qh = 0
        qt = 0
        for v in range(n):
            if bal[v] > tol:
                parent[v] = -1
                queue[qt] = v
                qt += 1
        if qt == 0:
            return x, True
        sink = -1
        while qh < qt and sink < 0:
            v = queue[qh]
            qh += 1
            for k in range(inc_start[v], inc_start[v + 1]):
                a = inc_arc[k]
                if a >= 0:
                    w = head[a]
                    res = upper[a] - x[a]
                else:
                    w = tail[~a]
                    res = x[~a] - lower[~a]
                if res > tol and parent[w] == -2:
                    parent[w] = k
                    if bal[w] < -tol:
                        sink = w
                        break
                    queue[qt] = w
                    qt += 1
        if sink < 0:
            return x, False
        # bottleneck
        amount = -bal[sink]
        w = sink
        while parent[w] >= 0:
            a = inc_arc[parent[w]]
            if a >= 0:
                res = upper[a] - x[a]
                w = tail[a]
            else:
                res = x[~a] - lower[~a]
                w = head[~a]
            amount = min(amount, res)
        amount = min(amount, bal[w])
        w = sink
        while parent[w] >= 0:
            a = inc_arc[parent[w]]
            if a >= 0:
                x[a] += amount
                w = tail[a]
            else:
                x[~a] -= amount
                w = head[~a]
        bal[w] -= amount
        bal[sink] += amount


@njit(cache=True)
def _refine(eps, n, tail, head, lower, upper, cost, supply, x, price,
            inc_start, inc_arc, tol, floor):
    m = tail.shape[0]
    for a in range(m):
        rc = cost[a] + price[tail[a]] - price[head[a]]
        if rc < 0:
            x[a] = upper[a]
        elif rc > 0:
            x[a] = lower[a]
    excess = supply.copy()
    for a in range(m):
        excess[head[a]] += x[a]
        excess[tail[a]] -= x[a]
    cur = inc_start[:n].copy()
    queue = np.empty(n + 1, dtype=np.int64)
    queued = np.zeros(n, dtype=np.bool_)
    qh = 0
    qt = 0
    cap = n + 1
    n_def = 0
    for v in range(n):
        if excess[v] > tol:
            queue[qt] = v
            qt = (qt + 1) % cap
            queued[v] = True
        elif excess[v] < -tol:
            n_def += 1
    while qh != qt and n_def > 0:
        v = queue[qh]
        qh = (qh + 1) % cap
        queued[v] = False
        while excess[v] > tol and n_def > 0:
            end = inc_start[v + 1]
            k = cur[v]
            while k < end:
                a = inc_arc[k]
                if a >= 0:
                    w = head[a]
                    res = upper[a] - x[a]
                    if res > tol and cost[a] + price[v] - price[w] < 0:
                        if excess[v] >= res:
                            d = res
                            x[a] = upper[a]
                        else:
                            d = excess[v]
                            x[a] += d
                        excess[v] -= d
                        if excess[w] < -tol and excess[w] + d >= -tol:
                            n_def -= 1
                        excess[w] += d
                        if excess[w] > tol and not queued[w]:
                            queue[qt] = w
                            qt = (qt + 1) % cap
                            queued[w] = True
                        if excess[v] <= tol:
                            break
                else:
                    e = ~a
                    w = tail[e]
                    res = x[e] - lower[e]
                    if res > tol and price[v] - price[w] - cost[e] < 0:
                        if excess[v] >= res:
                            d = res
                            x[e] = lower[e]
                        else:
                            d = excess[v]
                            x[e] -= d
                        excess[v] -= d
                        if excess[w] < -tol and excess[w] + d >= -tol:
                            n_def -= 1
                        excess[w] += d
                        if excess[w] > tol and not queued[w]:
                            queue[qt] = w
                            qt = (qt + 1) % cap
                            queued[w] = True
                        if excess[v] <= tol:
                            break
                k += 1
            cur[v] = k
            if excess[v] > tol:
                # relabel
                found = False
                best = 0
                for kk in range(inc_start[v], end):
                    a = inc_arc[kk]
                    if a >= 0:
                        if upper[a] - x[a] > tol:
                            cand = price[head[a]] - cost[a]
                            if not found or cand > best:
                                best = cand
                                found = True
                    else:
                        e = ~a
                        if x[e] - lower[e] > tol:
                            cand = price[tail[e]] + cost[e]
                            if not found or cand > best:
                                best = cand
                                found = True
                if not found:
                    return INFEASIBLE
                price[v] = best - eps
                if price[v] < floor:
                    return INFEASIBLE
                cur[v] = inc_start[v]
    return OK


@njit(cache=True)
def cost_scaling(n, tail, head, lower, upper, cost, supply, x, price,
                 inc_start, inc_arc, tol, eps0, divisor):
    """Cost-scaling push-relabel on integer costs already multiplied by n + 1.

    Stops after the phase with ``eps == 1``; the flow is then optimal for the
    un-multiplied integer costs.
    """
    eps = eps0
    total = 0
    while True:
        eps = max(eps // divisor, 1)
        total += 4 * n * eps
        status = _refine(eps, n, tail, head, lower, upper, cost, supply, x,
                         price, inc_start, inc_arc, tol, -total - 1)
        if status != OK:
            return status
        if eps == 1:
            return OK


# ---------------------------------------------------------------- convex costs


@njit(cache=True)
def _deriv(a, xa, cost, qw, qa):
    return cost[a] - qw[a] * max(qa[a] - xa, 0.0)


@njit(cache=True)
def _flow_at(a, theta, lo, hi, cost, qw, qa):
    """Flow at which the derivative of arc ``a`` equals ``theta`` (quadratic arcs)."""
    if theta >= cost[a]:
        return hi
    xv = qa[a] - (cost[a] - theta) / qw[a]
    if xv < lo:
        return lo
    if xv > hi:
        return hi
    return xv


@njit(cache=True)
def eps_relaxation(n, tail, head, lower, upper, cost, qw, qa, supply, x, price,
                   inc_start, inc_arc, tol, eps0, eps_final, divisor, max_work):
    """Epsilon-relaxation with scaling for separable convex arc costs.

    Arc ``a`` costs ``cost[a] * x + qw[a] / 2 * max(qa[a] - x, 0) ** 2`` on
    ``[lower[a], upper[a]]``. Returns ``(status, eps_reached)``.
    """
    m = tail.shape[0]
    excess = np.empty(n)
    queue = np.empty(n + 1, dtype=np.int64)
    queued = np.zeros(n, dtype=np.bool_)
    cur = np.empty(n, dtype=np.int64)
    cap = n + 1
    work = 0
    eps = eps0
    while True:
        # restore eps-complementary slackness
        for a in range(m):
            delta = price[tail[a]] - price[head[a]]
            d = _deriv(a, x[a], cost, qw, qa)
            if x[a] < upper[a] and delta > d + eps:
                if qw[a] == 0.0:
                    x[a] = upper[a]
                else:
                    x[a] = _flow_at(a, delta, x[a], upper[a], cost, qw, qa)
            elif x[a] > lower[a] and delta < d - eps:
                if qw[a] == 0.0:
                    x[a] = lower[a]
                else:
                    x[a] = _flow_at(a, delta, lower[a], x[a], cost, qw, qa)
        for v in range(n):
            excess[v] = supply[v]
        for a in range(m):
            excess[head[a]] += x[a]
            excess[tail[a]] -= x[a]
        qh = 0
        qt = 0
        for v in range(n):
            cur[v] = inc_start[v]
            queued[v] = False
            if excess[v] > tol:
                queue[qt] = v
                qt = (qt + 1) % cap
                queued[v] = True
        # excess can only drain into deficits; once none are left, what
        # remains is rounding drift and the phase is over
        n_def = 0
        for v in range(n):
            if excess[v] < -tol:
                n_def += 1
        half = 0.5 * eps
        quarter = 0.25 * eps
        while qh != qt and n_def > 0:
            v = queue[qh]
            qh = (qh + 1) % cap
            queued[v] = False
            while excess[v] > tol and n_def > 0:
                work += 1
                if work > max_work:
                    return NOT_CONVERGED, eps
                end = inc_start[v + 1]
                k = cur[v]
                while k < end:
                    a = inc_arc[k]
                    if a >= 0:
                        w = head[a]
                        if x[a] < upper[a]:
                            gap = price[v] - price[w] - _deriv(a, x[a], cost, qw, qa)
                            if gap >= half:
                                if qw[a] == 0.0:
                                    target = upper[a]
                                else:
                                    target = _flow_at(a, price[v] - price[w] - quarter,
                                                      x[a], upper[a], cost, qw, qa)
                                room = target - x[a]
                                if room > 0.0:
                                    if excess[v] >= room:
                                        d = room
                                        x[a] = target
                                    else:
                                        d = excess[v]
                                        x[a] += d
                                    excess[v] -= d
                                    if excess[w] < -tol and excess[w] + d >= -tol:
                                        n_def -= 1
                                    excess[w] += d
                                    if excess[w] > tol and not queued[w]:
                                        queue[qt] = w
                                        qt = (qt + 1) % cap
                                        queued[w] = True
                                    if excess[v] <= tol:
                                        break
                    else:
                        e = ~a
                        w = tail[e]
                        if x[e] > lower[e]:
                            gap = _deriv(e, x[e], cost, qw, qa) - (price[w] - price[v])
                            if gap >= half:
                                if qw[e] == 0.0:
                                    target = lower[e]
                                else:
                                    target = _flow_at(e, price[w] - price[v] + quarter,
                                                      lower[e], x[e], cost, qw, qa)
                                room = x[e] - target
                                if room > 0.0:
                                    if excess[v] >= room:
                                        d = room
                                        x[e] = target
                                    else:
                                        d = excess[v]
                                        x[e] -= d
                                    excess[v] -= d
                                    if excess[w] < -tol and excess[w] + d >= -tol:
                                        n_def -= 1
                                    excess[w] += d
                                    if excess[w] > tol and not queued[w]:
                                        queue[qt] = w
                                        qt = (qt + 1) % cap
                                        queued[w] = True
                                    if excess[v] <= tol:
                                        break
                    k += 1
                cur[v] = k
                if excess[v] > tol:
                    # price rise to the largest level keeping eps-CS
                    best = np.inf
                    for kk in range(inc_start[v], end):
                        a = inc_arc[kk]
                        if a >= 0:
                            if x[a] < upper[a]:
                                cand = price[head[a]] + _deriv(a, x[a], cost, qw, qa) + eps
                                if cand < best:
                                    best = cand
                        else:
                            e = ~a
                            if x[e] > lower[e]:
                                cand = price[tail[e]] - _deriv(e, x[e], cost, qw, qa) + eps
                                if cand < best:
                                    best = cand
                    if best == np.inf:
                        return INFEASIBLE, eps
                    price[v] = best
                    cur[v] = inc_start[v]
        if eps <= eps_final:
            return OK, eps
        eps = max(eps / divisor, eps_final)
