"""Evaluation metrics shared by the experiment harnesses."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


@dataclass
class Metrics:
    relative_mse: float | None = None
    psnr: float | None = None
    patch_mse: float | None = None
    support_size: float | None = None
    components: int | None = None
    extra: dict = field(default_factory=dict)


def relative_mse(X: np.ndarray, w_hat, w_oracle, w0) -> float:
    """``||X w_hat - X w0||^2 / ||X w_oracle - X w0||^2``."""
    target = X @ w0
    num = float(np.sum((X @ w_hat - target) ** 2))
    den = float(np.sum((X @ w_oracle - target) ** 2))
    if den == 0.0:
        return 1.0 if num == 0.0 else float("inf")
    return num / den


def psnr(reference, estimate, peak: float = 255.0) -> float:
    """``10 log10(peak^2 / MSE)``; infinite for identical images."""
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimate, dtype=float)
    mse = float(np.mean((ref - est) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def support_components(w, edges: Iterable[Sequence[int]], p: int | None = None) -> int:
    """Connected components of the subgraph induced by ``Supp(w)``.

    ``edges`` are pairs of 1-based vertex ids, read as undirected.
    """
    w = np.asarray(w)
    p = w.shape[0] if p is None else p
    supp = np.flatnonzero(w) + 1
    if supp.size == 0:
        return 0
    index = {int(v): i for i, v in enumerate(supp)}
    rows, cols = [], []
    for u, v in edges:
        iu, iv = index.get(int(u)), index.get(int(v))
        if iu is not None and iv is not None:
            rows.append(iu)
            cols.append(iv)
    k = supp.size
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, k))
    return int(connected_components(adj, directed=False)[0])
