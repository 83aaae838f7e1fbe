"""Patch-based image denoising with an orthogonal DCT dictionary.

Every overlapping ``e x e`` patch ``y`` is coded as ``w = Prox(X^T y)``
(exact because ``X`` is orthogonal), reconstructed as ``X w`` and the
estimates of each pixel are averaged. DCT atoms sit on an ``e x e`` grid of
horizontal/vertical frequencies with arcs toward higher frequencies; the
entry arc of the DC atom is cheap (``gamma``) and every other entry arc
costs ``source_ratio * gamma``, so selected paths tend to start at the DC
component.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ImageTooSmall
from ..graph import AugmentedNetwork, CostConfig, Dag, augment, build_dag
from ..penalty import PenaltyKind, PenaltySpec, prox
from .metrics import Metrics, psnr

PATCH_SIZES = (6, 8, 10, 12, 14, 16)


# ---------------------------------------------------------------- dictionary


def dct_dictionary(e: int) -> np.ndarray:
    """Orthogonal 2-D DCT dictionary of size ``e^2 x e^2`` (atoms as columns).

    Column ``r * e + c`` is the atom of vertical frequency ``r`` and
    horizontal frequency ``c`` for row-major vectorized patches; column 0 is
    the constant (DC) atom.
    """
    T = scipy.fft.dct(np.eye(e), norm="ortho", axis=0)
    return np.kron(T, T).T


def dct_grid_dag(e: int) -> Dag:
    """Frequency grid with arcs to the right and downward neighbours.

    Vertex ``1 + r * e + c`` holds frequency ``(r, c)``; vertex 1 is DC.
    """
    arcs = []
    for r in range(e):
        for c in range(e):
            v = 1 + r * e + c
            if c + 1 < e:
                arcs.append((v, v + 1))
            if r + 1 < e:
                arcs.append((v, v + e))
    return build_dag(arcs, e * e)


def dct_network(e: int, gamma: float = 1.0, source_ratio: float = 5.0) -> AugmentedNetwork:
    """Grid network with entry cost ``gamma`` at DC and ``source_ratio * gamma`` elsewhere."""
    if gamma < 0 or source_ratio < 0:
        raise ValueError("costs must be non-negative")
    dag = dct_grid_dag(e)
    p = e * e
    source = np.full(p, source_ratio * gamma)
    source[0] = gamma
    return augment(dag, CostConfig.explicit(source, np.ones(p), {a: 1.0 for a in dag.arcs}))


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class DenoiseConfig:
    """Patch edge ``e``, regularization ``lam``, penalty and graph costs."""

    e: int = 8
    lam: float = 0.0
    penalty: PenaltyKind = PenaltyKind.PHI
    gamma: float = 1.0
    source_ratio: float = 5.0
    sigma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "penalty", PenaltyKind(self.penalty))
        if self.e < 1:
            raise ValueError("patch edge must be positive")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")

    def with_lambda(self, lam: float) -> "DenoiseConfig":
        return DenoiseConfig(self.e, lam, self.penalty, self.gamma, self.source_ratio, self.sigma)

    def penalty_spec(self) -> PenaltySpec:
        net = _network(self.e, self.gamma, self.source_ratio) if self.penalty.needs_graph else None
        return PenaltySpec(self.penalty, self.lam, net)


_NETWORKS: dict = {}


def _network(e, gamma, ratio) -> AugmentedNetwork:
    # shared so that flow warm starts carry over from patch to patch
    key = (e, float(gamma), float(ratio))
    if key not in _NETWORKS:
        _NETWORKS[key] = dct_network(e, gamma, ratio)
    return _NETWORKS[key]


# ---------------------------------------------------------------- images


def quantize(image) -> np.ndarray:
    """Round to integers and clip to 0..255 (kept as float)."""
    return np.clip(np.rint(np.asarray(image, dtype=float)), 0.0, 255.0)


def add_noise(image, sigma: float, seed: int = 0) -> np.ndarray:
    """Gaussian noise of std ``sigma``, then quantized to 8 bits."""
    rng = np.random.default_rng(seed)
    image = np.asarray(image, dtype=float)
    return quantize(image + sigma * rng.standard_normal(image.shape))


def synthetic_image(size: int = 64, seed: int = 0) -> np.ndarray:
    """Smooth gradients, a few flat shapes with sharp edges and mild texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    img = 60.0 + 90.0 * xx + 50.0 * yy * (1.0 - xx)
    for _ in range(3):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        rad = rng.uniform(0.08, 0.2)
        level = rng.uniform(-60.0, 60.0)
        img += level * (((yy - cy) ** 2 + (xx - cx) ** 2) < rad**2)
    fy, fx = rng.uniform(2.0, 5.0, size=2)
    img += 12.0 * np.sin(2 * math.pi * fy * yy) * np.sin(2 * math.pi * fx * xx)
    return quantize(img)


def natural_image(size: int = 64, seed: int = 0, alpha: float = 1.0,
                  contrast: float = 40.0) -> np.ndarray:
    """Gaussian random field with a ``1/f^alpha`` amplitude spectrum.

    Natural images have roughly ``1/f`` amplitude spectra, so their DCT
    coefficients are compressible rather than exactly sparse, unlike the
    piecewise-smooth :func:`synthetic_image`. Mean 128, std ``contrast``.
    """
    rng = np.random.default_rng(seed)
    f = scipy.fft.fftfreq(size)
    r = np.hypot(*np.meshgrid(f, f, indexing="ij"))
    r[0, 0] = np.inf
    noise = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    field = scipy.fft.ifft2(noise / r**alpha).real
    field = (field - field.mean()) / field.std()
    return quantize(128.0 + contrast * field)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) PGM file as floats in 0..255."""
    data = Path(path).read_bytes()
    m = re.match(rb"(P[25])((?:\s+|#[^\n]*\n)+)", data)
    if m is None:
        raise ValueError("not a P2/P5 PGM file")
    magic = m.group(1)
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and (data[pos : pos + 1].isspace() or data[pos : pos + 1] == b"#"):
            if data[pos : pos + 1] == b"#":
                pos = data.index(b"\n", pos) + 1
            else:
                pos += 1
        end = pos
        while end < len(data) and data[end : end + 1].isdigit():
            end += 1
        if end == pos:
            raise ValueError("malformed PGM header")
        fields.append(int(data[pos:end]))
        pos = end
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise ValueError("PGM maxval out of range")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        arr = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    else:
        arr = np.array(data[pos:].split()[: width * height], dtype=np.int64)
    if arr.size != width * height:
        raise ValueError("PGM pixel data truncated")
    img = arr.reshape(height, width).astype(float)
    if maxval != 255:
        img = img * (255.0 / maxval)
    return img


def write_pgm(path, image, binary: bool = True) -> None:
    """Write an image (quantized to 0..255) as PGM."""
    img = quantize(image).astype(np.uint8)
    h, w = img.shape
    if binary:
        Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())
    else:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in img)
        Path(path).write_text(f"P2\n{w} {h}\n255\n{rows}\n")


# ---------------------------------------------------------------- pipeline


def extract_patches(image, e: int) -> np.ndarray:
    """All fully contained ``e x e`` patches (stride 1), row-major, one per row."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("expected a grayscale image")
    if image.shape[0] < e or image.shape[1] < e:
        raise ImageTooSmall(f"image {image.shape} is smaller than a {e}x{e} patch")
    win = sliding_window_view(image, (e, e))
    return win.reshape(-1, e * e)


def code_patches(patches: np.ndarray, cfg: DenoiseConfig) -> np.ndarray:
    """Sparse codes ``Prox(X^T y)`` of each patch (one per row)."""
    X = dct_dictionary(cfg.e)
    U = patches @ X  # row i is X^T y_i
    if cfg.lam == 0:
        return U
    spec = cfg.penalty_spec()
    W = np.empty_like(U)
    for i in range(U.shape[0]):
        W[i] = prox(spec, U[i])
    return W


def reconstruct(W: np.ndarray, shape: tuple[int, int], e: int) -> np.ndarray:
    """Average the patch estimates ``X w`` back into an image (not quantized)."""
    X = dct_dictionary(e)
    P = W @ X.T
    h, w = shape
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    nw = w - e + 1
    for i in range(P.shape[0]):
        r, c = divmod(i, nw)
        acc[r : r + e, c : c + e] += P[i].reshape(e, e)
        cnt[r : r + e, c : c + e] += 1.0
    return acc / cnt


def denoise_image(noisy, cfg: DenoiseConfig, clean=None) -> tuple[np.ndarray, Metrics]:
    """Denoise ``noisy``; metrics are filled in when ``clean`` is given.

    Returns the quantized output and :class:`Metrics` with PSNR, the
    pre-averaging patch MSE and the mean support size per patch.
    """
    noisy = np.asarray(noisy, dtype=float)
    patches = extract_patches(noisy, cfg.e)
    W = code_patches(patches, cfg)
    out = quantize(reconstruct(W, noisy.shape, cfg.e))
    metrics = Metrics(support_size=float(np.count_nonzero(W, axis=1).mean()))
    if clean is not None:
        clean = np.asarray(clean, dtype=float)
        metrics.psnr = psnr(clean, out)
        metrics.extra["psnr_input"] = psnr(clean, noisy)
        metrics.patch_mse = patch_mse(W, extract_patches(clean, cfg.e), cfg.e)
    return out, metrics


def patch_mse(W: np.ndarray, clean_patches: np.ndarray, e: int) -> float:
    """Mean squared error of the individual patch estimates ``X w`` (no averaging)."""
    X = dct_dictionary(e)
    return float(np.mean((W @ X.T - clean_patches) ** 2))


def lambda_grid(sigma: float, penalty, n: int = 24, step: float = 2.0 ** 0.125,
                center: float | None = None) -> np.ndarray:
    """Logarithmic lambda grid (ratio ``step``) around a noise-matched level.

    Non-convex penalties compare ``lambda`` with squared coefficients, so the
    grid scales with ``sigma^2``; convex ones scale with ``sigma``.
    """
    kind = PenaltyKind(penalty)
    if center is None:
        center = 2.0 * sigma**2 if not kind.convex else 1.5 * sigma
    offsets = np.arange(n) - n // 2
    return center * step ** offsets.astype(float)


def tune_lambda(clean, noisy, cfg: DenoiseConfig, grid, criterion: str = "psnr"):
    """Best ``lambda`` on ``grid`` for PSNR (max) or patch MSE (min).

    Returns ``(best_lambda, best_metrics, all_metrics)``.
    """
    results = []
    for lam in grid:
        _, m = denoise_image(noisy, cfg.with_lambda(float(lam)), clean)
        results.append((float(lam), m))
    if criterion == "psnr":
        lam, m = max(results, key=lambda r: r[1].psnr)
    elif criterion == "patch_mse":
        lam, m = min(results, key=lambda r: r[1].patch_mse)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return lam, m, results


def patch_study(clean, noisy, cfg: DenoiseConfig, grid, n_patches: int = 1000,
                seed: int = 0) -> tuple[float, float]:
    """Best pre-averaging patch MSE over ``grid`` on random patches.

    Returns ``(best_lambda, best_mse)``.
    """
    rng = np.random.default_rng(seed)
    noisy_p = extract_patches(noisy, cfg.e)
    clean_p = extract_patches(clean, cfg.e)
    n_patches = min(n_patches, noisy_p.shape[0])
    idx = rng.choice(noisy_p.shape[0], size=n_patches, replace=False)
    best = (float("nan"), float("inf"))
    for lam in grid:
        W = code_patches(noisy_p[idx], cfg.with_lambda(float(lam)))
        mse = patch_mse(W, clean_p[idx], cfg.e)
        if mse < best[1]:
            best = (float(lam), mse)
    return best
