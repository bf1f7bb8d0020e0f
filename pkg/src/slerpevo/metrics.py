"""Perceptual-distance interface, diversity score, PCA, and rank statistics.

The bundled multi-scale patch-normalized distance is an explicit stand-in
for learned perceptual metrics, which need pretrained vision backbones; it
keeps the small-is-similar orientation and the metric axioms, and the
registry admits external adapters under the same interface.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .errors import ArgumentError, DegenerateInputError

PATCH = 4
VARIANCE_FLOOR = 1e-6
EXACT_PERMUTATION_MAX_N = 10
_PERM_CHUNK = 40320  # 8! rows per vectorized block


# ---------------------------------------------------------------------------
# perceptual distance

def _pool2x(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    h2, w2 = h - h % 2, w - w % 2
    return x[:, :h2, :w2].reshape(c, h2 // 2, 2, w2 // 2, 2).mean(axis=(2, 4))


def _patch_normalize(x: np.ndarray) -> np.ndarray | None:
    """Zero-mean/unit-variance normalize each channelwise PATCH x PATCH block."""
    c, h, w = x.shape
    hp, wp = h // PATCH, w // PATCH
    if hp == 0 or wp == 0:
        return None
    p = x[:, :hp * PATCH, :wp * PATCH].reshape(c, hp, PATCH, wp, PATCH)
    mean = p.mean(axis=(2, 4), keepdims=True)
    var = p.var(axis=(2, 4), keepdims=True)
    return (p - mean) / np.sqrt(np.maximum(var, VARIANCE_FLOOR))


def proxy_distance(x, y) -> float:
    """Multi-scale patch-normalized squared distance between two images.

    At scales {1, 1/2, 1/4} (average-pooled), images are split into 4x4
    patches, each normalized to zero mean and unit variance (variance floored
    at 1e-6); the score is the mean squared difference of the normalized
    patches, averaged over the scales that contain at least one patch.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ArgumentError(f"image shapes differ: {xa.shape} vs {ya.shape}")
    if xa.ndim == 2:
        xa, ya = xa[None], ya[None]
    scores = []
    for _ in range(3):
        nx, ny = _patch_normalize(xa), _patch_normalize(ya)
        if nx is not None:
            scores.append(float(np.mean((nx - ny) ** 2)))
        xa, ya = _pool2x(xa), _pool2x(ya)
    if not scores:
        raise ArgumentError("image too small for a single 4x4 patch")
    return float(np.mean(scores))


@dataclass(frozen=True)
class PerceptualMetric:
    name: str
    distance: Callable[[np.ndarray, np.ndarray], float]


_METRICS: dict[str, PerceptualMetric] = {}


def register_metric(name: str, distance: Callable) -> PerceptualMetric:
    metric = PerceptualMetric(name, distance)
    _METRICS[name] = metric
    return metric


def get_metric(name: str) -> PerceptualMetric:
    if name not in _METRICS:
        raise ArgumentError(f"unknown metric {name!r}; registered: {sorted(_METRICS)}")
    return _METRICS[name]


PROXY_METRIC = register_metric("proxy", proxy_distance)


def diversity_score(images: Sequence, metric: PerceptualMetric = PROXY_METRIC) -> float:
    """Mean metric distance over all unordered image pairs."""
    if len(images) < 2:
        raise ArgumentError(f"diversity needs >= 2 images, got {len(images)}")
    dists = [metric.distance(a, b) for a, b in itertools.combinations(images, 2)]
    return float(np.mean(dists))


# ---------------------------------------------------------------------------
# PCA

@dataclass(frozen=True)
class PcaTransform:
    """Fitted normalization + projection, reusable on held-out points."""

    feature_means: np.ndarray
    global_scale: float
    components: np.ndarray          # (k, dim)
    explained_variance: np.ndarray  # (k,)

    def project(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return ((pts - self.feature_means) / self.global_scale) @ self.components.T


def fit_pca(points: np.ndarray, k: int) -> PcaTransform:
    """Fit on rows of flattened images: per-feature centering, one global
    std scaling, then top-k right singular directions."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ArgumentError(f"need a 2-D matrix with >= 2 rows, got shape {pts.shape}")
    n, dim = pts.shape
    if not 1 <= k <= min(n, dim):
        raise ArgumentError(f"k={k} outside [1, {min(n, dim)}]")
    means = pts.mean(axis=0)
    centered = pts - means
    scale = float(centered.std())
    if scale == 0.0:
        raise ArgumentError("all points identical; PCA undefined")
    normed = centered / scale
    _, s, vt = np.linalg.svd(normed, full_matrices=False)
    components = vt[:k].copy()
    # Deterministic sign: largest-magnitude loading of each component positive.
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PcaTransform(feature_means=means, global_scale=scale, components=components,
                        explained_variance=(s[:k] ** 2) / (n - 1))


def pca_fit_project(points: np.ndarray, k: int):
    """Convenience wrapper returning (projections, explained_variance)."""
    transform = fit_pca(points, k)
    return transform.project(points), transform.explained_variance


# ---------------------------------------------------------------------------
# Spearman rank correlation

@dataclass(frozen=True)
class CorrelationReport:
    rho: float
    p_value: float
    n: int
    method: str  # "exact-permutation" | "t-approximation"

    def to_dict(self) -> dict:
        return {"rho": self.rho, "p_value": self.p_value, "n": self.n, "method": self.method}


def midranks(values: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1, ties assigned the mean of their rank positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    ac, bc = a - a.mean(), b - b.mean()
    na, nb = np.linalg.norm(ac), np.linalg.norm(bc)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("correlation undefined for a constant sequence")
    return float(np.dot(ac, bc) / (na * nb))


def permutation_rho_distribution(x, y):
    """All n! Spearman values under pairing permutations; returns (rhos, n!)."""
    rx, ry = midranks(x), midranks(y)
    n = len(rx)
    rxc = rx - rx.mean()
    rxc /= np.linalg.norm(rxc)
    ryc = ry - ry.mean()
    ryc /= np.linalg.norm(ryc)
    total = math.factorial(n)
    rhos = np.empty(total, dtype=np.float64)
    perms = itertools.permutations(range(n))
    filled = 0
    while filled < total:
        block = np.array(list(itertools.islice(perms, _PERM_CHUNK)), dtype=np.intp)
        rhos[filled:filled + len(block)] = ryc[block] @ rxc
        filled += len(block)
    return rhos, total


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrelationReport:
    """Rank correlation with a two-sided no-correlation test.

    rho is the Pearson correlation of midranks. For n <= 10 the p-value is
    the exact fraction of pairing permutations with |rho| at least the
    observed value; for larger n it uses t = rho*sqrt((n-2)/(1-rho^2)) with
    n-2 degrees of freedom.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ArgumentError(f"need equal-length 1-D sequences, got {x.shape} and {y.shape}")
    n = len(x)
    if n < 3:
        raise DegenerateInputError(f"need n >= 3 samples, got {n}")
    rho = _pearson(midranks(x), midranks(y))

    if n <= EXACT_PERMUTATION_MAX_N:
        rhos, total = permutation_rho_distribution(x, y)
        hits = int(np.count_nonzero(np.abs(rhos) >= abs(rho) - 1e-12))
        return CorrelationReport(rho=rho, p_value=hits / total, n=n, method="exact-permutation")

    t = rho * math.sqrt((n - 2) / max(1.0 - rho * rho, 1e-300))
    p = 2.0 * float(sps.t.sf(abs(t), df=n - 2))
    p = min(max(p, float(np.finfo(np.float64).tiny)), 1.0)
    return CorrelationReport(rho=rho, p_value=p, n=n, method="t-approximation")
