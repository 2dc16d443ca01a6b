"""Nonparametric differential entropy and mutual information estimators.

All values are in nats. ``entropy_1d`` is the m-spacing (Vasicek) estimator,
``entropy_knn`` the Kozachenko-Leonenko nearest-neighbour estimator.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from .errors import DegenerateSample, ShapeMismatch, TooFewSamples
from .linalg import make_rng

DEFAULT_K = 5
DEFAULT_BOOT = 50
JITTER = 1e-10


@dataclass(frozen=True)
class EntropyEstimate:
    """An entropy value (nats) with its bootstrap standard error.

    ``method`` is ``"spacing"`` or ``"knn"``; ``param`` is the spacing m or
    the neighbour count k.
    """

    value: float
    stderr: float
    n: int
    method: str
    param: int

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------------------
# m-spacing estimator
# ---------------------------------------------------------------------------


def default_spacing(n: int) -> int:
    return max(1, int(math.isqrt(n)))


def _spacing_terms(xs: np.ndarray, m: int, correction: str) -> np.ndarray:
    n = xs.shape[0]
    # x_(i+m) - x_(i-m) with indices clamped to [0, n-1], built from slices.
    spacing = np.empty(n)
    spacing[m : n - m] = xs[2 * m :] - xs[: n - 2 * m]
    spacing[:m] = xs[m : 2 * m] - xs[0]
    spacing[n - m :] = xs[n - 1] - xs[n - 2 * m : n - m]
    if correction == "vasicek":
        scale = n / (2.0 * m)
        return np.log(scale * spacing)
    # Ebrahimi: boundary spacings are shorter, weight them by c_i m instead of 2m.
    j = np.arange(1, n + 1)
    c = np.full(n, 2.0)
    c[j <= m] = 1.0 + (j[j <= m] - 1) / m
    c[j > n - m] = 1.0 + (n - j[j > n - m]) / m
    return np.log(n * spacing / (c * m))


def _spacing_value(xs: np.ndarray, m: int, correction: str) -> float:
    with np.errstate(divide="ignore"):
        return float(np.mean(_spacing_terms(xs, m, correction)))


def entropy_1d(
    samples,
    m: int | None = None,
    *,
    n_boot: int = DEFAULT_BOOT,
    seed: int = 0,
    correction: str = "vasicek",
) -> EntropyEstimate:
    """m-spacing estimate of the differential entropy of a scalar sample.

    Parameters
    ----------
    samples : array_like, shape (n,)
        At least 100 values.
    m : int, optional
        Spacing half-width; defaults to floor(sqrt(n)).
    n_boot : int
        Bootstrap resamples for the standard error (0 disables it).
    seed : int
        Seed of the bootstrap stream.
    correction : {"vasicek", "ebrahimi"}
        ``"ebrahimi"`` applies the boundary-corrected weights.

    Returns
    -------
    EntropyEstimate
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.shape[0]
    if n < 100:
        raise TooFewSamples(f"entropy_1d needs n >= 100, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain NaN or Inf")
    if correction not in ("vasicek", "ebrahimi"):
        raise ValueError(f"unknown correction {correction!r}")
    m = default_spacing(n) if m is None else int(m)
    if not 1 <= m < n / 2:
        raise ValueError(f"spacing m={m} must satisfy 1 <= m < n/2")
    xs = np.sort(x)
    q1, q3 = np.quantile(xs, [0.25, 0.75])
    if q3 - q1 == 0:
        raise DegenerateSample("interquartile range is zero")
    value = _spacing_value(xs, m, correction)
    if not np.isfinite(value):
        raise DegenerateSample("zero-length spacing (too many tied values)")
    stderr = 0.0
    if n_boot > 0:
        rng = make_rng(seed, "boot1d")
        reps = np.empty(n_boot)
        for b in range(n_boot):
            # Bootstrap counts applied to the sorted data give a sorted resample.
            counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
            reps[b] = _spacing_value(np.repeat(xs, counts), m, correction)
        reps = reps[np.isfinite(reps)]
        stderr = float(np.std(reps, ddof=1)) if reps.size > 1 else 0.0
    return EntropyEstimate(value, stderr, n, "spacing", m)


# ---------------------------------------------------------------------------
# Kozachenko-Leonenko estimator
# ---------------------------------------------------------------------------


def log_unit_ball_volume(d: int) -> float:
    """ln of pi^(d/2) / Gamma(d/2 + 1)."""
    return 0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d + 1.0))


def _content_key(x: np.ndarray) -> int:
    return zlib.crc32(np.ascontiguousarray(x).tobytes())


def knn_distances(x: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Distance from each point to its k-th nearest other point.

    Points with an exact duplicate are moved by a seeded jitter of relative
    size 1e-10 first; the jitter stream is keyed by the data content so the
    result does not depend on where the data came from.
    """
    tree = cKDTree(x)
    dist, _ = tree.query(x, k=k + 1)
    dup = dist[:, 1] == 0
    if dup.any():
        scale = np.maximum(np.std(x, axis=0), np.finfo(float).tiny)
        rng = make_rng(seed, "jitter", _content_key(x))
        x = x.copy()
        x[dup] += JITTER * scale * rng.standard_normal((int(dup.sum()), x.shape[1]))
        tree = cKDTree(x)
        dist, _ = tree.query(x, k=k + 1)
        if np.any(dist[:, 1] == 0):
            raise DegenerateSample("duplicate points survive jitter")
    return dist[:, k]


def entropy_knn(
    samples,
    k: int = DEFAULT_K,
    *,
    n_boot: int = DEFAULT_BOOT,
    seed: int = 0,
) -> EntropyEstimate:
    """Kozachenko-Leonenko entropy of an ``n x d`` sample.

    ``H = psi(n) - psi(k) + ln V_d + d/n * sum_i ln eps_i`` with ``eps_i`` the
    Euclidean distance to the k-th neighbour and ``V_d`` the unit-ball volume.
    The standard error bootstraps the per-point log-distance terms.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeMismatch(f"expected an n x d matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 500:
        raise TooFewSamples(f"entropy_knn needs n >= 500, got {n}")
    if not 1 <= k <= 20:
        raise ValueError(f"k must be in 1..20, got {k}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain NaN or Inf")
    eps = knn_distances(x, k, seed)
    terms = d * np.log(eps)
    const = float(digamma(n) - digamma(k)) + log_unit_ball_volume(d)
    value = const + float(np.mean(terms))
    stderr = 0.0
    if n_boot > 0:
        rng = make_rng(seed, "bootknn")
        reps = np.array([terms[rng.integers(0, n, size=n)].mean() for _ in range(n_boot)])
        stderr = float(np.std(reps, ddof=1))
    return EntropyEstimate(value, stderr, n, "knn", k)


# ---------------------------------------------------------------------------
# Mutual information
# ---------------------------------------------------------------------------


def mutual_info_pair(x, y, k: int = DEFAULT_K, *, seed: int = 0) -> float:
    """I(x; y) = H(x) + H(y) - H(x, y) with k-NN entropies, clamped at 0.

    Exactly symmetric in its arguments.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ShapeMismatch("x and y must have the same length")
    if x.shape[0] < 500:
        raise TooFewSamples(f"mutual_info_pair needs n >= 500, got {x.shape[0]}")
    if x.tobytes() > y.tobytes():
        x, y = y, x
    hx = entropy_knn(x, k, n_boot=0, seed=seed).value
    hy = entropy_knn(y, k, n_boot=0, seed=seed).value
    hxy = entropy_knn(np.column_stack((x, y)), k, n_boot=0, seed=seed).value
    return max(0.0, (hx + hy) - hxy)


def dependence_matrix(Y, k: int = DEFAULT_K, *, seed: int = 0) -> np.ndarray:
    """Symmetric D x D matrix of pairwise mutual information, zero diagonal.

    Entry (i, j) depends only on columns i and j, so the result does not
    depend on evaluation order. Marginal entropies are computed once per
    column and reused.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ShapeMismatch(f"expected an n x D matrix, got shape {Y.shape}")
    n, D = Y.shape
    if n < 500:
        raise TooFewSamples(f"dependence_matrix needs n >= 500, got {n}")
    cols = [np.ascontiguousarray(Y[:, i]) for i in range(D)]
    h = [entropy_knn(c, k, n_boot=0, seed=seed).value for c in cols]
    dep = np.zeros((D, D))
    for i in range(D):
        for j in range(i + 1, D):
            a, b = i, j
            if cols[a].tobytes() > cols[b].tobytes():
                a, b = b, a
            hxy = entropy_knn(np.column_stack((cols[a], cols[b])), k, n_boot=0, seed=seed).value
            dep[i, j] = dep[j, i] = max(0.0, (h[a] + h[b]) - hxy)
    return dep
