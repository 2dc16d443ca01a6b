"""Dense matrix primitives, seeded randomness, Haar orthogonal sampling and
PCA whitening.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Sample
matrices are stored ``n x D`` (one observation per row).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NotABijection, ShapeMismatch, SingularCovariance

SINGULAR_RTOL = 1e-12
SEED_MASK = (1 << 64) - 1


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


def _key_to_int(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    key = int(key)
    if not 0 <= key <= SEED_MASK:
        raise ValueError(f"seed keys must be integers in [0, 2^64), got {key}")
    return key


def _entropy_words(seed: int, keys) -> list[int]:
    # Fixed-width encoding (two 32-bit words per value, key count first):
    # SeedSequence would otherwise treat (s, "x") and (s, "x", 0) alike.
    values = [int(seed) & SEED_MASK, len(keys)] + [_key_to_int(k) for k in keys]
    words = []
    for v in values:
        words += [v & 0xFFFFFFFF, v >> 32]
    return words


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` split along ``keys``.

    Every consumer of randomness asks for its own stream by naming itself in
    ``keys`` (ints or strings), so one master seed fans out deterministically
    and streams never overlap.

    >>> a = make_rng(7, "ica", 0).standard_normal(3)
    >>> b = make_rng(7, "ica", 0).standard_normal(3)
    >>> bool((a == b).all())
    True
    """
    return np.random.default_rng(np.random.SeedSequence(_entropy_words(seed, keys)))


def derive_seed(seed: int, *keys) -> int:
    """Derive a child 64-bit seed from ``seed`` and ``keys``."""
    state = np.random.SeedSequence(_entropy_words(seed, keys)).generate_state(1, dtype=np.uint64)
    return int(state[0])


# ---------------------------------------------------------------------------
# Orthogonal matrices
# ---------------------------------------------------------------------------


def random_orthogonal(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed ``dim x dim`` orthogonal matrix.

    QR of a standard normal matrix, with the columns of Q multiplied by the
    signs of diag(R) so the law is exactly uniform on O(dim).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = make_rng(seed, "orthogonal", dim)
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def orthogonality_error(q: np.ndarray) -> float:
    """max(|Q^T Q - I|, |Q Q^T - I|) entrywise."""
    q = np.asarray(q, dtype=float)
    eye = np.eye(q.shape[0])
    return float(max(np.abs(q.T @ q - eye).max(), np.abs(q @ q.T - eye).max()))


def is_orthogonal(q: np.ndarray, atol: float = 1e-10) -> bool:
    q = np.asarray(q)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        return False
    return orthogonality_error(q) <= atol


def symmetric_decorrelation(w: np.ndarray) -> np.ndarray:
    """Project ``w`` to the nearest orthogonal matrix, (W W^T)^{-1/2} W."""
    s, u = np.linalg.eigh(w @ w.T)
    s = np.clip(s, np.finfo(float).tiny, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


# ---------------------------------------------------------------------------
# Whitening
# ---------------------------------------------------------------------------


def sample_covariance(x: np.ndarray) -> np.ndarray:
    """Covariance with the 1/n normalisation used throughout the package."""
    x = np.asarray(x, dtype=float)
    xc = x - x.mean(axis=0)
    return xc.T @ xc / x.shape[0]


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine map ``x -> transform @ (x - mean)``.

    Attributes
    ----------
    mean : ndarray, shape (D,)
    transform : ndarray, shape (D, D)
        Lambda^{-1/2} E^T from the eigendecomposition of the covariance.
    inverse_transform : ndarray, shape (D, D)
        E Lambda^{1/2}.
    """

    mean: np.ndarray
    transform: np.ndarray
    inverse_transform: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Whiten an ``n x D`` sample matrix."""
        return (np.asarray(x, dtype=float) - self.mean) @ self.transform.T

    def invert(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) @ self.inverse_transform.T + self.mean


def whiten(data: np.ndarray, method: str = "pca") -> tuple[WhiteningTransform, np.ndarray]:
    """Whiten ``data`` (n x D).

    Returns the fitted transform and the whitened samples, which have zero
    mean and identity (1/n) covariance. ``method="pca"`` uses
    ``Lambda^{-1/2} E^T``; ``method="zca"`` uses the symmetric inverse square
    root ``E Lambda^{-1/2} E^T = Sigma^{-1/2}``, which rotates the data as
    little as possible.

    Raises
    ------
    SingularCovariance
        If the smallest covariance eigenvalue is below 1e-12 times the largest.
    """
    if method not in ("pca", "zca"):
        raise ValueError(f"method must be 'pca' or 'zca', got {method!r}")
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected an n x D matrix, got shape {x.shape}")
    n, d = x.shape
    if n < d + 1:
        raise ShapeMismatch(f"need n >= D + 1 samples, got n={n}, D={d}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / n
    evals, evecs = np.linalg.eigh(cov)
    if not np.all(np.isfinite(evals)) or evals[-1] <= 0:
        raise SingularCovariance("covariance is zero or non-finite")
    if evals[0] < SINGULAR_RTOL * evals[-1]:
        raise SingularCovariance(
            f"covariance is singular: eigenvalue ratio {evals[0] / evals[-1]:.3e}"
        )
    # Deterministic eigenvector signs: largest-magnitude entry positive.
    pivots = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivots, np.arange(d)])
    evecs = evecs * signs
    transform = (evecs / np.sqrt(evals)).T
    inverse = evecs * np.sqrt(evals)
    if method == "zca":
        transform = evecs @ transform
        inverse = inverse @ evecs.T
    white = xc @ transform.T
    return WhiteningTransform(mean, transform, inverse), white


def whiteness_error(x: np.ndarray) -> tuple[float, float]:
    """(max |mean|, max |cov - I|) of an ``n x D`` sample matrix."""
    x = np.asarray(x, dtype=float)
    mean_err = float(np.abs(x.mean(axis=0)).max())
    cov_err = float(np.abs(sample_covariance(x) - np.eye(x.shape[1])).max())
    return mean_err, cov_err


# ---------------------------------------------------------------------------
# Permutations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Permutation:
    """Row permutation: row ``i`` of ``P @ X`` is row ``order[i]`` of ``X``.

    Indices are 0-based.
    """

    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if not order or sorted(order) != list(range(len(order))):
            raise NotABijection(f"{list(self.order)} is not a bijection on 0..{len(order) - 1}")
        object.__setattr__(self, "order", order)

    @property
    def dim(self) -> int:
        return len(self.order)

    def matrix(self) -> np.ndarray:
        p = np.zeros((self.dim, self.dim))
        p[np.arange(self.dim), self.order] = 1.0
        return p

    def inverse(self) -> "Permutation":
        inv = [0] * self.dim
        for i, j in enumerate(self.order):
            inv[j] = i
        return Permutation(tuple(inv))

    def compose(self, other: "Permutation") -> "Permutation":
        """The permutation whose matrix is ``self.matrix() @ other.matrix()``."""
        if other.dim != self.dim:
            raise ShapeMismatch("permutation dimensions differ")
        return Permutation(tuple(other.order[i] for i in self.order))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Reorder the rows of ``x``; same as ``self.matrix() @ x``."""
        return np.asarray(x)[list(self.order)]


def permutation_from_grouping(order: Sequence[int]) -> Permutation:
    """Build the permutation that lists rows in ``order`` (0-based)."""
    try:
        return Permutation(tuple(order))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NotABijection):
            raise
        raise NotABijection(str(exc)) from exc
