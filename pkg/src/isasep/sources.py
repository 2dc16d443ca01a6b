"""Samplers for spherical, elliptical, Lp-spherical, 90-degree-rotation
invariant and i.i.d. source blocks.

Every sampler is a pure function of ``(spec, n, seed)`` and returns an
``n x d`` float64 array (a *sample block*). Spherical-type sources use the
stochastic representation ``mu + r * Lambda @ u`` with ``u`` uniform on a
unit sphere and ``r`` an independent non-negative generating variate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionMismatch, SingularLambda
from .linalg import derive_seed, make_rng, whiten

# ---------------------------------------------------------------------------
# Generating variates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChiOfDim:
    """r ~ chi(d); together with a uniform direction this gives N(0, I_d)."""


@dataclass(frozen=True)
class Constant:
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"Constant radial needs c > 0, got {self.c}")


@dataclass(frozen=True)
class UniformRadial:
    a: float
    b: float

    def __post_init__(self):
        if not (0 <= self.a < self.b):
            raise ValueError(f"UniformRadial needs 0 <= a < b, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class ExponentialRadial:
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"ExponentialRadial needs rate > 0, got {self.rate}")


RadialSpec = Union[ChiOfDim, Constant, UniformRadial, ExponentialRadial]


def sample_radial(radial: RadialSpec, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(radial, ChiOfDim):
        return np.sqrt(rng.chisquare(d, size=n))
    if isinstance(radial, Constant):
        return np.full(n, float(radial.c))
    if isinstance(radial, UniformRadial):
        return rng.uniform(radial.a, radial.b, size=n)
    if isinstance(radial, ExponentialRadial):
        return rng.exponential(1.0 / radial.rate, size=n)
    raise TypeError(f"unknown radial spec {radial!r}")


def radial_second_moment(radial: RadialSpec, d: int) -> float:
    """E[r^2] in closed form."""
    if isinstance(radial, ChiOfDim):
        return float(d)
    if isinstance(radial, Constant):
        return float(radial.c) ** 2
    if isinstance(radial, UniformRadial):
        a, b = radial.a, radial.b
        return (a * a + a * b + b * b) / 3.0
    if isinstance(radial, ExponentialRadial):
        return 2.0 / radial.rate**2
    raise TypeError(f"unknown radial spec {radial!r}")


# ---------------------------------------------------------------------------
# Source specifications
# ---------------------------------------------------------------------------

IID_MARGINALS = ("uniform", "laplace", "exponential")


@dataclass(frozen=True)
class Spherical:
    d: int
    radial: RadialSpec = ChiOfDim()

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")


@dataclass(frozen=True)
class Elliptical:
    mu: tuple
    lam: tuple  # row-major d x d, stored as nested tuples
    radial: RadialSpec = ChiOfDim()

    def __post_init__(self):
        mu = tuple(float(v) for v in np.ravel(self.mu))
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim == 1 and lam.size == len(mu) ** 2:
            lam = lam.reshape(len(mu), len(mu))
        if lam.shape != (len(mu), len(mu)):
            raise DimensionMismatch(f"Lambda shape {lam.shape} does not match mu of length {len(mu)}")
        _check_invertible(lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", tuple(tuple(row) for row in lam))

    @property
    def d(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class LpSpherical:
    d: int
    p: float
    radial: RadialSpec = ChiOfDim()

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.p > 0:
            raise ValueError(f"p must be > 0, got {self.p}")


@dataclass(frozen=True)
class Rot90:
    base: "SourceSpec"

    def __post_init__(self):
        if source_dim(self.base) != 2:
            raise DimensionMismatch("Rot90 needs a 2-dimensional base source")

    @property
    def d(self) -> int:
        return 2


@dataclass(frozen=True)
class IidMarginal:
    """d independent unit-variance coordinates of one marginal law."""

    d: int
    marginal: str = "uniform"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.marginal not in IID_MARGINALS:
            raise ValueError(f"marginal must be one of {IID_MARGINALS}, got {self.marginal!r}")


SourceSpec = Union[Spherical, Elliptical, LpSpherical, Rot90, IidMarginal]


def source_dim(spec: SourceSpec) -> int:
    return spec.d


def _check_invertible(lam: np.ndarray) -> None:
    sv = np.linalg.svd(lam, compute_uv=False)
    if not np.all(np.isfinite(sv)) or sv[-1] <= 1e-12 * sv[0]:
        raise SingularLambda("Lambda is singular or ill-conditioned")


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def _uniform_sphere(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    # A zero normal vector has probability zero; resample defensively.
    bad = norms == 0
    while bad.any():
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
        bad = norms == 0
    return g / norms[:, None]


def sample_spherical(d: int, radial: RadialSpec, n: int, seed: int) -> np.ndarray:
    """Rows ``r_i * u_i`` with ``u_i`` uniform on the unit sphere in R^d."""
    if d < 1 or n < 1:
        raise ValueError("need d >= 1 and n >= 1")
    rng = make_rng(seed, "spherical")
    u = _uniform_sphere(d, n, rng)
    r = sample_radial(radial, d, n, rng)
    return r[:, None] * u


def sample_elliptical(mu, lam, radial: RadialSpec, n: int, seed: int) -> np.ndarray:
    """Rows ``mu + Lambda @ v`` with ``v`` spherical (same seed stream as
    :func:`sample_spherical`).

    The mean is ``mu`` and the covariance ``E[r^2]/d * Lambda Lambda^T``.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    lam = np.asarray(lam, dtype=float)
    d = mu.shape[0]
    if lam.shape != (d, d):
        raise DimensionMismatch(f"Lambda must be {d} x {d}, got {lam.shape}")
    _check_invertible(lam)
    v = sample_spherical(d, radial, n, seed)
    return mu + v @ lam.T


def sample_lp_spherical(d: int, p: float, radial: RadialSpec, n: int, seed: int) -> np.ndarray:
    """Rows ``r_i * w_i`` with ``w_i`` uniform (cone measure) on the unit
    Lp sphere.

    Coordinates of ``x`` with i.i.d. signs and magnitudes Gamma(1/p)^(1/p)
    have density proportional to exp(-sum |x_i|^p); ``x / ||x||_p`` is then
    independent of ``||x||_p`` and uniform on the Lp sphere.
    """
    if not p > 0:
        raise ValueError(f"p must be > 0, got {p}")
    if d < 1 or n < 1:
        raise ValueError("need d >= 1 and n >= 1")
    rng = make_rng(seed, "lp_spherical")
    mags = rng.gamma(1.0 / p, 1.0, size=(n, d)) ** (1.0 / p)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(n, d))
    x = signs * mags
    # Norm in log space: for small p, |x|^p under/overflows.
    with np.errstate(divide="ignore"):
        logs = p * np.log(np.abs(x))
    lognorm = np.logaddexp.reduce(logs, axis=1) / p
    w = x * np.exp(-lognorm)[:, None]
    r = sample_radial(radial, d, n, rng)
    return r[:, None] * w


ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation_power(k: int) -> np.ndarray:
    """R^k for the 90-degree counter-clockwise rotation R."""
    return np.linalg.matrix_power(ROT90, int(k) % 4)


def sample_rot90(base: SourceSpec, n: int, seed: int) -> np.ndarray:
    """Rows ``R^k x`` with ``x`` from ``base`` and ``k`` uniform on {0,1,2,3}.

    The result is exactly invariant in distribution under 90-degree rotation,
    whatever the base law.
    """
    if source_dim(base) != 2:
        raise DimensionMismatch("sample_rot90 needs a 2-dimensional base source")
    x = sample_source(base, n, seed=derive_seed(seed, "rot90_base"))
    k = make_rng(seed, "rot90_k").integers(0, 4, size=n)
    out = np.empty_like(x)
    for j in range(4):
        sel = k == j
        out[sel] = x[sel] @ rotation_power(j).T
    return out


def sample_iid(d: int, marginal: str, n: int, seed: int) -> np.ndarray:
    """Independent zero-mean unit-variance coordinates."""
    rng = make_rng(seed, "iid", marginal)
    if marginal == "uniform":
        h = math.sqrt(3.0)
        return rng.uniform(-h, h, size=(n, d))
    if marginal == "laplace":
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=(n, d))
    if marginal == "exponential":
        return rng.exponential(1.0, size=(n, d)) - 1.0
    raise ValueError(f"unknown marginal {marginal!r}")


def sample_source(spec: SourceSpec, n: int, seed: int) -> np.ndarray:
    """Dispatch on the type of ``spec``."""
    if isinstance(spec, Spherical):
        return sample_spherical(spec.d, spec.radial, n, seed)
    if isinstance(spec, Elliptical):
        return sample_elliptical(spec.mu, spec.lam, spec.radial, n, seed)
    if isinstance(spec, LpSpherical):
        return sample_lp_spherical(spec.d, spec.p, spec.radial, n, seed)
    if isinstance(spec, Rot90):
        return sample_rot90(spec.base, n, seed)
    if isinstance(spec, IidMarginal):
        return sample_iid(spec.d, spec.marginal, n, seed)
    raise TypeError(f"unknown source spec {spec!r}")


def standardize_block(block: np.ndarray) -> np.ndarray:
    """Zero-mean, identity-covariance version of ``block``.

    Applies ``y -> Sigma^{-1/2} (y - mu)`` with the sample mean and the
    symmetric inverse square root of the sample covariance, so a block that
    is already nearly white is left nearly unrotated (its coordinate axes
    keep their meaning).
    """
    _, white = whiten(np.asarray(block, dtype=float), method="zca")
    return white
