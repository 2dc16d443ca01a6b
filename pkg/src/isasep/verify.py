"""Monte Carlo checks of the entropy inequalities and symmetry properties
behind the two-stage ISA procedure.

Every check returns an :class:`InequalityReport` holding one
:class:`TrialRecord` per direction (or per random orthogonal matrix).
Tolerances are statistical: ``k_sigma`` times the standard error of the
margin, propagated from the bootstrap standard errors of the entropy
estimates.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp

from .entropy import EntropyEstimate, entropy_1d
from .errors import DimensionMismatch, TooFewSamples
from .linalg import derive_seed, make_rng, random_orthogonal
from .model import Grouping, ISAInstance
from .sources import ROT90, Elliptical, SourceSpec, sample_source, source_dim

K_SIGMA = 3.0
MIN_CHECK_SAMPLES = 10_000


@dataclass(frozen=True)
class TrialRecord:
    direction: tuple
    lhs: float
    rhs: float
    margin: float
    stderr: float
    tolerance: float
    violated: bool
    ks: float | None = None
    ks_critical: float | None = None


@dataclass
class InequalityReport:
    """Outcome of one check.

    ``kind`` is ``"inequality"`` (violation: margin < -tolerance) or
    ``"equality"`` (violation: |margin| > tolerance, or a KS statistic above
    its critical value where one is recorded).
    """

    check: str
    kind: str
    records: list[TrialRecord] = field(default_factory=list)
    k_sigma: float = K_SIGMA

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def violations(self) -> int:
        return sum(r.violated for r in self.records)

    @property
    def worst_margin(self) -> float:
        return min((r.margin for r in self.records), default=0.0)

    @property
    def max_abs_margin(self) -> float:
        return max((abs(r.margin) for r in self.records), default=0.0)

    @property
    def tolerance(self) -> float:
        """Largest per-trial tolerance."""
        return max((r.tolerance for r in self.records), default=0.0)

    @property
    def per_trial(self) -> list[tuple]:
        return [(r.direction, r.lhs, r.rhs, r.margin) for r in self.records]

    @property
    def max_ks(self) -> float | None:
        ks = [r.ks for r in self.records if r.ks is not None]
        return max(ks) if ks else None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def summary(self) -> str:
        return (
            f"{self.check}: trials={self.trials} violations={self.violations} "
            f"worst_margin={self.worst_margin:.6g} max|margin|={self.max_abs_margin:.6g} "
            f"tolerance<={self.tolerance:.6g}"
        )


# ---------------------------------------------------------------------------
# Directions and projections
# ---------------------------------------------------------------------------


def sample_directions(L: int, count: int, seed: int, include_canonical: bool = False) -> np.ndarray:
    """``count`` uniform unit vectors in R^L (normalised Gaussians), optionally
    preceded by the L canonical basis vectors. Returns a ``(rows, L)`` array."""
    if L < 1:
        raise ValueError("L must be >= 1")
    g = make_rng(seed, "directions", L).standard_normal((count, L))
    norms = np.linalg.norm(g, axis=1)
    g = g[norms > 0] / norms[norms > 0, None]
    if include_canonical:
        g = np.vstack([np.eye(L), g])
    return g


def angle_direction(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def isotropic_scale(block: np.ndarray) -> np.ndarray:
    """Divide ``block`` by the root mean squared coordinate.

    The factor is a rotation-invariant statistic of the whole sample, so
    spherical and rot90 invariance survive exactly; a full empirical
    whitening would add an anisotropy of order n^-1/2, the same order as the
    tolerances the checks use.
    """
    block = np.asarray(block, dtype=float)
    scale = math.sqrt(float(np.mean(np.sum(block * block, axis=1))) / block.shape[1])
    if not scale > 0:
        raise DimensionMismatch("cannot scale an all-zero block")
    return block / scale


def exact_block(spec: SourceSpec, n: int, seed: int) -> np.ndarray:
    """Sample ``spec`` for verification: elliptical blocks are mapped back
    to spherical form with the known ``Lambda^-1 (x - mu)``, then every
    block is isotropically scaled. No sample mean or covariance is used."""
    x = sample_source(spec, n, seed)
    if isinstance(spec, Elliptical):
        x = np.linalg.solve(np.array(spec.lam), (x - np.array(spec.mu)).T).T
    return isotropic_scale(x)


def verification_instance(specs, n: int, seed: int) -> ISAInstance:
    """Unmixed instance of :func:`exact_block` sources (A = I).

    Block ``m`` uses the same sampler seed as in
    :func:`isasep.model.make_instance`.
    """
    specs = tuple(specs)
    S = np.hstack([exact_block(spec, n, derive_seed(seed, "source", m)) for m, spec in enumerate(specs)])
    g = Grouping.contiguous([source_dim(s) for s in specs])
    return ISAInstance(specs, int(seed), np.eye(g.D), S, S.copy(), g, "identity")


def _entropy(x: np.ndarray, seed: int, *keys) -> EntropyEstimate:
    return entropy_1d(x, seed=derive_seed(seed, *keys))


def projection_entropy(block: np.ndarray, w: np.ndarray, seed: int = 0) -> EntropyEstimate:
    """Spacing entropy of the projection ``<w, u>`` of every row of ``block``."""
    w = np.asarray(w, dtype=float)
    return _entropy(np.asarray(block) @ w, seed, "proj", zlib.crc32(w.tobytes()))


def _coordinate_entropies(block: np.ndarray, seed: int) -> list[EntropyEstimate]:
    return [_entropy(block[:, i], seed, "coord", i) for i in range(block.shape[1])]


def _require(block: np.ndarray, n_min: int = MIN_CHECK_SAMPLES) -> np.ndarray:
    block = np.asarray(block, dtype=float)
    if block.ndim != 2:
        raise DimensionMismatch(f"expected an n x d block, got shape {block.shape}")
    if block.shape[0] < n_min:
        raise TooFewSamples(f"check needs n >= {n_min}, got {block.shape[0]}")
    return block


def _check_dirs(block: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if dirs.shape[1] != block.shape[1]:
        raise DimensionMismatch(f"directions live in R^{dirs.shape[1]}, block in R^{block.shape[1]}")
    return dirs


# ---------------------------------------------------------------------------
# Inequalities
# ---------------------------------------------------------------------------


def check_w_epi(block, dirs, seed: int = 0, k_sigma: float = K_SIGMA) -> InequalityReport:
    """Entropy power inequality along each direction w::

        exp(2 H(<w, u>))  >=  sum_i exp(2 H(u_i)) * w_i^2

    The right side uses the exact scaling identity for ``H(w_i u_i)``; the
    margin is in entropy-power units and its standard error comes from the
    delta method, sd(exp(2H)) = 2 exp(2H) sd(H).
    """
    block = _require(block)
    dirs = _check_dirs(block, dirs)
    coords = _coordinate_entropies(block, seed)
    powers = np.array([math.exp(2.0 * e.value) for e in coords])
    power_sd = np.array([2.0 * p * e.stderr for p, e in zip(powers, coords)])
    report = InequalityReport("w_epi", "inequality", k_sigma=k_sigma)
    for t, w in enumerate(dirs):
        proj = _entropy(block @ w, seed, "w_epi", t)
        lhs = math.exp(2.0 * proj.value)
        w2 = w * w
        rhs = float(np.sum(powers * w2))
        sd = math.sqrt((2.0 * lhs * proj.stderr) ** 2 + float(np.sum((power_sd * w2) ** 2)))
        margin = lhs - rhs
        tol = k_sigma * sd
        report.records.append(TrialRecord(tuple(w), lhs, rhs, margin, sd, tol, margin < -tol))
    return report


def check_entropy_combination(block, dirs, seed: int = 0, k_sigma: float = K_SIGMA) -> InequalityReport:
    """``H(<w, u>) >= sum_i w_i^2 H(u_i)`` along each direction (nats)."""
    block = _require(block)
    dirs = _check_dirs(block, dirs)
    coords = _coordinate_entropies(block, seed)
    h = np.array([e.value for e in coords])
    sds = np.array([e.stderr for e in coords])
    report = InequalityReport("entropy_combination", "inequality", k_sigma=k_sigma)
    for t, w in enumerate(dirs):
        proj = _entropy(block @ w, seed, "combination", t)
        w2 = w * w
        rhs = float(np.sum(w2 * h))
        sd = math.sqrt(proj.stderr**2 + float(np.sum((w2 * sds) ** 2)))
        margin = proj.value - rhs
        tol = k_sigma * sd
        report.records.append(TrialRecord(tuple(w), proj.value, rhs, margin, sd, tol, margin < -tol))
    return report


def check_proposition_sum(
    instance: ISAInstance, num_w: int, seed: int = 0, k_sigma: float = K_SIGMA
) -> InequalityReport:
    """Marginal entropy sum never decreases under orthogonal mixing::

        sum_i H((W s)_i)  >=  sum_i H(s_i)

    for ``W = I`` followed by ``num_w`` Haar-random orthogonal matrices.
    The ``W = I`` trial reuses the source estimates and has margin exactly 0.
    """
    S = _require(instance.S, 1)
    D = S.shape[1]
    base = _coordinate_entropies(S, seed)
    base_sum = sum(e.value for e in base)
    base_var = sum(e.stderr**2 for e in base)
    report = InequalityReport("proposition_sum", "inequality", k_sigma=k_sigma)
    report.records.append(
        TrialRecord(tuple(np.eye(D).ravel()), base_sum, base_sum, 0.0, math.sqrt(2 * base_var),
                    k_sigma * math.sqrt(2 * base_var), False)
    )
    for t in range(num_w):
        W = random_orthogonal(D, derive_seed(seed, "proposition_W", t))
        Y = S @ W.T
        ests = [_entropy(Y[:, i], seed, "proposition_y", t, i) for i in range(D)]
        lhs = sum(e.value for e in ests)
        sd = math.sqrt(sum(e.stderr**2 for e in ests) + base_var)
        margin = lhs - base_sum
        tol = k_sigma * sd
        report.records.append(TrialRecord(tuple(W.ravel()), lhs, base_sum, margin, sd, tol, margin < -tol))
    return report


# ---------------------------------------------------------------------------
# Symmetries
# ---------------------------------------------------------------------------


def ks_critical_value(n1: int, n2: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def check_projection_invariance(block, dirs, seed: int = 0, k_sigma: float = K_SIGMA) -> InequalityReport:
    """Equal projection entropies for a spherical block: margin =
    H(<w, u>) - H(<w_0, u>) with ``w_0`` the first direction."""
    block = _require(block, 1)
    dirs = _check_dirs(block, dirs)
    ref = _entropy(block @ dirs[0], seed, "invariance", 0)
    report = InequalityReport("projection_invariance", "equality", k_sigma=k_sigma)
    for t, w in enumerate(dirs):
        est = ref if t == 0 else _entropy(block @ w, seed, "invariance", t)
        margin = est.value - ref.value
        sd = math.hypot(est.stderr, ref.stderr)
        tol = k_sigma * sd
        report.records.append(
            TrialRecord(tuple(w), est.value, ref.value, margin, sd, tol, abs(margin) > tol)
        )
    return report


def check_rot90_symmetry(
    block, dirs, seed: int = 0, k_sigma: float = K_SIGMA, alpha: float = 0.01
) -> InequalityReport:
    """Projections onto w and Rw (R the 90-degree ccw rotation) must agree:
    equal entropies within tolerance and a two-sample KS statistic below
    its critical value.

    ``alpha`` is the level for the whole direction set; each direction is
    tested at ``alpha / len(dirs)`` (Bonferroni), so an invariant block is
    rejected with probability at most ``alpha`` overall.
    """
    block = _require(block, 1)
    if block.shape[1] != 2:
        raise DimensionMismatch("rot90 symmetry needs a 2-dimensional block")
    dirs = _check_dirs(block, dirs)
    n = block.shape[0]
    crit = ks_critical_value(n, n, alpha / len(dirs))
    report = InequalityReport("rot90_symmetry", "equality", k_sigma=k_sigma)
    for t, w in enumerate(dirs):
        a = block @ w
        b = block @ (ROT90 @ w)
        ea = _entropy(a, seed, "rot90", t, 0)
        eb = _entropy(b, seed, "rot90", t, 1)
        margin = ea.value - eb.value
        sd = math.hypot(ea.stderr, eb.stderr)
        tol = k_sigma * sd
        ks = float(ks_2samp(a, b).statistic)
        violated = abs(margin) > tol or ks > crit
        report.records.append(TrialRecord(tuple(w), ea.value, eb.value, margin, sd, tol, violated, ks, crit))
    return report


def scan_entropy_on_circle(block, resolution: int, seed: int = 0) -> list[tuple[float, EntropyEstimate]]:
    """Projection entropy at ``resolution`` equally spaced angles covering
    [0, pi/2] (both ends included)."""
    block = _require(block, 1)
    if block.shape[1] != 2:
        raise DimensionMismatch("scan_entropy_on_circle needs a 2-dimensional block")
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    angles = np.linspace(0.0, math.pi / 2.0, resolution)
    return [
        (float(th), _entropy(block @ angle_direction(th), seed, "scan", i))
        for i, th in enumerate(angles)
    ]


def scan_argmin(scan) -> int:
    return int(np.argmin([e.value for _, e in scan]))


def scan_range(scan) -> tuple[float, float]:
    """(max - min of the profile, combined stderr of the two extremes)."""
    values = np.array([e.value for _, e in scan])
    hi, lo = int(np.argmax(values)), int(np.argmin(values))
    sd = math.hypot(scan[hi][1].stderr, scan[lo][1].stderr)
    return float(values[hi] - values[lo]), sd


def min_entropy_basis(scan) -> np.ndarray:
    """Orthonormal basis {w_min, R w_min} from the scan minimum (rows)."""
    w = angle_direction(scan[scan_argmin(scan)][0])
    return np.vstack([w, ROT90 @ w])


# ---------------------------------------------------------------------------
# Negative controls
# ---------------------------------------------------------------------------


def sheared_uniform(n: int, shear: float, seed: int) -> np.ndarray:
    """Independent unit-variance uniforms pushed through the shear
    [[1, shear], [0, 1]]; not invariant to 90-degree rotation."""
    h = math.sqrt(3.0)
    u = make_rng(seed, "sheared").uniform(-h, h, size=(n, 2))
    return u @ np.array([[1.0, shear], [0.0, 1.0]]).T


def uniform_square(n: int, seed: int) -> np.ndarray:
    """Independent unit-variance uniforms; non-spherical."""
    h = math.sqrt(3.0)
    return make_rng(seed, "uniform_square").uniform(-h, h, size=(n, 2))
