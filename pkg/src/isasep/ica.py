"""Symmetric FastICA on whitened data (first stage of the two-stage ISA
procedure)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .entropy import entropy_1d
from .errors import NonFiniteUpdate, NotWhitened
from .linalg import derive_seed, random_orthogonal, symmetric_decorrelation, whiteness_error

log = logging.getLogger(__name__)

NONLINEARITIES = ("tanh", "cubic")
GAUSSIAN_Z = 4.0


@dataclass(frozen=True)
class ICAConfig:
    nonlinearity: str = "tanh"
    max_iter: int = 1000
    tol: float = 1e-8
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"nonlinearity must be one of {NONLINEARITIES}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")


@dataclass(frozen=True)
class ICAResult:
    """Separation matrix acting on whitened samples: ``y = W @ z``.

    ``converged`` requires both a converged fixed-point iteration
    (``fixed_point_converged``) and an identifiable result: fewer than two
    output components indistinguishable from Gaussian
    (``gaussian_components``), since any rotation of a Gaussian subspace is
    an equally good ICA solution. ``restart`` is the index of the attempt
    that produced ``W``; ``costs`` lists the sum of marginal entropies
    reached by every attempt when no fixed point converged (empty otherwise).
    """

    W: np.ndarray
    iterations: int
    converged: bool
    final_delta: float
    restart: int = 0
    costs: tuple = ()
    fixed_point_converged: bool = True
    gaussian_components: int = 0


def _contrast(y: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    if kind == "tanh":
        g = np.tanh(y)
        return g, 1.0 - g * g
    return y**3, 3.0 * y * y


def check_whitened(x: np.ndarray, mean_tol: float = 1e-6, cov_tol: float = 1e-3) -> None:
    mean_err, cov_err = whiteness_error(x)
    if mean_err > mean_tol or cov_err > cov_tol:
        raise NotWhitened(
            f"input is not white: max |mean| = {mean_err:.2e}, max |cov - I| = {cov_err:.2e}"
        )


def gaussianity_scores(y: np.ndarray) -> np.ndarray:
    """|z| statistic of E[y tanh(y) - (1 - tanh(y)^2)] per column of ``y``.

    The expectation vanishes for a standard Gaussian (Stein's identity), so
    small scores mean the component looks Gaussian. Scores are the sample
    mean over its standard error.
    """
    y = np.asarray(y, dtype=float)
    g = np.tanh(y)
    t = y * g - (1.0 - g * g)
    sd = t.std(axis=0, ddof=1)
    return np.abs(t.mean(axis=0)) / np.maximum(sd / np.sqrt(y.shape[0]), np.finfo(float).tiny)


def count_gaussian(y: np.ndarray, threshold: float = GAUSSIAN_Z) -> int:
    return int(np.sum(gaussianity_scores(y) < threshold))


def marginal_entropy_sum(W: np.ndarray, data: np.ndarray, seed: int = 0, n_boot: int = 0):
    """Sum of spacing entropies of the rows of ``W @ z`` and the summed stderr."""
    y = np.asarray(data) @ np.asarray(W).T
    ests = [entropy_1d(y[:, i], n_boot=n_boot, seed=derive_seed(seed, "cost", i)) for i in range(y.shape[1])]
    return sum(e.value for e in ests), sum(e.stderr for e in ests)


def _run(x: np.ndarray, W: np.ndarray, config: ICAConfig):
    n = x.shape[1]
    delta = np.inf
    it = 0
    for it in range(1, config.max_iter + 1):
        g, gp = _contrast(W @ x, config.nonlinearity)
        W_new = g @ x.T / n - gp.mean(axis=1)[:, None] * W
        if not np.all(np.isfinite(W_new)):
            raise NonFiniteUpdate(f"FastICA update produced NaN/Inf at iteration {it}")
        W_new = symmetric_decorrelation(W_new)
        delta = float(np.max(np.abs(1.0 - np.abs(np.einsum("ij,ij->i", W_new, W)))))
        W = W_new
        if delta < config.tol:
            return W, it, True, delta
    return W, it, False, delta


def fastica(data: np.ndarray, config: ICAConfig = ICAConfig()) -> ICAResult:
    """Symmetric fixed-point ICA.

    Each attempt starts from a Haar-random W and iterates::

        W+ = E[g(W z) z^T] - diag(E[g'(W z)]) W
        W  = (W+ W+^T)^{-1/2} W+

    until ``max_i |1 - |<w_i_new, w_i_old>|| < tol``. Up to ``restarts``
    further attempts with fresh seeds follow a non-converged one. If none
    converges, the attempt with the smallest sum of marginal entropies is
    returned (ties go to the lowest index) with ``converged=False``. A
    converged fixed point with two or more Gaussian-looking components is
    also reported as ``converged=False``: the optimum is flat there.

    Raises
    ------
    NotWhitened
        If the input mean exceeds 1e-6 or its covariance is off I by > 1e-3.
    NonFiniteUpdate
        If an update produces NaN or Inf.
    """
    z = np.asarray(data, dtype=float)
    if z.ndim != 2:
        raise ValueError(f"expected an n x D matrix, got shape {z.shape}")
    check_whitened(z)
    D = z.shape[1]
    x = np.ascontiguousarray(z.T)
    failed = []
    for attempt in range(config.restarts + 1):
        W0 = random_orthogonal(D, derive_seed(config.seed, "ica", attempt))
        W, it, ok, delta = _run(x, W0, config)
        if ok:
            n_gauss = count_gaussian(z @ W.T)
            return ICAResult(W, it, n_gauss < 2, delta, attempt, (), True, n_gauss)
        log.debug("FastICA attempt %d did not converge (delta=%.3e)", attempt, delta)
        failed.append((W, it, delta))
    costs = tuple(marginal_entropy_sum(W, z)[0] for W, _, _ in failed)
    best = int(np.argmin(costs))
    W, it, delta = failed[best]
    return ICAResult(W, it, False, delta, best, costs, False, count_gaussian(z @ W.T))
