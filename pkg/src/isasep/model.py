"""Synthetic ISA problem instances and recovery metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeMismatch, ZeroBlockRow
from .linalg import derive_seed, is_orthogonal, random_orthogonal
from .sources import SourceSpec, sample_source, source_dim, standardize_block


@dataclass(frozen=True)
class Grouping:
    """A partition of the coordinates ``0..D-1`` into ordered blocks."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        if any(len(b) == 0 for b in blocks):
            raise ShapeMismatch("empty block in grouping")
        flat = [i for b in blocks for i in b]
        if sorted(flat) != list(range(len(flat))):
            raise ShapeMismatch(f"blocks {blocks} do not partition 0..{len(flat) - 1}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def contiguous(cls, dims: Sequence[int]) -> "Grouping":
        blocks, start = [], 0
        for d in dims:
            blocks.append(tuple(range(start, start + int(d))))
            start += int(d)
        return cls(tuple(blocks))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @property
    def D(self) -> int:
        return sum(self.dims)

    @property
    def M(self) -> int:
        return len(self.blocks)

    def order(self) -> tuple[int, ...]:
        """Coordinates listed block by block."""
        return tuple(i for b in self.blocks for i in b)

    def canonical(self) -> tuple[tuple[int, ...], ...]:
        """Order-free representation: sorted blocks, sorted by content."""
        return tuple(sorted(tuple(sorted(b)) for b in self.blocks))

    def same_partition(self, other: "Grouping") -> bool:
        return self.canonical() == other.canonical()

    def relabel(self, perm: Sequence[int]) -> "Grouping":
        """Image of the grouping under the coordinate map ``i -> perm[i]``."""
        return Grouping(tuple(tuple(int(perm[i]) for i in b) for b in self.blocks))


@dataclass(frozen=True)
class ISAInstance:
    """Ground truth and observations of one synthetic ISA problem.

    ``Z = S @ A.T`` (z = A s per sample); ``S`` holds standardized,
    mutually independent source blocks laid out contiguously.
    """

    specs: tuple
    seed: int
    A: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    grouping: Grouping
    mixing: str = "haar"
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.grouping.dims

    @property
    def M(self) -> int:
        return self.grouping.M

    @property
    def D(self) -> int:
        return self.grouping.D

    @property
    def n(self) -> int:
        return self.S.shape[0]


MixingSpec = Union[str, np.ndarray]


def make_instance(
    specs: Sequence[SourceSpec],
    n: int,
    seed: int,
    mixing: MixingSpec = "haar",
) -> ISAInstance:
    """Sample independent standardized blocks and mix them.

    ``mixing`` is ``"haar"`` (random orthogonal A), ``"identity"``, or an
    explicit orthogonal ``D x D`` matrix.
    """
    specs = tuple(specs)
    if not specs:
        raise ValueError("need at least one source spec")
    dims = [source_dim(s) for s in specs]
    D = sum(dims)
    if n < 10 * D:
        raise ValueError(f"need n >= 10 * D = {10 * D} samples, got {n}")
    blocks = [
        standardize_block(sample_source(spec, n, derive_seed(seed, "source", m)))
        for m, spec in enumerate(specs)
    ]
    S = np.hstack(blocks)
    if isinstance(mixing, str):
        if mixing == "haar":
            A = random_orthogonal(D, derive_seed(seed, "mixing"))
            Z = S @ A.T
        elif mixing == "identity":
            A = np.eye(D)
            Z = S.copy()
        else:
            raise ValueError(f"unknown mixing {mixing!r}")
        kind = mixing
    else:
        A = np.array(mixing, dtype=float)
        if A.shape != (D, D):
            raise ShapeMismatch(f"mixing matrix must be {D} x {D}, got {A.shape}")
        if not is_orthogonal(A, atol=1e-8):
            raise ValueError("given mixing matrix is not orthogonal")
        Z = S @ A.T
        kind = "given"
    return ISAInstance(specs, int(seed), A, S, Z, Grouping.contiguous(dims), kind)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def block_norms(G: np.ndarray, rows: Grouping, cols: Grouping, norm: str = "fro") -> np.ndarray:
    """M x M matrix of block norms of ``G``."""
    G = np.asarray(G, dtype=float)
    b = np.empty((rows.M, cols.M))
    for i, rb in enumerate(rows.blocks):
        for j, cb in enumerate(cols.blocks):
            sub = G[np.ix_(rb, cb)]
            b[i, j] = np.sqrt(np.sum(sub * sub)) if norm == "fro" else np.sum(np.abs(sub))
    return b


def block_amari_index(
    G: np.ndarray,
    grouping: Grouping,
    row_grouping: Grouping | None = None,
    norm: str = "fro",
) -> float:
    """Normalised block Amari index of a global transfer matrix ``G``.

    Columns of ``G`` are grouped by ``grouping`` (true blocks), rows by
    ``row_grouping`` (estimated blocks; defaults to ``grouping``). With
    ``b_ij`` the norm of block (i, j)::

        r = 1 / (2 M (M - 1)) * [ sum_i (sum_j b_ij / max_j b_ij - 1)
                                + sum_j (sum_i b_ij / max_i b_ij - 1) ]

    The value lies in [0, 1] and is 0 exactly for block-scaled permutations.
    ``norm`` is ``"fro"`` (Frobenius) or ``"abs"`` (sum of absolute values).
    A single block (M = 1) has index 0.
    """
    G = np.asarray(G, dtype=float)
    rows = grouping if row_grouping is None else row_grouping
    if G.ndim != 2 or G.shape != (rows.D, grouping.D):
        raise ShapeMismatch(f"G has shape {G.shape}, groupings need {(rows.D, grouping.D)}")
    if rows.M != grouping.M:
        raise ShapeMismatch("row and column groupings have different block counts")
    if norm not in ("fro", "abs"):
        raise ValueError(f"norm must be 'fro' or 'abs', got {norm!r}")
    M = grouping.M
    b = block_norms(G, rows, grouping, norm)
    row_max = b.max(axis=1)
    col_max = b.max(axis=0)
    if np.any(row_max == 0) or np.any(col_max == 0):
        raise ZeroBlockRow("a whole block row or column of G is zero")
    if M == 1:
        return 0.0
    rsum = np.sum(b.sum(axis=1) / row_max - 1.0)
    csum = np.sum(b.sum(axis=0) / col_max - 1.0)
    return float((rsum + csum) / (2.0 * M * (M - 1)))


def grouping_accuracy(estimated: Grouping, truth: Grouping) -> float:
    """Fraction of coordinates in their matched block under the best
    block-to-block matching (optimal assignment on overlap counts)."""
    if estimated.D != truth.D or sorted(estimated.dims) != sorted(truth.dims):
        raise ShapeMismatch("groupings differ in dimension or block sizes")
    overlap = np.array(
        [[len(set(e) & set(t)) for t in truth.blocks] for e in estimated.blocks], dtype=float
    )
    r, c = linear_sum_assignment(overlap, maximize=True)
    return float(overlap[r, c].sum() / truth.D)
