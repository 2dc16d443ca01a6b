"""Permutation search: group ICA coordinates into dependent blocks
(second stage of the two-stage ISA procedure)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from .entropy import DEFAULT_K, entropy_knn
from .errors import InfeasibleDims, SearchSpaceTooLarge, ShapeMismatch
from .linalg import derive_seed, permutation_from_grouping
from .model import Grouping

MAX_PARTITIONS = 10**6
STRATEGIES = ("exhaustive", "greedy")


@dataclass(frozen=True)
class GroupingSearchConfig:
    strategy: str
    dims: tuple[int, ...]

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"invalid block sizes {dims}")
        object.__setattr__(self, "dims", dims)
        if self.strategy == "exhaustive" and partition_count(dims) > MAX_PARTITIONS:
            raise SearchSpaceTooLarge(
                f"{partition_count(dims)} partitions exceed the exhaustive limit {MAX_PARTITIONS}"
            )

    @property
    def M(self) -> int:
        return len(self.dims)


def partition_count(dims: Sequence[int]) -> int:
    """Number of unordered partitions of D = sum(dims) items into blocks
    of the given sizes: D! / (prod d_m! * prod over sizes of multiplicity!)."""
    D = sum(dims)
    denom = 1
    for d in dims:
        denom *= math.factorial(d)
    for mult in Counter(dims).values():
        denom *= math.factorial(mult)
    return math.factorial(D) // denom


def _check_dep(dep: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    dep = np.asarray(dep, dtype=float)
    if dep.ndim != 2 or dep.shape[0] != dep.shape[1]:
        raise ShapeMismatch(f"dependence matrix must be square, got {dep.shape}")
    if sum(dims) != dep.shape[0]:
        raise ShapeMismatch(f"block sizes {tuple(dims)} do not sum to D={dep.shape[0]}")
    if any(int(d) < 1 for d in dims):
        raise ShapeMismatch(f"invalid block sizes {tuple(dims)}")
    return dep


def order_blocks(blocks, dims: Sequence[int]) -> Grouping:
    """Arrange unordered blocks to follow ``dims``; equal-size blocks are
    ordered by their smallest index."""
    pool = sorted((tuple(sorted(b)) for b in blocks), key=lambda b: (len(b), b))
    out = []
    for d in dims:
        for i, b in enumerate(pool):
            if len(b) == d:
                out.append(pool.pop(i))
                break
        else:
            raise InfeasibleDims(f"no block of size {d} among {blocks}")
    if pool:
        raise InfeasibleDims("blocks left over after matching dims")
    return Grouping(tuple(out))


def iter_partitions(D: int, dims: Sequence[int]) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Every unordered partition of ``range(D)`` into blocks of sizes
    ``dims``, each exactly once (blocks sorted, listed by smallest element)."""
    if sum(dims) != D:
        raise ShapeMismatch("dims do not sum to D")

    def rec(remaining: tuple[int, ...], sizes: Counter):
        if not remaining:
            yield ()
            return
        first, rest = remaining[0], remaining[1:]
        for s in sorted(sizes):
            if sizes[s] == 0:
                continue
            sizes[s] -= 1
            for mates in combinations(rest, s - 1):
                block = (first,) + mates
                left = tuple(i for i in rest if i not in mates)
                for tail in rec(left, sizes):
                    yield (block,) + tail
            sizes[s] += 1

    yield from rec(tuple(range(D)), Counter(int(d) for d in dims))


def block_score(dep: np.ndarray, blocks) -> float:
    """Sum of within-block pairwise dependence."""
    total = 0.0
    for b in sorted(tuple(sorted(b)) for b in blocks):
        for i, j in combinations(b, 2):
            total += dep[i, j]
    return float(total)


def grouping_score(dep: np.ndarray, grouping: Grouping) -> float:
    return block_score(np.asarray(dep, dtype=float), grouping.blocks)


def group_exhaustive(dep, dims: Sequence[int]) -> tuple[Grouping, float]:
    """Partition maximising the within-block dependence sum.

    Ties go to the lexicographically smallest sorted-block representation.

    Raises
    ------
    SearchSpaceTooLarge
        When more than 10^6 partitions would have to be enumerated.
    """
    dims = tuple(int(d) for d in dims)
    dep = _check_dep(dep, dims)
    count = partition_count(dims)
    if count > MAX_PARTITIONS:
        raise SearchSpaceTooLarge(f"{count} partitions exceed the exhaustive limit {MAX_PARTITIONS}")
    best, best_score = None, -math.inf
    for blocks in iter_partitions(dep.shape[0], dims):
        score = block_score(dep, blocks)
        if score > best_score or (score == best_score and _canon(blocks) < _canon(best)):
            best, best_score = blocks, score
    return order_blocks(best, dims), best_score


def _canon(blocks) -> tuple:
    return tuple(sorted(tuple(sorted(b)) for b in blocks))


@lru_cache(maxsize=4096)
def _packable(sizes: tuple[int, ...], caps: tuple[int, ...]) -> bool:
    """Can clusters of ``sizes`` be grouped to fill every cap exactly?"""
    if not sizes:
        return all(c == 0 for c in caps)
    s, rest = sizes[0], sizes[1:]
    tried = set()
    for i, c in enumerate(caps):
        if c >= s and c not in tried:
            tried.add(c)
            new = caps[:i] + (c - s,) + caps[i + 1 :]
            if _packable(rest, tuple(sorted(new, reverse=True))):
                return True
    return False


def _feasible(sizes, dims) -> bool:
    return _packable(tuple(sorted(sizes, reverse=True)), tuple(sorted(dims, reverse=True)))


def group_greedy(dep, dims: Sequence[int]) -> tuple[Grouping, float]:
    """Agglomerative grouping under fixed block sizes.

    Starting from singletons, repeatedly merge the pair of clusters with the
    largest average inter-cluster dependence, among merges that keep the
    cluster sizes packable into ``dims`` (so no merge exceeds the largest
    unfilled block). Ties go to the smallest (min index, min index) pair.

    Raises
    ------
    InfeasibleDims
        If no admissible merge exists before the sizes match ``dims``.
    """
    dims = tuple(int(d) for d in dims)
    dep = _check_dep(dep, dims)
    clusters = [[i] for i in range(dep.shape[0])]
    target = sorted(dims)
    if not _feasible([1] * len(clusters), dims):
        raise InfeasibleDims(f"cannot assemble blocks {dims}")
    while sorted(len(c) for c in clusters) != target:
        best = None
        for a, b in combinations(range(len(clusters)), 2):
            ca, cb = clusters[a], clusters[b]
            sizes = [len(c) for k, c in enumerate(clusters) if k not in (a, b)]
            sizes.append(len(ca) + len(cb))
            if not _feasible(sizes, dims):
                continue
            avg = float(dep[np.ix_(ca, cb)].mean())
            key = (avg, -min(ca), -min(cb))
            if best is None or key > best[0]:
                best = (key, a, b)
        if best is None:
            raise InfeasibleDims(f"no admissible merge towards block sizes {dims}")
        _, a, b = best
        merged = sorted(clusters[a] + clusters[b])
        clusters = [c for k, c in enumerate(clusters) if k not in (a, b)] + [merged]
        clusters.sort(key=min)
    grouping = order_blocks(clusters, dims)
    return grouping, grouping_score(dep, grouping)


def group_by_joint_entropy(
    Y, dims: Sequence[int], k: int = DEFAULT_K, *, seed: int = 0
) -> tuple[Grouping, float]:
    """Exhaustive search minimising the sum of k-NN joint block entropies
    ``sum_m H(y^m)``; catches dependence that is invisible pairwise.

    Returns the grouping and its cost (nats).
    """
    Y = np.asarray(Y, dtype=float)
    dims = tuple(int(d) for d in dims)
    if sum(dims) != Y.shape[1]:
        raise ShapeMismatch(f"block sizes {dims} do not sum to D={Y.shape[1]}")
    if partition_count(dims) > MAX_PARTITIONS:
        raise SearchSpaceTooLarge("too many partitions for joint-entropy search")
    cache: dict[tuple[int, ...], float] = {}

    def h(block):
        if block not in cache:
            cache[block] = entropy_knn(
                Y[:, list(block)], k, n_boot=0, seed=derive_seed(seed, "joint", *block)
            ).value
        return cache[block]

    best, best_cost = None, math.inf
    for blocks in iter_partitions(Y.shape[1], dims):
        cost = sum(h(b) for b in blocks)
        if cost < best_cost or (cost == best_cost and _canon(blocks) < _canon(best)):
            best, best_cost = blocks, cost
    return order_blocks(best, dims), float(best_cost)


def assemble_separation(ica_W, grouping: Grouping) -> np.ndarray:
    """``P @ W_ICA`` with rows listed block by block."""
    W = np.asarray(ica_W, dtype=float)
    if W.ndim != 2 or W.shape[0] != grouping.D:
        raise ShapeMismatch(f"W has shape {W.shape}, grouping covers D={grouping.D}")
    return permutation_from_grouping(grouping.order()).apply(W)
