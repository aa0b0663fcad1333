"""Ensemble fuzzy C-means with evidence-accumulation consensus.

Each run draws its cluster count uniformly from ``[k_min, k_max]``, hard
labels from every run are accumulated into a co-association matrix, and the
consensus partition is read off an average-linkage dendrogram on ``1 - C``
at the level with the longest lifetime.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from .fcm import FcmParams, FcmResult, fcm_run

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
DRAW_STREAM = 0x6B
FCM_STREAM = 0xFC
LIFETIME_TIE = 1e-12


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix64(*values: int) -> int:
    """Order-sensitive 64-bit hash of integers, chained through splitmix64."""
    h = 0
    for v in values:
        h = splitmix64(h ^ (int(v) & MASK64))
    return h


@dataclass(frozen=True)
class EnsembleParams:
    k_min: int = 4
    k_max: int = 7
    runs: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.k_min <= self.k_max:
            raise ValueError(f"need 2 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        if self.runs < 1:
            raise ValueError("runs must be positive")


@dataclass
class CoAssociation:
    """Co-association matrix in scipy's condensed (strict upper triangle) layout.

    The diagonal is implicitly 1.
    """

    condensed: np.ndarray
    n: int
    runs: int

    def matrix(self) -> np.ndarray:
        C = squareform(self.condensed, checks=False)
        np.fill_diagonal(C, 1.0)
        return C

    def __getitem__(self, pq) -> float:
        p, q = pq
        if p == q:
            return 1.0
        if p > q:
            p, q = q, p
        return float(self.condensed[self.n * p - p * (p + 1) // 2 + (q - p - 1)])


@dataclass
class ConsensusPartition:
    labels: np.ndarray
    k: int
    draws: list
    degenerate: bool = False


def draw_k(params: EnsembleParams, run_index: int) -> int:
    rng = np.random.default_rng(mix64(params.seed, run_index, DRAW_STREAM))
    return int(params.k_min + rng.integers(params.k_max - params.k_min + 1))


def run_seed(params: EnsembleParams, run_index: int) -> int:
    return mix64(params.seed, run_index, FCM_STREAM)


def stacked_k_bounds(n_opt: int, n_sar: int, cap: int = 30) -> tuple[int, int]:
    """Cluster-count range for the stacked image: ``[max(N_opt, N_SAR), N_opt * N_SAR]``.

    The upper end is capped at ``cap`` and the lower end raised to 2 if needed.
    """
    if n_opt < 1 or n_sar < 1:
        raise ValueError("cluster counts must be positive")
    lo = max(n_opt, n_sar, 2)
    hi = max(min(n_opt * n_sar, cap), lo)
    return lo, hi


def accumulate(label_sets: Sequence[np.ndarray]) -> CoAssociation:
    """Fraction of runs in which each pair of points shares a label."""
    if len(label_sets) == 0:
        raise ValueError("no clusterings to accumulate")
    n = len(label_sets[0])
    dtype = np.uint16 if len(label_sets) < 2 ** 16 else np.int64
    counts = np.zeros((n, n), dtype=dtype)
    for labels in label_sets:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ValueError("all label vectors must have the same length")
        counts += labels[:, None] == labels[None, :]
    runs = len(label_sets)
    condensed = squareform(counts, checks=False).astype(np.float64) / runs
    return CoAssociation(condensed, n, runs)


def accumulate_fuzzy(memberships: Sequence[np.ndarray]) -> CoAssociation:
    """Soft variant: average over runs of ``sum_i u_ip * u_iq``."""
    if len(memberships) == 0:
        raise ValueError("no clusterings to accumulate")
    n = memberships[0].shape[1]
    total = np.zeros((n, n))
    for U in memberships:
        total += U.T @ U
    condensed = squareform(total / len(memberships), checks=False)
    return CoAssociation(np.clip(condensed, 0.0, 1.0), n, len(memberships))


def _relabel_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    remap = np.empty(labels.max() + 1, dtype=int)
    remap[order] = np.arange(order.size)
    return remap[labels]


def _cut(Z: np.ndarray, n: int, n_clusters: int) -> np.ndarray:
    """Apply the first ``n - n_clusters`` merges of a scipy linkage."""
    parent = list(range(2 * n - 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step in range(n - n_clusters):
        a, b = int(Z[step, 0]), int(Z[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = np.array([find(i) for i in range(n)])
    return _relabel_by_first_appearance(roots)


def consensus(C: CoAssociation) -> ConsensusPartition:
    """Average-linkage clustering of ``1 - C`` cut at the maximum-lifetime level.

    Cutting into ``c`` clusters is valid for thresholds between merge heights
    ``h[n-c]`` and ``h[n-c+1]`` (with ``h[0] = 0`` and ``h[n] = 1``); the
    widest such interval wins, ties going to the finer cut. If the winner
    is the all-singletons cut, the evidence holds no structure and a single
    cluster is returned instead.
    """
    n = C.n
    if n == 1:
        return ConsensusPartition(np.zeros(1, dtype=int), 1, [])
    dist = np.clip(1.0 - C.condensed, 0.0, 1.0)
    Z = linkage(dist, method="average")
    heights = np.concatenate([[0.0], np.maximum.accumulate(Z[:, 2]), [1.0]])
    # lifetimes[j] belongs to the cut with n - j clusters
    lifetimes = np.diff(heights)
    best = lifetimes.max()
    candidates = np.flatnonzero(lifetimes >= best - LIFETIME_TIE)
    n_clusters = n - int(candidates.min())
    if n_clusters == n:
        return ConsensusPartition(np.zeros(n, dtype=int), 1, [])
    labels = _cut(Z, n, n_clusters)
    return ConsensusPartition(labels, n_clusters, [])


def run_ensemble(X, params: EnsembleParams, fcm: FcmParams,
                 fuzzy: bool = False) -> ConsensusPartition:
    """Run ``params.runs`` FCM instances with random ``k`` and combine them.

    ``fcm`` supplies the metric and the remaining FCM settings; its ``k`` and
    ``seed`` are overridden for every run.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < params.k_max:
        raise ValueError(f"need at least k_max={params.k_max} points, got {n}")
    draws: list[int] = []
    results: list[FcmResult] = []
    for r in range(params.runs):
        k = draw_k(params, r)
        draws.append(k)
        results.append(fcm_run(X, replace(fcm, k=k, seed=run_seed(params, r))))
    degenerate = any(res.degenerate for res in results)
    if fuzzy:
        C = accumulate_fuzzy([res.memberships for res in results])
    else:
        C = accumulate([res.labels for res in results])
    part = consensus(C)
    part.draws = draws
    part.degenerate = degenerate
    logger.debug("ensemble %s: draws=%s -> k*=%d", fcm.metric, draws, part.k)
    return part
