"""Fuzzy C-means with a distribution-aware distance.

Three metrics are supported:

``euclidean``
    plain squared Euclidean distance.
``adaptive_mahalanobis``
    per-cluster Mahalanobis distance whose covariance is re-estimated from the
    partition matrix after every iteration, with Gustafson-Kessel volume
    normalisation so that clusters cannot win by shrinking.
``hellinger_gamma``
    squared Hellinger distance between the gamma law of a cluster and the
    pixel embedded as ``Gamma(L, x / L)``. One-dimensional positive data only.

The model update uses the textbook formulas, which are not always the exact
minimiser of the fuzzy objective (the Hellinger center and the
membership-weighted covariance are not). Each cluster's candidate update is
therefore accepted only if it does not raise that cluster's share of the
objective; otherwise it is backtracked toward the previous parameters. This
keeps the objective trace non-increasing for every metric.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .models import hellinger_sq_pixels

logger = logging.getLogger(__name__)

METRICS = ("euclidean", "adaptive_mahalanobis", "hellinger_gamma")
COVARIANCE_WEIGHTS = ("membership", "fuzzified")
EMPTY_CLUSTER_MASS = 1e-12
BACKTRACK_STEPS = 4


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class FcmParams:
    """Settings for a single fuzzy C-means run.

    ``covariance_weights="membership"`` weights the covariance update by the
    raw memberships; ``"fuzzified"`` uses ``membership ** m`` like the centers.
    ``looks`` is only read by the ``hellinger_gamma`` metric.
    """

    k: int
    m: float = 2.0
    max_iter: int = 100
    tol: float = 1e-5
    seed: int = 0
    metric: str = "euclidean"
    cov_eps: float = 1e-6
    looks: float = 1.0
    covariance_weights: str = "membership"
    volume_normalized: bool = True

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if not self.m > 1:
            raise ValueError(f"fuzzifier m must be > 1, got {self.m}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not self.cov_eps > 0:
            raise ValueError("cov_eps must be positive")
        if not self.looks > 0:
            raise ValueError("looks must be positive")
        if self.covariance_weights not in COVARIANCE_WEIGHTS:
            raise ValueError(f"unknown covariance weighting {self.covariance_weights!r}")


@dataclass
class FcmModel:
    """Cluster parameters.

    ``centers`` is ``k x d``. Under the gamma metric it holds each cluster's
    mean intensity, and ``scales`` gives the gamma scales ``mean / L``.
    ``covariances`` is ``k x d x d`` for the Mahalanobis metric, else ``None``.
    """

    centers: np.ndarray
    covariances: Optional[np.ndarray] = None
    looks: float = 1.0

    @property
    def scales(self) -> np.ndarray:
        return self.centers[:, 0] / self.looks

    def copy(self) -> "FcmModel":
        covs = None if self.covariances is None else self.covariances.copy()
        return FcmModel(self.centers.copy(), covs, self.looks)


@dataclass
class FcmResult:
    memberships: np.ndarray
    model: FcmModel
    labels: np.ndarray
    objective: np.ndarray
    n_iter: int
    converged: bool
    degenerate: bool = False
    reseeded: list = field(default_factory=list)

    @property
    def centers(self) -> np.ndarray:
        return self.model.centers

    @property
    def covariances(self) -> Optional[np.ndarray]:
        return self.model.covariances


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"data must be N x d, got shape {X.shape}")
    return X


def hard_labels(U: np.ndarray) -> np.ndarray:
    """Argmax over clusters; ``np.argmax`` already resolves ties to the lowest index."""
    return np.argmax(U, axis=0)


def update_memberships(D: np.ndarray, m: float) -> np.ndarray:
    """Standard FCM membership update from a ``k x N`` squared-distance matrix.

    A column with a zero distance gives full membership to the first cluster
    at zero distance.
    """
    D = np.asarray(D, dtype=np.float64)
    if np.any(D < 0):
        raise ValueError("distances must be non-negative")
    k, n = D.shape
    U = np.empty_like(D)
    zero = D <= 0.0
    has_zero = zero.any(axis=0)
    if np.any(has_zero):
        first = np.argmax(zero[:, has_zero], axis=0)
        block = np.zeros((k, first.size))
        block[first, np.arange(first.size)] = 1.0
        U[:, has_zero] = block
    rest = ~has_zero
    if np.any(rest):
        Dr = D[:, rest]
        # (D_min / D) ** p lies in (0, 1], which avoids overflow for tiny distances
        ratio = (Dr.min(axis=0) / Dr) ** (1.0 / (m - 1.0))
        U[:, rest] = ratio / ratio.sum(axis=0)
    return U


def distance_matrix(X: np.ndarray, model: FcmModel, params: FcmParams,
                    clusters: Optional[np.ndarray] = None) -> np.ndarray:
    """Squared distance of every point to the selected clusters, ``len(clusters) x N``."""
    X = _as_2d(X)
    idx = np.arange(model.centers.shape[0]) if clusters is None else np.asarray(clusters)
    centers = model.centers[idx]
    if params.metric == "hellinger_gamma":
        scales = centers[:, 0] / model.looks
        return hellinger_sq_pixels(X[None, :, 0], scales[:, None], model.looks)
    diff = X[None, :, :] - centers[:, None, :]
    if params.metric == "euclidean":
        return np.einsum("knd,knd->kn", diff, diff)
    covs = model.covariances[idx]
    inv = np.linalg.inv(covs)
    d2 = np.einsum("knd,knd->kn", diff @ inv, diff)
    if params.volume_normalized:
        sign, logdet = np.linalg.slogdet(covs)
        if np.any(sign <= 0):
            raise np.linalg.LinAlgError("covariance lost positive definiteness")
        d2 = d2 * np.exp(logdet / X.shape[1])[:, None]
    return np.maximum(d2, 0.0)


def fcm_objective(X, U: np.ndarray, model: FcmModel, params: FcmParams) -> float:
    """Sum over clusters and points of ``membership ** m * distance ** 2``."""
    D = distance_matrix(X, model, params)
    return float(np.sum(U ** params.m * D))


def regularize(cov: np.ndarray, eps: float) -> np.ndarray:
    d = cov.shape[-1]
    cov = 0.5 * (cov + cov.T)
    return cov + (eps * np.trace(cov) / d + 1e-12) * np.eye(d)


def update_model(X, U: np.ndarray, params: FcmParams,
                 reseeded: Optional[list] = None) -> FcmModel:
    """Centers from ``membership ** m`` weighted means; covariances from the
    membership-weighted scatter around those centers, then regularised.

    A cluster whose total membership falls below ``1e-12`` is re-seeded at the
    point that currently has the lowest maximum membership. Its index is
    appended to ``reseeded`` when a list is passed.
    """
    X = _as_2d(X)
    n, d = X.shape
    k = U.shape[0]
    W = U ** params.m
    mass = W.sum(axis=1)
    raw_mass = U.sum(axis=1)
    centers = np.empty((k, d))
    empty = (mass < EMPTY_CLUSTER_MASS) | (raw_mass < EMPTY_CLUSTER_MASS)
    live = ~empty
    centers[live] = (W[live] @ X) / mass[live, None]
    if np.any(empty):
        order = np.argsort(U.max(axis=0), kind="stable")
        for slot, i in enumerate(np.flatnonzero(empty)):
            centers[i] = X[order[slot % n]]
            if reseeded is not None:
                reseeded.append(int(i))
    model = FcmModel(centers, None, params.looks)
    if params.metric != "adaptive_mahalanobis":
        return model
    cov_w = U if params.covariance_weights == "membership" else W
    covs = np.empty((k, d, d))
    fallback = np.cov(X, rowvar=False, bias=True).reshape(d, d) if np.any(empty) else None
    for i in range(k):
        if empty[i]:
            covs[i] = regularize(fallback, params.cov_eps)
            continue
        diff = X - centers[i]
        scatter = (cov_w[i][:, None] * diff).T @ diff
        covs[i] = regularize(scatter / cov_w[i].sum(), params.cov_eps)
    model.covariances = covs
    return model


def _interpolate(old: FcmModel, new: FcmModel, i: int, t: float, metric: str) -> FcmModel:
    trial = old.copy()
    if metric == "hellinger_gamma":
        # geometric path keeps the scale positive
        trial.centers[i] = old.centers[i] ** (1 - t) * new.centers[i] ** t
    else:
        trial.centers[i] = (1 - t) * old.centers[i] + t * new.centers[i]
    if old.covariances is not None:
        trial.covariances[i] = (1 - t) * old.covariances[i] + t * new.covariances[i]
    return trial


def _accept_update(X, W: np.ndarray, D_old: np.ndarray, old: FcmModel, cand: FcmModel,
                   params: FcmParams, forced: set) -> tuple[FcmModel, np.ndarray]:
    """Per-cluster monotone acceptance of the candidate model."""
    D_cand = distance_matrix(X, cand, params)
    J_old = np.sum(W * D_old, axis=1)
    J_cand = np.sum(W * D_cand, axis=1)
    model = cand.copy()
    D = D_cand.copy()
    for i in np.flatnonzero(J_cand > J_old):
        if i in forced:
            continue
        accepted = False
        t = 1.0
        for _ in range(BACKTRACK_STEPS):
            t *= 0.5
            trial = _interpolate(old, cand, i, t, params.metric)
            d_i = distance_matrix(X, trial, params, clusters=[i])[0]
            if np.sum(W[i] * d_i) <= J_old[i]:
                accepted = True
                break
        if not accepted:
            trial, d_i = old, D_old[i]
        model.centers[i] = trial.centers[i]
        if model.covariances is not None:
            model.covariances[i] = trial.covariances[i]
        D[i] = d_i
    return model, D


def initial_model(X: np.ndarray, params: FcmParams,
                  init_indices: Optional[np.ndarray] = None) -> FcmModel:
    n, d = X.shape
    if init_indices is None:
        rng = np.random.default_rng(params.seed)
        init_indices = rng.choice(n, size=params.k, replace=False)
    init_indices = np.asarray(init_indices)
    if init_indices.shape != (params.k,) or len(set(init_indices.tolist())) != params.k:
        raise ValueError("init_indices must be k distinct point indices")
    centers = X[init_indices].copy()
    covs = np.tile(np.eye(d), (params.k, 1, 1)) if params.metric == "adaptive_mahalanobis" else None
    return FcmModel(centers, covs, params.looks)


def _validate(X: np.ndarray, params: FcmParams) -> None:
    n, d = X.shape
    if n < params.k:
        raise ValueError(f"need at least k={params.k} points, got {n}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains NaN or Inf")
    if params.metric == "hellinger_gamma":
        if d != 1:
            raise ValueError("hellinger_gamma metric needs one-dimensional data")
        if np.any(X <= 0):
            raise ValueError("hellinger_gamma metric needs strictly positive data")


Callback = Callable[[int, np.ndarray, FcmModel], None]


def fcm_run(X, params: FcmParams, init_indices: Optional[np.ndarray] = None,
            callback: Optional[Callback] = None) -> FcmResult:
    """Run fuzzy C-means to convergence.

    Stops when no membership moves by ``tol`` or more, or after ``max_iter``
    iterations. ``callback(iteration, U, model)`` is invoked after every
    iteration. All-identical data short-circuits to a flagged result with
    uniform memberships.
    """
    X = _as_2d(X)
    _validate(X, params)
    n, d = X.shape
    k = params.k
    if np.all(X == X[0]):
        logger.debug("all %d points identical; returning degenerate partition", n)
        U = np.full((k, n), 1.0 / k)
        model = initial_model(X, params, np.arange(k))
        return FcmResult(U, model, np.zeros(n, dtype=int), np.array([0.0]), 0, True,
                         degenerate=True)

    model = initial_model(X, params, init_indices)
    D = distance_matrix(X, model, params)
    U = update_memberships(D, params.m)
    trace = []
    reseeded: list = []
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        W = U ** params.m
        fresh: list = []
        cand = update_model(X, U, params, reseeded=fresh)
        reseeded.extend(fresh)
        model, D = _accept_update(X, W, D, model, cand, params, set(fresh))
        trace.append(float(np.sum(W * D)))
        if callback is not None:
            callback(it, U, model)
        U_new = update_memberships(D, params.m)
        delta = float(np.max(np.abs(U_new - U)))
        U = U_new
        if delta < params.tol:
            converged = True
            break
    return FcmResult(U, model, hard_labels(U), np.asarray(trace), it, converged,
                     reseeded=reseeded)
