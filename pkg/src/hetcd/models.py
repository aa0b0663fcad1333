"""Per-cluster statistical models and the distances built on them.

Optical pixels are modelled as multivariate Gaussian and compared with the
Mahalanobis distance. Single-polarisation SAR intensity is modelled as gamma
with a shared number of looks ``L`` and compared with the Hellinger distance.
Log-normal SAR lets the log-intensity be stacked onto the optical channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .raster import Raster


@dataclass(frozen=True)
class GaussianCluster:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class GammaCluster:
    """Gamma cluster with scale ``theta`` and shape ``looks``; mean is ``looks * theta``."""

    theta: float
    looks: float

    def __post_init__(self):
        if not self.theta > 0 or not self.looks > 0:
            raise ValueError("gamma scale and looks must be positive")

    @property
    def mean(self) -> float:
        return self.looks * self.theta


@dataclass(frozen=True)
class LogNormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("log-normal sigma must be positive")


def mahalanobis_sq(x, cluster: GaussianCluster, volume_normalized: bool = False) -> float:
    """Squared Mahalanobis distance of ``x`` from ``cluster``.

    With ``volume_normalized`` the result is scaled by ``det(cov) ** (1/n)``,
    which is the Gustafson-Kessel norm used by the adaptive FCM metric.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != cluster.mean.shape:
        raise ValueError(f"dimension mismatch: x has {x.size}, cluster has {cluster.mean.size}")
    return float(mahalanobis_sq_many(x[None, :], cluster.mean, cluster.covariance,
                                     volume_normalized)[0])


def mahalanobis_sq_many(X: np.ndarray, mean: np.ndarray, cov: np.ndarray,
                        volume_normalized: bool = False) -> np.ndarray:
    """Vectorised squared Mahalanobis distance of each row of ``X``."""
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("covariance is not positive definite") from None
    diff = X - mean
    z = solve_triangular(chol, diff.T, lower=True, check_finite=False)
    d2 = np.einsum("ij,ij->j", z, z)
    if volume_normalized:
        n = cov.shape[0]
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        d2 = d2 * math.exp(logdet / n)
    return np.maximum(d2, 0.0)


def bhattacharyya_gamma(theta_a, theta_b, looks):
    """Bhattacharyya coefficient of two gamma laws sharing the shape ``looks``."""
    theta_a = np.asarray(theta_a, dtype=float)
    theta_b = np.asarray(theta_b, dtype=float)
    ratio = 2.0 * np.sqrt(theta_a * theta_b) / (theta_a + theta_b)
    return np.minimum(ratio, 1.0) ** looks


def hellinger_gamma(theta_a: float, theta_b: float, looks: float) -> float:
    """Hellinger distance between Gamma(looks, theta_a) and Gamma(looks, theta_b)."""
    if not (theta_a > 0 and theta_b > 0 and looks > 0):
        raise ValueError("gamma parameters must be positive")
    bc = float(bhattacharyya_gamma(theta_a, theta_b, looks))
    return math.sqrt(max(0.0, 1.0 - bc))


def hellinger_sq_pixels(x: np.ndarray, theta: float, looks: float) -> np.ndarray:
    """Squared Hellinger distance from each pixel, embedded as Gamma(L, x/L), to a cluster."""
    return 1.0 - bhattacharyya_gamma(np.asarray(x, dtype=float) / looks, theta, looks)


def gamma_mean(cluster: GammaCluster) -> float:
    return cluster.mean


def lognormal_moments(params: LogNormalParams) -> tuple[float, float]:
    """Mean and variance of ``exp(Y)`` for ``Y ~ N(mu, sigma^2)``."""
    s2 = params.sigma ** 2
    mean = math.exp(params.mu + s2 / 2.0)
    variance = mean ** 2 * math.expm1(s2)
    return mean, variance


def default_log_offset(sar: np.ndarray) -> float:
    return max(1e-10 * float(np.max(sar)) if sar.size else 0.0, 1e-30)


def log_stack(optical: Raster, sar: Raster, offset: float | None = None) -> Raster:
    """Append ``log(sar + offset)`` to the optical bands, pixel by pixel."""
    if (optical.width, optical.height) != (sar.width, sar.height):
        raise ValueError(
            f"shape mismatch: optical {optical.width}x{optical.height}, sar {sar.width}x{sar.height}")
    if sar.bands != 1 or sar.band_roles[0] != "sar_intensity":
        raise ValueError("sar raster must have exactly one sar_intensity band")
    intensity = sar.band(0).astype(np.float64)
    if offset is None:
        offset = default_log_offset(intensity)
    if not offset > 0:
        raise ValueError("log offset must be positive")
    logged = np.log(intensity + offset)
    data = np.concatenate([optical.data.astype(np.float64), logged[:, :, None]], axis=2)
    roles = tuple("optical" for _ in range(optical.bands)) + ("stacked_log",)
    return Raster(data, roles)
