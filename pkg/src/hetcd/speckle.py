"""Speckle statistics and the enhanced Lee despeckling filter."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .raster import Raster

logger = logging.getLogger(__name__)

ENL_MIN = 1.0
ENL_MAX = 100.0


@dataclass(frozen=True)
class SpeckleParams:
    looks: float
    window_side: int = 7
    damping: float = 1.0

    def __post_init__(self):
        if self.window_side < 3 or self.window_side % 2 == 0:
            raise ValueError(f"window_side must be odd and >= 3, got {self.window_side}")
        if not self.looks > 0:
            raise ValueError(f"looks must be positive, got {self.looks}")
        if not self.damping > 0:
            raise ValueError(f"damping must be positive, got {self.damping}")


@dataclass(frozen=True)
class EnlEstimate:
    looks: float
    degenerate: bool = False


def _sar_band(raster: Raster) -> np.ndarray:
    if raster.bands != 1 or raster.band_roles[0] != "sar_intensity":
        raise ValueError("expected a single sar_intensity band")
    return raster.band(0).astype(np.float64)


def estimate_enl(raster: Raster, tile_side: int = 64) -> EnlEstimate:
    """Estimate the equivalent number of looks from the most homogeneous tiles.

    The image is cut into non-overlapping ``tile_side`` squares; the decile with
    the lowest coefficient of variation is taken as homogeneous and its mean
    ``mean**2 / variance`` is returned, clamped to ``[1, 100]``.
    """
    if tile_side < 8:
        raise ValueError("tile_side must be at least 8")
    img = _sar_band(raster)
    h, w = img.shape
    ny, nx = h // tile_side, w // tile_side
    if ny == 0 or nx == 0:
        raise ValueError(f"image {w}x{h} is smaller than one {tile_side}px tile")
    tiles = img[:ny * tile_side, :nx * tile_side]
    tiles = tiles.reshape(ny, tile_side, nx, tile_side).transpose(0, 2, 1, 3).reshape(ny * nx, -1)
    mean = tiles.mean(axis=1)
    var = tiles.var(axis=1)
    usable = mean > 0
    if not np.any(usable & (var > 0)):
        logger.warning("zero-variance SAR image; ENL clamped to %s", ENL_MAX)
        return EnlEstimate(ENL_MAX, degenerate=True)
    cv = np.full(mean.shape, np.inf)
    cv[usable] = np.sqrt(var[usable]) / mean[usable]
    order = np.argsort(cv, kind="stable")
    n_keep = max(1, int(math.ceil(0.1 * order.size)))
    keep = order[:n_keep]
    with np.errstate(divide="ignore"):
        enl = np.where(var[keep] > 0, mean[keep] ** 2 / var[keep], np.inf)
    value = float(np.mean(enl))
    degenerate = not np.isfinite(value)
    if degenerate:
        logger.warning("homogeneous tiles have zero variance; ENL clamped to %s", ENL_MAX)
    return EnlEstimate(float(np.clip(value, ENL_MIN, ENL_MAX)), degenerate=degenerate)


def local_stats(img: np.ndarray, side: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std over a ``side x side`` window clipped to the image."""
    r = side // 2
    h, w = img.shape
    padded = np.zeros((h + 1, w + 1))
    padded_sq = np.zeros((h + 1, w + 1))
    padded[1:, 1:] = np.cumsum(np.cumsum(img, axis=0), axis=1)
    padded_sq[1:, 1:] = np.cumsum(np.cumsum(img * img, axis=0), axis=1)
    rows = np.arange(h)
    cols = np.arange(w)
    y0, y1 = np.clip(rows - r, 0, h), np.clip(rows + r + 1, 0, h)
    x0, x1 = np.clip(cols - r, 0, w), np.clip(cols + r + 1, 0, w)

    def box(table):
        return (table[y1][:, x1] - table[y0][:, x1] - table[y1][:, x0] + table[y0][:, x0])

    count = np.outer(y1 - y0, x1 - x0).astype(np.float64)
    mean = box(padded) / count
    var = box(padded_sq) / count - mean * mean
    # cancellation in the running sums can push tiny variances below zero
    return mean, np.sqrt(np.maximum(var, 0.0))


def lee_weight(ci, cu: float, cmax: float, damping: float):
    """Weight given to the local mean in the heterogeneous regime."""
    return np.exp(-damping * (ci - cu) / (cmax - ci))


def enhanced_lee(raster: Raster, params: SpeckleParams) -> Raster:
    """Enhanced Lee filter.

    Homogeneous pixels (``Ci <= Cu``) become the local mean, point targets
    (``Ci >= Cmax``) pass through untouched, and everything in between is
    ``W * mean + (1 - W) * x`` with ``W = exp(-K (Ci - Cu) / (Cmax - Ci))``.
    """
    img = _sar_band(raster)
    h, w = img.shape
    if params.window_side > min(h, w):
        raise ValueError(f"window {params.window_side} larger than image {w}x{h}")
    mean, std = local_stats(img, params.window_side)
    cu = 1.0 / math.sqrt(params.looks)
    cmax = math.sqrt(1.0 + 2.0 / params.looks)
    with np.errstate(divide="ignore", invalid="ignore"):
        ci = np.where(mean > 0, std / mean, 0.0)
    out = img.copy()
    homogeneous = ci <= cu
    middle = (ci > cu) & (ci < cmax)
    out[homogeneous] = mean[homogeneous]
    wgt = lee_weight(ci[middle], cu, cmax, params.damping)
    out[middle] = wgt * mean[middle] + (1.0 - wgt) * img[middle]
    result = out.astype(np.float32)
    point = ci >= cmax
    result[point] = raster.band(0)[point]
    return Raster(result, ("sar_intensity",))
