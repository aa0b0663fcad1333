"""Windowed change-detection pipeline.

The SAR image is despeckled once, then both images are cut into
non-overlapping windows. Each window is clustered three ways (optical,
filtered SAR, and the log-stacked pair), split/merge events are derived from
the three consensus partitions, and the per-window change masks are stitched
back together.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .change import ChangeEvent, EventFilter, analyze, change_map
from .config import ConfigError, PipelineConfig
from .ensemble import ConsensusPartition, mix64, run_ensemble, stacked_k_bounds
from .evaluation import ConfusionCounts, Metrics, confusion, metrics
from .models import default_log_offset
from .raster import Mask, Raster, label_raster, load_mask, load_raster, save_mask, save_raster
from .speckle import enhanced_lee, estimate_enl

logger = logging.getLogger(__name__)

VIEWS = ("opt", "sar", "st")


@dataclass(frozen=True)
class Window:
    id: int
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.y1 - self.y0, self.x1 - self.x0


def _segments(length: int, side: int) -> list[tuple[int, int]]:
    full, rest = divmod(length, side)
    bounds = [(i * side, (i + 1) * side) for i in range(full)]
    if rest == 0:
        return bounds
    if not bounds or 2 * rest >= side:
        bounds.append((full * side, length))
    else:
        bounds[-1] = (bounds[-1][0], length)
    return bounds


def tile(width: int, height: int, side: int) -> list[Window]:
    """Row-major non-overlapping windows covering the whole image.

    A trailing strip narrower than half a window is folded into its
    neighbour; a wider one becomes a window of its own.
    """
    if side < 10:
        raise ValueError(f"window side must be >= 10, got {side}")
    if 2 * width < side or 2 * height < side:
        return [Window(0, 0, 0, width, height)]
    windows = []
    for y0, y1 in _segments(height, side):
        for x0, x1 in _segments(width, side):
            windows.append(Window(len(windows), x0, y0, x1, y1))
    return windows


@dataclass
class WindowResult:
    window: Window
    partitions: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    mask: Optional[np.ndarray] = None
    degenerate: bool = False
    failed: bool = False


@dataclass(frozen=True)
class Calibration:
    """Image-wide quantities every window needs."""

    looks: float
    cluster_looks: float
    log_offset: float


def window_seed(global_seed: int, window_id: int) -> int:
    return mix64(global_seed, window_id)


def _zscore(X: np.ndarray) -> np.ndarray:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return (X - mean) / std


def _cluster_views(opt: np.ndarray, sar: np.ndarray, cfg: PipelineConfig,
                   calib: Calibration, seed: int) -> dict[str, ConsensusPartition]:
    n = opt.shape[0] * opt.shape[1]
    X_opt = opt.reshape(n, -1).astype(np.float64)
    sar_flat = sar.reshape(n).astype(np.float64)
    X_sar = np.maximum(sar_flat, calib.log_offset)[:, None]
    fuzzy = cfg.fuzzy_coassociation
    p_opt = run_ensemble(X_opt, cfg.ensemble_params(mix64(seed, 0)),
                         cfg.fcm_params("adaptive_mahalanobis"), fuzzy=fuzzy)
    p_sar = run_ensemble(X_sar, cfg.ensemble_params(mix64(seed, 1)),
                         cfg.fcm_params("hellinger_gamma", calib.cluster_looks), fuzzy=fuzzy)
    X_st = _zscore(np.column_stack([X_opt, np.log(sar_flat + calib.log_offset)]))
    bounds = stacked_k_bounds(p_opt.k, p_sar.k, cfg.stacked_cap)
    p_st = run_ensemble(X_st, cfg.ensemble_params(mix64(seed, 2), bounds),
                        cfg.fcm_params("adaptive_mahalanobis"), fuzzy=fuzzy)
    return {"opt": p_opt, "sar": p_sar, "st": p_st}


def process_window(opt: np.ndarray, sar: np.ndarray, window: Window, cfg: PipelineConfig,
                   calib: Calibration, event_filter: Optional[EventFilter] = None) -> WindowResult:
    """Cluster one window three ways and turn splits/merges into a change mask.

    ``opt`` is ``h x w x bands``, ``sar`` the filtered ``h x w`` intensity.
    Clustering failures are logged and give an all-false mask.
    """
    shape = window.shape
    result = WindowResult(window, mask=np.zeros(shape, dtype=bool))
    seed = window_seed(cfg.seed, window.id)
    try:
        parts = _cluster_views(opt, sar, cfg, calib, seed)
    except (ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("window %d: clustering failed (%s); no change reported", window.id, exc)
        result.failed = True
        return result
    result.partitions = parts
    if any(p.degenerate for p in parts.values()):
        logger.warning("window %d: degenerate input; no change reported", window.id)
        result.degenerate = True
        return result
    params = cfg.change_params()
    events = analyze(parts["opt"].labels, parts["sar"].labels, parts["st"].labels, params)
    if event_filter is not None:
        context = {"window": window,
                   "labels": {v: p.labels.reshape(shape) for v, p in parts.items()}}
        events = list(event_filter(events, context))
    for ev in events:
        ev.window = window.id
    result.events = events
    result.mask = change_map(events, shape, params).values
    return result


def calibrate(sar: Raster, cfg: PipelineConfig) -> tuple[Raster, Calibration]:
    """Despeckle the full SAR image and fix the image-wide looks and log offset."""
    looks = cfg.looks
    if looks is None:
        looks = estimate_enl(sar, _enl_tile(sar, cfg.enl_tile)).looks
        logger.info("estimated ENL of raw SAR: %.3f", looks)
    filtered = enhanced_lee(sar, cfg.speckle_params(looks))
    cluster_looks = looks if cfg.cluster_looks is None else cfg.cluster_looks
    offset = default_log_offset(filtered.band(0))
    return filtered, Calibration(float(looks), float(cluster_looks), offset)


def _enl_tile(raster: Raster, tile_side: int) -> int:
    # small scenes still need at least a handful of tiles
    return max(8, min(tile_side, min(raster.width, raster.height) // 3))


def _window_task(args):
    opt, sar, window, cfg, calib, event_filter = args
    return process_window(opt, sar, window, cfg, calib, event_filter)


def run_windows(optical: Raster, filtered: Raster, cfg: PipelineConfig, calib: Calibration,
                order: Optional[Sequence[int]] = None,
                event_filter: Optional[EventFilter] = None) -> list[WindowResult]:
    """Process all windows, in ``order`` if given, and return results sorted by id."""
    windows = tile(optical.width, optical.height, cfg.window_side)
    if order is not None:
        if sorted(order) != list(range(len(windows))):
            raise ValueError("order must be a permutation of the window ids")
        windows = [windows[i] for i in order]
    tasks = [(optical.data[w.y0:w.y1, w.x0:w.x1, :], filtered.band(0)[w.y0:w.y1, w.x0:w.x1],
              w, cfg, calib, event_filter) for w in windows]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_window_task, tasks))
    else:
        results = [_window_task(t) for t in tasks]
    return sorted(results, key=lambda r: r.window.id)


def stitch(results: Sequence[WindowResult], width: int, height: int) -> Mask:
    out = np.zeros((height, width), dtype=bool)
    covered = np.zeros((height, width), dtype=np.int32)
    for r in results:
        w = r.window
        out[w.y0:w.y1, w.x0:w.x1] = r.mask
        covered[w.y0:w.y1, w.x0:w.x1] += 1
    if not np.all(covered == 1):
        raise RuntimeError("windows do not tile the image exactly")
    return Mask(out)


def events_report(results: Sequence[WindowResult]) -> str:
    lines = [ev.to_line() for r in results for ev in r.events]
    return "".join(line + "\n" for line in lines)


@dataclass
class PipelineOutput:
    change_map: Mask
    results: list
    calibration: Calibration
    counts: Optional[ConfusionCounts] = None
    metrics: Optional[Metrics] = None

    @property
    def events(self) -> list[ChangeEvent]:
        return [ev for r in self.results for ev in r.events]


def load_inputs(cfg: PipelineConfig) -> tuple[Raster, Raster, Optional[Mask]]:
    cfg.check_paths()
    optical = load_raster(cfg.optical)
    sar = load_raster(cfg.sar)
    if sar.bands != 1 or sar.band_roles[0] != "sar_intensity":
        raise ConfigError("SAR raster must have a single sar_intensity band")
    if "sar_intensity" in optical.band_roles:
        raise ConfigError("optical raster must not contain SAR bands")
    if (optical.width, optical.height) != (sar.width, sar.height):
        raise ConfigError(f"optical {optical.width}x{optical.height} and SAR "
                          f"{sar.width}x{sar.height} are not co-registered")
    truth = None
    if cfg.truth is not None:
        truth = load_mask(cfg.truth, expected_shape=(sar.height, sar.width))
    return optical, sar, truth


def run_pipeline(cfg: PipelineConfig, order: Optional[Sequence[int]] = None,
                 event_filter: Optional[EventFilter] = None) -> PipelineOutput:
    """Run the full chain and write ``change_map.pgm``, ``events.txt``,
    per-window partition rasters and, with a truth mask, ``metrics.txt``."""
    optical, sar, truth = load_inputs(cfg)
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)

    filtered, calib = calibrate(sar, cfg)
    results = run_windows(optical, filtered, cfg, calib, order=order, event_filter=event_filter)
    cmap = stitch(results, optical.width, optical.height)

    save_mask(cmap, out_dir / "change_map.pgm")
    (out_dir / "events.txt").write_text(events_report(results), encoding="utf-8")
    for r in results:
        for view in VIEWS:
            part = r.partitions.get(view)
            labels = (np.zeros(r.window.shape, dtype=int) if part is None
                      else part.labels.reshape(r.window.shape))
            save_raster(label_raster(labels), out_dir / f"partition_{view}_{r.window.id}.hdr")
    output = PipelineOutput(cmap, results, calib)
    if truth is not None:
        output.counts = confusion(cmap, truth)
        output.metrics = metrics(output.counts)
        (out_dir / "metrics.txt").write_text(output.metrics.to_text(output.counts),
                                             encoding="utf-8")
    n_split = sum(ev.kind == "split" for ev in output.events)
    n_merge = sum(ev.kind == "merge" for ev in output.events)
    logger.info("%d windows, %d splits, %d merges", len(results), n_split, n_merge)
    return output
