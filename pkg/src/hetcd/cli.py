"""Command-line interface: ``hetcd {run,filter,cluster,detect,evaluate,synth}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .change import analyze, change_map
from .config import CONFIG_KEYS, ConfigError, PipelineConfig, parse_config
from .evaluation import confusion, metrics
from .pipeline import Window, _cluster_views, calibrate, events_report, load_inputs, tile, WindowResult
from .raster import RasterFormatError, label_raster, load_mask, load_raster, save_mask, save_raster
from .speckle import SpeckleParams, enhanced_lee, estimate_enl
from .synth import PLANTED_SCENE, generate_pair, load_scene, parse_scene

logger = logging.getLogger("hetcd")

_FLAG_HELP = {
    "optical": "optical raster header (.hdr)",
    "sar": "SAR intensity raster header (.hdr)",
    "truth": "reference change mask (P5 PGM)",
    "output": "output directory",
    "looks": "number of looks for the speckle filter ('auto' to estimate)",
    "cluster_looks": "looks for the Hellinger metric ('auto' to reuse the filter looks)",
    "flag_mode": "pixels flagged for a split/merge: minority or all",
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value configuration file")
    for key in CONFIG_KEYS:
        parser.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                            metavar=key.upper(), help=_FLAG_HELP.get(key))


def _config_from_args(args) -> PipelineConfig:
    overrides = {key: getattr(args, key) for key in CONFIG_KEYS}
    return parse_config(args.config, overrides)


def cmd_run(args) -> int:
    from .pipeline import run_pipeline

    cfg = _config_from_args(args)
    out = run_pipeline(cfg)
    n_split = sum(ev.kind == "split" for ev in out.events)
    n_merge = sum(ev.kind == "merge" for ev in out.events)
    print(f"windows={len(out.results)} splits={n_split} merges={n_merge} "
          f"changed_pixels={int(out.change_map.values.sum())}")
    if out.metrics is not None:
        sys.stdout.write(out.metrics.to_text(out.counts))
    return 0


def cmd_filter(args) -> int:
    sar = load_raster(args.input)
    looks = args.looks
    if looks is None:
        est = estimate_enl(sar, args.enl_tile)
        looks = est.looks
        print(f"estimated_looks={looks:.4f}" + (" degenerate" if est.degenerate else ""))
    filtered = enhanced_lee(sar, SpeckleParams(looks=looks, window_side=args.window,
                                               damping=args.damping))
    save_raster(filtered, args.output)
    return 0


def _pick_window(cfg: PipelineConfig, width: int, height: int, window_id: int) -> Window:
    windows = tile(width, height, cfg.window_side)
    if not 0 <= window_id < len(windows):
        raise ConfigError(f"window id {window_id} out of range (0..{len(windows) - 1})")
    return windows[window_id]


def cmd_cluster(args) -> int:
    from .pipeline import window_seed

    cfg = _config_from_args(args)
    optical, sar, _ = load_inputs(cfg)
    filtered, calib = calibrate(sar, cfg)
    w = _pick_window(cfg, optical.width, optical.height, args.window_id)
    opt = optical.data[w.y0:w.y1, w.x0:w.x1, :]
    sar_win = filtered.band(0)[w.y0:w.y1, w.x0:w.x1]
    parts = _cluster_views(opt, sar_win, cfg, calib, window_seed(cfg.seed, w.id))
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    views = parts if args.view == "all" else {args.view: parts[args.view]}
    for view, part in views.items():
        save_raster(label_raster(part.labels.reshape(w.shape)),
                    out_dir / f"partition_{view}_{w.id}.hdr")
        print(f"window={w.id} view={view} k={part.k} draws={','.join(map(str, part.draws))}")
    return 0


def cmd_detect(args) -> int:
    cfg = parse_config(args.config, {k: getattr(args, k, None) for k in
                                     ("tau_split", "tau_merge", "flag_mode", "smooth",
                                      "strict_split")})
    grids = {}
    for view in ("opt", "sar", "st"):
        raster = load_raster(Path(args.partitions) / f"partition_{view}_{args.window_id}.hdr")
        grids[view] = np.rint(raster.band(0)).astype(int)
    shape = grids["opt"].shape
    if any(g.shape != shape for g in grids.values()):
        raise ConfigError("partition rasters differ in size")
    params = cfg.change_params()
    events = analyze(grids["opt"], grids["sar"], grids["st"], params)
    for ev in events:
        ev.window = args.window_id
    report = events_report([WindowResult(Window(args.window_id, 0, 0, shape[1], shape[0]),
                                         events=events)])
    sys.stdout.write(report)
    if args.mask:
        save_mask(change_map(events, shape, params), args.mask)
    return 0


def cmd_evaluate(args) -> int:
    pred = load_mask(args.pred)
    truth = load_mask(args.truth, expected_shape=pred.shape)
    counts = confusion(pred, truth)
    text = metrics(counts).to_text(counts)
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    if args.scene:
        spec = load_scene(args.scene)
    else:
        spec = parse_scene(PLANTED_SCENE)
    if args.seed is not None:
        spec.seed = args.seed
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    optical, sar, truth = generate_pair(spec)
    save_raster(optical, out_dir / "optical.hdr")
    save_raster(sar, out_dir / "sar.hdr")
    save_mask(truth, out_dir / "truth.pgm")
    if args.write_scene:
        text = Path(args.scene).read_text(encoding="utf-8") if args.scene else PLANTED_SCENE
        (out_dir / "scene.cfg").write_text(text, encoding="utf-8")
    print(f"wrote {spec.width}x{spec.height} scene to {out_dir} "
          f"({int(truth.values.sum())} changed pixels)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetcd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline: filter, tile, cluster, detect, evaluate")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("filter", help="enhanced Lee filter on a SAR raster")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--looks", type=float, default=None, help="default: estimate the ENL")
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--damping", type=float, default=1.0)
    p.add_argument("--enl-tile", type=int, default=64)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("cluster", help="ensemble-cluster one window (debugging)")
    _add_config_flags(p)
    p.add_argument("--window-id", type=int, required=True)
    p.add_argument("--view", choices=("opt", "sar", "st", "all"), default="all")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("detect", help="split/merge detection from saved partition rasters")
    p.add_argument("partitions", help="directory holding partition_{opt,sar,st}_<id>.hdr")
    p.add_argument("--window-id", type=int, required=True)
    p.add_argument("--config")
    p.add_argument("--tau-split", dest="tau_split")
    p.add_argument("--tau-merge", dest="tau_merge")
    p.add_argument("--flag-mode", dest="flag_mode")
    p.add_argument("--smooth", dest="smooth")
    p.add_argument("--strict-split", dest="strict_split")
    p.add_argument("--mask", help="write the window change mask here (P5 PGM)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score a change mask against ground truth")
    p.add_argument("pred")
    p.add_argument("truth")
    p.add_argument("--output", help="also write the metrics block to this file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic optical/SAR pair with planted changes")
    p.add_argument("out_dir")
    p.add_argument("--scene", help="scene file; default is the built-in planted scene")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--write-scene", action="store_true", help="copy the scene file to out_dir")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RasterFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
