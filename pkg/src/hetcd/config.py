"""Pipeline configuration: ``key=value`` files with ``#`` comments, overridable by flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .change import FLAG_MODES, ChangeParams
from .ensemble import EnsembleParams
from .fcm import COVARIANCE_WEIGHTS, FcmParams
from .speckle import SpeckleParams


class ConfigError(ValueError):
    pass


def read_key_values(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _optional_path(text: str) -> Optional[str]:
    return text.strip() or None


@dataclass(frozen=True)
class PipelineConfig:
    optical: Optional[str] = None
    sar: Optional[str] = None
    truth: Optional[str] = None
    output: Optional[str] = None
    window_side: int = 50
    # speckle filter; looks=None estimates the ENL from the raw SAR image
    looks: Optional[float] = None
    speckle_window: int = 7
    damping: float = 1.0
    enl_tile: int = 64
    # looks for the Hellinger metric; None reuses the speckle-filter looks
    cluster_looks: Optional[float] = None
    fuzzifier: float = 2.0
    max_iter: int = 100
    tol: float = 1e-5
    cov_eps: float = 1e-6
    covariance_weights: str = "membership"
    runs: int = 20
    k_min: int = 4
    k_max: int = 7
    stacked_cap: int = 30
    fuzzy_coassociation: bool = False
    tau_split: float = 0.2
    tau_merge: float = 0.2
    flag_mode: str = "minority"
    smooth: bool = True
    strict_split: bool = False
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.window_side < 10:
            raise ConfigError(f"window_side must be >= 10, got {self.window_side}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.enl_tile < 8:
            raise ConfigError("enl_tile must be >= 8")
        if self.stacked_cap < 2:
            raise ConfigError("stacked_cap must be >= 2")
        if self.covariance_weights not in COVARIANCE_WEIGHTS:
            raise ConfigError(f"covariance_weights must be one of {COVARIANCE_WEIGHTS}")
        if self.flag_mode not in FLAG_MODES:
            raise ConfigError(f"flag_mode must be one of {FLAG_MODES}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        try:
            self.change_params()
            self.ensemble_params(0)
            self.fcm_params("euclidean")
            if self.looks is not None:
                self.speckle_params(self.looks)
            else:
                self.speckle_params(1.0)
            if self.cluster_looks is not None and not self.cluster_looks > 0:
                raise ValueError("cluster_looks must be positive")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def speckle_params(self, looks: float) -> SpeckleParams:
        return SpeckleParams(looks=looks, window_side=self.speckle_window, damping=self.damping)

    def fcm_params(self, metric: str, looks: float = 1.0) -> FcmParams:
        # k and seed are placeholders; the ensemble sets them per run
        return FcmParams(k=2, m=self.fuzzifier, max_iter=self.max_iter, tol=self.tol,
                         metric=metric, cov_eps=self.cov_eps, looks=looks,
                         covariance_weights=self.covariance_weights)

    def ensemble_params(self, seed: int, k_bounds: Optional[tuple[int, int]] = None) -> EnsembleParams:
        k_min, k_max = k_bounds or (self.k_min, self.k_max)
        return EnsembleParams(k_min=k_min, k_max=k_max, runs=self.runs, seed=seed)

    def change_params(self) -> ChangeParams:
        return ChangeParams(tau_split=self.tau_split, tau_merge=self.tau_merge,
                            flag_mode=self.flag_mode, smooth=self.smooth,
                            strict_split=self.strict_split)

    def check_paths(self) -> None:
        """Fail fast on missing inputs or output location."""
        for name in ("optical", "sar", "output"):
            if getattr(self, name) is None:
                raise ConfigError(f"missing required path {name!r}")
        for name in ("optical", "sar", "truth"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{name} file {value!r} does not exist")


_CONVERTERS = {
    "optical": _optional_path, "sar": _optional_path, "truth": _optional_path,
    "output": _optional_path,
    "looks": _optional_float, "cluster_looks": _optional_float,
    "damping": float, "fuzzifier": float, "tol": float, "cov_eps": float,
    "tau_split": float, "tau_merge": float,
    "fuzzy_coassociation": _bool, "smooth": _bool, "strict_split": _bool,
    "covariance_weights": str, "flag_mode": str,
}
CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(PipelineConfig))


def _convert(key: str, value):
    if not isinstance(value, str):
        return value
    converter = _CONVERTERS.get(key, int)
    try:
        return converter(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def parse_config(path=None, overrides: Optional[Mapping[str, object]] = None) -> PipelineConfig:
    """Build a config from an optional file plus flag overrides (flags win).

    Override keys may use ``kebab-case`` or ``snake_case``; ``None`` values are
    ignored so that unset CLI flags fall through to the file.
    """
    values: dict[str, object] = {}
    if path is not None:
        values.update(read_key_values(Path(path).read_text(encoding="utf-8")))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key.replace("-", "_")] = value
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return PipelineConfig(**{k: _convert(k, v) for k, v in values.items()})


def config_to_text(cfg: PipelineConfig) -> str:
    lines = []
    for key in CONFIG_KEYS:
        value = getattr(cfg, key)
        if value is None:
            value = "auto" if key in ("looks", "cluster_looks") else ""
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
