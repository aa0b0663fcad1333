"""Synthetic co-registered optical/SAR pairs with planted changes.

Optical pixels are drawn from the Gaussian of their class at t1, SAR
intensities from ``Gamma(L, mean / L)`` of their class at t2. Changes are
axis-aligned rectangles that move pixels to a new class at t2, so the truth
mask is exact.

Scene files use the ``key=value`` dialect with numbered groups::

    width=200
    height=200
    looks=5
    seed=7
    background=0
    class.0.mean=40,60,50
    class.0.std=3,3,3          # or class.0.cov=9,0,0;0,9,0;0,0,9
    class.0.sar=0.2
    region.0.rect=100,0,200,200   # x0,y0,x1,y1, half-open, painted in order
    region.0.class=1
    change.0.rect=0,20,100,40
    change.0.class=2
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, read_key_values
from .raster import Mask, Raster


@dataclass(frozen=True)
class SceneClass:
    optical_mean: np.ndarray
    optical_cov: np.ndarray
    sar_mean: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.optical_mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.optical_cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("optical covariance does not match the mean's dimension")
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() <= 0:
            raise ValueError("optical covariance must be symmetric positive definite")
        if not self.sar_mean > 0:
            raise ValueError("SAR backscatter mean must be positive")
        object.__setattr__(self, "optical_mean", mean)
        object.__setattr__(self, "optical_cov", cov)


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)


@dataclass
class SceneSpec:
    width: int
    height: int
    classes: list
    class_map: np.ndarray
    changes: list = field(default_factory=list)
    looks: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be positive")
        if not self.classes:
            raise ValueError("scene needs at least one class")
        dims = {c.optical_mean.size for c in self.classes}
        if len(dims) != 1:
            raise ValueError("all classes need the same number of optical bands")
        self.class_map = np.asarray(self.class_map, dtype=int)
        if self.class_map.shape != (self.height, self.width):
            raise ValueError("class map does not match the scene dimensions")
        n = len(self.classes)
        if self.class_map.min() < 0 or self.class_map.max() >= n:
            raise ValueError("class map references an unknown class")
        for rect, cls in self.changes:
            if not (0 <= rect.x0 < rect.x1 <= self.width and 0 <= rect.y0 < rect.y1 <= self.height):
                raise ValueError(f"change rectangle {rect} is outside the scene")
            if not 0 <= cls < n:
                raise ValueError(f"change references unknown class {cls}")
        if not self.looks > 0:
            raise ValueError("looks must be positive")

    @property
    def bands(self) -> int:
        return self.classes[0].optical_mean.size

    def class_map_after(self) -> np.ndarray:
        after = self.class_map.copy()
        for rect, cls in self.changes:
            after[rect.slices] = cls
        return after


def generate_pair(spec: SceneSpec) -> tuple[Raster, Raster, Mask]:
    rng = np.random.default_rng(spec.seed)
    before = spec.class_map
    after = spec.class_map_after()
    h, w, n = spec.height, spec.width, spec.bands
    optical = np.empty((h, w, n))
    noise = rng.standard_normal((h, w, n))
    for i, cls in enumerate(spec.classes):
        sel = before == i
        chol = np.linalg.cholesky(cls.optical_cov)
        optical[sel] = cls.optical_mean + noise[sel] @ chol.T
    sar_mean = np.array([c.sar_mean for c in spec.classes])[after]
    sar = rng.gamma(spec.looks, sar_mean / spec.looks)
    truth = Mask(before != after)
    return (Raster(optical, ("optical",) * n),
            Raster(sar, ("sar_intensity",)),
            truth)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str, count: int, key: str) -> list[int]:
    values = [int(v) for v in text.split(",")]
    if len(values) != count:
        raise ConfigError(f"{key}: expected {count} integers")
    return values


_GROUP = re.compile(r"^(class|region|change)\.(\d+)\.(\w+)$")
_GROUP_FIELDS = {
    "class": {"mean", "std", "cov", "sar"},
    "region": {"rect", "class"},
    "change": {"rect", "class"},
}


def parse_scene(text: str) -> SceneSpec:
    values = read_key_values(text)
    top = {"width", "height", "looks", "seed", "background"}
    groups: dict[str, dict[int, dict[str, str]]] = {"class": {}, "region": {}, "change": {}}
    scalars = {}
    for key, value in values.items():
        match = _GROUP.match(key)
        if match:
            kind, idx, attr = match.group(1), int(match.group(2)), match.group(3)
            if attr not in _GROUP_FIELDS[kind]:
                raise ConfigError(f"unknown key {key!r}")
            groups[kind].setdefault(idx, {})[attr] = value
        elif key in top:
            scalars[key] = value
        else:
            raise ConfigError(f"unknown key {key!r}")
    for key in ("width", "height"):
        if key not in scalars:
            raise ConfigError(f"scene is missing {key!r}")
    try:
        width, height = int(scalars["width"]), int(scalars["height"])
        classes = []
        for idx in sorted(groups["class"]):
            g = groups["class"][idx]
            if idx != len(classes):
                raise ConfigError("class indices must be contiguous from 0")
            mean = np.array(_floats(g["mean"]))
            if "cov" in g:
                cov = np.array([_floats(row) for row in g["cov"].split(";")])
            else:
                std = np.array(_floats(g.get("std", ",".join(["1"] * mean.size))))
                cov = np.diag(std ** 2)
            classes.append(SceneClass(mean, cov, float(g["sar"])))
        class_map = np.full((height, width), int(scalars.get("background", 0)))
        for idx in sorted(groups["region"]):
            g = groups["region"][idx]
            rect = Rect(*_ints(g["rect"], 4, f"region.{idx}.rect"))
            class_map[rect.slices] = int(g["class"])
        changes = []
        for idx in sorted(groups["change"]):
            g = groups["change"][idx]
            changes.append((Rect(*_ints(g["rect"], 4, f"change.{idx}.rect")), int(g["class"])))
        return SceneSpec(width, height, classes, class_map, changes,
                         looks=float(scalars.get("looks", 5.0)),
                         seed=int(scalars.get("seed", 0)))
    except KeyError as exc:
        raise ConfigError(f"scene group is missing field {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_scene(path) -> SceneSpec:
    return parse_scene(Path(path).read_text(encoding="utf-8"))


# Patchwork of five land covers in 25 px blocks, so every 50 px window holds
# four of them. Meadow blocks in the left window column are partly flooded
# (optics unchanged, SAR dark). Crop B blocks in the right window column are
# partly harvested wherever crop A shares the window, so SAR mixes the two.
PLANTED_SCENE = """\
width=200
height=200
looks=5
seed=2024
background=0
# meadow
class.0.mean=80,95,60
class.0.std=3,3,3
class.0.sar=0.45
# crop A
class.1.mean=45,70,40
class.1.std=3,3,3
class.1.sar=0.08
# crop B
class.2.mean=110,60,90
class.2.std=3,3,3
class.2.sar=1.2
# orchard
class.3.mean=60,120,100
class.3.std=3,3,3
class.3.sar=0.2
# stubble
class.4.mean=120,110,50
class.4.std=3,3,3
class.4.sar=0.03
# flooded meadow: same optics as class 0, dark in SAR
class.5.mean=80,95,60
class.5.std=3,3,3
class.5.sar=0.01
# harvested crop B: same optics as class 2, reads like crop A in SAR
class.6.mean=110,60,90
class.6.std=3,3,3
class.6.sar=0.08
# 25 px blocks, class (row + 2 col) mod 5, class 0 is the background
region.0.rect=25,0,50,25
region.0.class=2
region.1.rect=50,0,75,25
region.1.class=4
region.2.rect=75,0,100,25
region.2.class=1
region.3.rect=100,0,125,25
region.3.class=3
region.4.rect=150,0,175,25
region.4.class=2
region.5.rect=175,0,200,25
region.5.class=4
region.6.rect=0,25,25,50
region.6.class=1
region.7.rect=25,25,50,50
region.7.class=3
region.8.rect=75,25,100,50
region.8.class=2
region.9.rect=100,25,125,50
region.9.class=4
region.10.rect=125,25,150,50
region.10.class=1
region.11.rect=150,25,175,50
region.11.class=3
region.12.rect=0,50,25,75
region.12.class=2
region.13.rect=25,50,50,75
region.13.class=4
region.14.rect=50,50,75,75
region.14.class=1
region.15.rect=75,50,100,75
region.15.class=3
region.16.rect=125,50,150,75
region.16.class=2
region.17.rect=150,50,175,75
region.17.class=4
region.18.rect=175,50,200,75
region.18.class=1
region.19.rect=0,75,25,100
region.19.class=3
region.20.rect=50,75,75,100
region.20.class=2
region.21.rect=75,75,100,100
region.21.class=4
region.22.rect=100,75,125,100
region.22.class=1
region.23.rect=125,75,150,100
region.23.class=3
region.24.rect=175,75,200,100
region.24.class=2
region.25.rect=0,100,25,125
region.25.class=4
region.26.rect=25,100,50,125
region.26.class=1
region.27.rect=50,100,75,125
region.27.class=3
region.28.rect=100,100,125,125
region.28.class=2
region.29.rect=125,100,150,125
region.29.class=4
region.30.rect=150,100,175,125
region.30.class=1
region.31.rect=175,100,200,125
region.31.class=3
region.32.rect=25,125,50,150
region.32.class=2
region.33.rect=50,125,75,150
region.33.class=4
region.34.rect=75,125,100,150
region.34.class=1
region.35.rect=100,125,125,150
region.35.class=3
region.36.rect=150,125,175,150
region.36.class=2
region.37.rect=175,125,200,150
region.37.class=4
region.38.rect=0,150,25,175
region.38.class=1
region.39.rect=25,150,50,175
region.39.class=3
region.40.rect=75,150,100,175
region.40.class=2
region.41.rect=100,150,125,175
region.41.class=4
region.42.rect=125,150,150,175
region.42.class=1
region.43.rect=150,150,175,175
region.43.class=3
region.44.rect=0,175,25,200
region.44.class=2
region.45.rect=25,175,50,200
region.45.class=4
region.46.rect=50,175,75,200
region.46.class=1
region.47.rect=75,175,100,200
region.47.class=3
region.48.rect=125,175,150,200
region.48.class=2
region.49.rect=150,175,175,200
region.49.class=4
region.50.rect=175,175,200,200
region.50.class=1
# floods in the left window column, harvests in the right one
change.0.rect=0,0,25,10
change.0.class=5
change.1.rect=25,75,50,85
change.1.class=5
change.2.rect=175,90,200,100
change.2.class=6
change.3.rect=0,125,25,135
change.3.class=5
change.4.rect=150,140,175,150
change.4.class=6
"""


def planted_scene() -> SceneSpec:
    return parse_scene(PLANTED_SCENE)
