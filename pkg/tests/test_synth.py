import numpy as np
import pytest

from hetcd.config import ConfigError
from hetcd.raster import Raster
from hetcd.speckle import estimate_enl
from hetcd.synth import (PLANTED_SCENE, Rect, SceneClass, SceneSpec, generate_pair, parse_scene,
                         planted_scene)

TWO_CLASSES = [SceneClass([40.0, 60.0], np.diag([4.0, 9.0]), 0.2),
               SceneClass([90.0, 30.0], np.diag([1.0, 1.0]), 1.0)]


def two_halves(width=120, height=100, changes=(), looks=5.0, seed=3):
    cmap = np.zeros((height, width), int)
    cmap[:, width // 2:] = 1
    return SceneSpec(width, height, TWO_CLASSES, cmap, list(changes), looks=looks, seed=seed)


def test_no_changes_means_no_truth_and_right_moments():
    spec = two_halves()
    optical, sar, truth = generate_pair(spec)
    assert not truth.values.any()
    assert optical.data.shape == (100, 120, 2) and sar.data.shape == (100, 120, 1)
    for i, cls in enumerate(TWO_CLASSES):
        px = optical.data[spec.class_map == i].astype(float)
        sd = np.sqrt(np.diag(cls.optical_cov))
        assert np.all(np.abs(px.mean(axis=0) - cls.optical_mean) <= 3 * sd / np.sqrt(len(px)))


def test_changed_rectangle_is_the_truth():
    rect = Rect(10, 20, 40, 35)
    _, _, truth = generate_pair(two_halves(changes=[(rect, 1)]))
    expected = np.zeros((100, 120), bool)
    expected[20:35, 10:40] = True
    assert np.array_equal(truth.values, expected)


def test_change_to_same_class_is_not_truth():
    _, _, truth = generate_pair(two_halves(changes=[(Rect(70, 0, 80, 10), 1)]))
    assert not truth.values.any()


def test_sar_follows_the_post_event_class():
    spec = two_halves(changes=[(Rect(0, 0, 60, 50), 1)])
    _, sar, _ = generate_pair(spec)
    assert sar.data[:50, :60].mean() == pytest.approx(1.0, rel=0.05)
    assert sar.data[50:, :60].mean() == pytest.approx(0.2, rel=0.05)


def test_sar_mean_of_large_region():
    spec = SceneSpec(128, 128, TWO_CLASSES[:1], np.zeros((128, 128), int), looks=5.0, seed=8)
    _, sar, _ = generate_pair(spec)
    assert sar.data.mean() == pytest.approx(0.2, rel=0.02)


def test_homogeneous_enl_matches_looks():
    for looks in (3.0, 8.0):
        spec = SceneSpec(256, 256, TWO_CLASSES[:1], np.zeros((256, 256), int), looks=looks, seed=2)
        _, sar, _ = generate_pair(spec)
        x = sar.data.astype(float)
        assert x.mean() ** 2 / x.var() == pytest.approx(looks, rel=0.15)
        assert estimate_enl(sar).looks == pytest.approx(looks, rel=0.15)


def test_bit_deterministic():
    a = generate_pair(two_halves(seed=5))
    b = generate_pair(two_halves(seed=5))
    c = generate_pair(two_halves(seed=6))
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a[:2], b[:2]))
    assert not np.array_equal(a[1].data, c[1].data)


@pytest.mark.parametrize("kwargs, message", [
    ({"class_map": np.full((100, 120), 2)}, "unknown class"),
    ({"changes": [(Rect(100, 0, 130, 10), 0)]}, "outside"),
    ({"changes": [(Rect(0, 0, 10, 10), 5)]}, "unknown class"),
    ({"looks": 0.0}, "looks"),
])
def test_invalid_specs(kwargs, message):
    base = dict(width=120, height=100, classes=TWO_CLASSES, class_map=np.zeros((100, 120), int))
    base.update(kwargs)
    with pytest.raises(ValueError, match=message):
        SceneSpec(**base)


def test_class_validation():
    with pytest.raises(ValueError, match="positive definite"):
        SceneClass([1.0, 2.0], [[1.0, 2.0], [2.0, 1.0]], 0.5)
    with pytest.raises(ValueError, match="positive"):
        SceneClass([1.0], [[1.0]], 0.0)


SCENE_TEXT = """\
width=40
height=30
looks=4
seed=9
background=1
class.0.mean=10,20
class.0.cov=4,1;1,9
class.0.sar=0.5
class.1.mean=30,5
class.1.std=2,2
class.1.sar=0.1
region.0.rect=0,0,20,30   # left half
region.0.class=0
change.0.rect=5,5,15,10
change.0.class=1
"""


def test_parse_scene():
    spec = parse_scene(SCENE_TEXT)
    assert (spec.width, spec.height, spec.looks, spec.seed) == (40, 30, 4.0, 9)
    assert np.array_equal(spec.classes[0].optical_cov, [[4, 1], [1, 9]])
    assert np.array_equal(spec.classes[1].optical_cov, np.diag([4.0, 4.0]))
    assert spec.class_map[:, :20].max() == 0 and spec.class_map[:, 20:].min() == 1
    _, _, truth = generate_pair(spec)
    assert truth.values.sum() == 50


@pytest.mark.parametrize("edit", [
    lambda t: t.replace("class.1.sar=0.1\n", ""),
    lambda t: t.replace("region.0.rect=0,0,20,30", "region.0.rect=0,0,20"),
    lambda t: t.replace("change.0.class=1", "change.0.class=4"),
    lambda t: t + "colour=red\n",
])
def test_parse_scene_errors(edit):
    with pytest.raises(ConfigError):
        parse_scene(edit(SCENE_TEXT))


def test_planted_scene_layout():
    spec = planted_scene()
    assert parse_scene(PLANTED_SCENE).width == spec.width == 200
    optical, sar, truth = generate_pair(spec)
    assert isinstance(optical, Raster) and optical.bands == 3
    # every 50 px window holds several land covers
    for y in range(0, 200, 50):
        for x in range(0, 200, 50):
            assert len(np.unique(spec.class_map[y:y + 50, x:x + 50])) >= 3
    assert 0 < truth.values.mean() < 0.1
