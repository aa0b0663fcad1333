import numpy as np
import pytest

from hetcd.cli import main
from hetcd.raster import load_mask, load_raster

SCENE = """\
width=60
height=40
looks=5
seed=3
background=0
class.0.mean=80,95,60
class.0.std=3,3,3
class.0.sar=0.45
class.1.mean=45,70,40
class.1.std=3,3,3
class.1.sar=0.08
class.2.mean=80,95,60
class.2.std=3,3,3
class.2.sar=0.01
region.0.rect=30,0,60,40
region.0.class=1
change.0.rect=0,0,30,10
change.0.class=2
"""


@pytest.fixture
def scene_dir(tmp_path):
    scene = tmp_path / "scene.cfg"
    scene.write_text(SCENE)
    assert main(["synth", str(tmp_path / "data"), "--scene", str(scene), "--write-scene"]) == 0
    return tmp_path / "data"


def test_synth_outputs(scene_dir, capsys):
    assert (scene_dir / "scene.cfg").read_text() == SCENE
    assert load_raster(scene_dir / "optical.hdr").data.shape == (40, 60, 3)
    assert load_mask(scene_dir / "truth.pgm").values.sum() == 300


def test_synth_default_scene(tmp_path, capsys):
    assert main(["synth", str(tmp_path), "--seed", "5"]) == 0
    assert "200x200" in capsys.readouterr().out


def test_filter(scene_dir, tmp_path, capsys):
    out = tmp_path / "f.hdr"
    assert main(["filter", str(scene_dir / "sar.hdr"), str(out), "--enl-tile", "10"]) == 0
    assert "estimated_looks=" in capsys.readouterr().out
    assert load_raster(out).data.shape == (40, 60, 1)
    assert main(["filter", str(scene_dir / "sar.hdr"), str(out), "--looks", "5"]) == 0


def run_flags(scene_dir, out):
    return ["--optical", str(scene_dir / "optical.hdr"), "--sar", str(scene_dir / "sar.hdr"),
            "--output", str(out), "--runs", "3", "--k-min", "2", "--k-max", "3",
            "--window-side", "30"]


def test_run_evaluate_cluster_detect(scene_dir, tmp_path, capsys):
    out = tmp_path / "out"
    flags = run_flags(scene_dir, out) + ["--truth", str(scene_dir / "truth.pgm")]
    assert main(["run"] + flags) == 0
    text = capsys.readouterr().out
    assert "windows=2" in text and "kappa=" in text
    assert (out / "change_map.pgm").exists() and (out / "events.txt").exists()

    assert main(["evaluate", str(out / "change_map.pgm"), str(scene_dir / "truth.pgm"),
                 "--output", str(tmp_path / "m.txt")]) == 0
    assert (tmp_path / "m.txt").read_text() == (out / "metrics.txt").read_text()

    dbg = tmp_path / "dbg"
    assert main(["cluster"] + run_flags(scene_dir, dbg) + ["--window-id", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split()[1] for line in lines[-3:]] == ["view=opt", "view=sar", "view=st"]
    for view in ("opt", "sar", "st"):
        assert np.array_equal(load_raster(dbg / f"partition_{view}_1.hdr").data,
                              load_raster(out / f"partition_{view}_1.hdr").data)

    mask = tmp_path / "w0.pgm"
    assert main(["detect", str(out), "--window-id", "0", "--mask", str(mask)]) == 0
    events = capsys.readouterr().out
    window0 = [line for line in (out / "events.txt").read_text().splitlines()
               if line.startswith("window=0 ")]
    assert events.splitlines() == window0
    assert np.array_equal(load_mask(mask).values, load_mask(out / "change_map.pgm").values[:, :30])


def test_errors_exit_with_status_2(scene_dir, tmp_path, capsys):
    assert main(["run", "--optical", str(tmp_path / "missing.hdr"), "--sar",
                 str(scene_dir / "sar.hdr"), "--output", str(tmp_path / "o")]) == 2
    assert "does not exist" in capsys.readouterr().err
    assert main(["run"] + run_flags(scene_dir, tmp_path / "o") + ["--window-side", "5"]) == 2
    assert main(["evaluate", str(scene_dir / "truth.pgm"), str(tmp_path / "none.pgm")]) == 2


def test_unknown_flag_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--colour", "red"])
    assert exc.value.code == 2
