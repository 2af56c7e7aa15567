import json
import shutil
import subprocess

import pytest

from normsurf import cli

FAST = ["norm_check_quartic", "classify_fsigma", "shoot_sphere", "cone_shortcut", "refute_capped_cone",
        "refute_cylinder"]
SLOW = ["connect_sphere", "embed_euclidean", "embed_sphere", "calibrate_fsigma", "calibrate_paraboloid"]


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_scene_list_is_complete(capsys):
    assert cli.main(["scenes"]) == 0
    names = capsys.readouterr().out.split()
    assert sorted(names) == sorted(FAST + SLOW + ["norm_check_invalid"])


@pytest.mark.parametrize("scene", FAST)
def test_fast_scenes_succeed(scene, tmp_path):
    assert cli.main([cli.load_scene(scene)["command"], "--scene", scene, "--out", str(tmp_path), "--jobs", "1"]) == 0
    rep = _report(tmp_path)
    assert rep["status"] == "ok" and rep["version"] == "normsurf-0.1.0"


@pytest.mark.slow
@pytest.mark.parametrize("scene", SLOW)
def test_slow_scenes_succeed(scene, tmp_path):
    assert cli.main([cli.load_scene(scene)["command"], "--scene", scene, "--out", str(tmp_path), "--jobs", "1"]) == 0
    rep = _report(tmp_path)
    assert rep["status"] == "ok"
    if scene.startswith("embed"):
        bundle = json.loads((tmp_path / "bundle.json").read_text())
        assert bundle["certified"]
        header = (tmp_path / "radial_table.csv").read_text().splitlines()[0]
        assert header == "d1,d2,d3,d4,radius"


def test_invalid_norm_reports_eigenvalue(tmp_path):
    assert cli.main(["norm-check", "--scene", "norm_check_invalid", "--out", str(tmp_path)]) == 1
    rep = _report(tmp_path)
    assert rep["status"] == "error" and "eigenvalue" in rep["message"]
    assert rep["result"]["min_half_hessian_eigenvalue"] < 0 and not rep["result"]["valid"]


def test_refutation_artifacts(tmp_path):
    cli.main(["refute-line", "--scene", "refute_capped_cone", "--out", str(tmp_path)])
    assert _report(tmp_path)["result"]["status"] == "refuted"
    assert (tmp_path / "competitor.csv").read_text().startswith("x,y,z")


def test_unknown_key_is_a_config_error(tmp_path, capsys):
    cfg = dict(cli.load_scene("shoot_sphere"), spurious=1)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["shoot", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "spurious" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"command": "shoot",\n  "x0": [0, 0,\n}')
    assert cli.main(["shoot", "--config", str(path)]) == 1
    assert f"{path}:3:" in capsys.readouterr().err


def test_command_mismatch_rejected(tmp_path):
    assert cli.main(["shoot", "--scene", "classify_fsigma", "--out", str(tmp_path)]) == 1


def test_config_and_scene_are_exclusive(tmp_path):
    assert cli.main(["shoot", "--scene", "shoot_sphere", "--config", "x.json", "--out", str(tmp_path)]) == 1


def test_reports_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        cli.main(["cone-shortcut", "--scene", "cone_shortcut", "--out", str(out), "--seed", "7"])
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_seed_changes_random_cones(tmp_path):
    reps = []
    for s in ("1", "2"):
        cli.main(["cone-shortcut", "--scene", "cone_shortcut", "--out", str(tmp_path / s), "--seed", s])
        reps.append(_report(tmp_path / s)["result"])
    assert reps[0] != reps[1]


def test_non_finite_values_serialise():
    assert json.loads(cli.dumps({"a": float("inf"), "b": float("nan")})) == {"a": "inf", "b": "nan"}


@pytest.mark.skipif(shutil.which("normsurf") is None, reason="console script not installed")
def test_console_script():
    out = subprocess.run(["normsurf", "scenes"], capture_output=True, text=True, check=True)
    assert "shoot_sphere" in out.stdout
