"""Tests for the command line runner."""

import json

import numpy as np
import pytest

from bogomolny import cli
from bogomolny.geometry import read_field

MODEL_CFG = """\
# model problem with P = 1
scenario = model
P = [1]
box = [1.0, 0.5, 4.5]
grid = [9, 9, 9]
"""

APPROX_CFG = """\
scenario = approx
P = [1]
Q = [0, 1]
R = [1]
box = [2.0, 0.1, 4.0]
grid = [9, 9, 17]
"""

CONTINUE_CFG = """\
scenario = continue
P = [1]
Q = [0, 1]
R = [1]
box = [2.0, 0.25, 4.25]
grid = [9, 9, 9]
corrections = 1
t_final = 0.25
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_missing_key_is_named(tmp_path, capsys):
    cfg = write(tmp_path, MODEL_CFG.replace("grid = [9, 9, 9]\n", ""))
    assert cli.run("model", cfg, tmp_path / "out") == cli.EXIT_CONFIG
    assert "grid" in capsys.readouterr().err


@pytest.mark.parametrize(
    "edit, key",
    [
        (("P = [1]", "P = [1]\nfoo = 3"), "foo"),
        (("grid = [9, 9, 9]", "grid = [9, 9]"), "grid"),
        (("box = [1.0, 0.5, 4.5]", "box = [1.0, 0.0, 4.5]"), "box"),
        (("P = [1]", "P = 7"), "P"),
        (("scenario = model", "scenario = approx"), "scenario"),
    ],
)
def test_invalid_config_names_key(tmp_path, capsys, edit, key):
    cfg = write(tmp_path, MODEL_CFG.replace(*edit))
    assert cli.run("model", cfg, tmp_path / "out") == cli.EXIT_CONFIG
    assert f"'{key}'" in capsys.readouterr().err


def test_parse_config_text():
    raw = cli.parse_config_text("a = 1\n# note\nb = [[0, 1], 2]\nc = knotted\n")
    assert raw == {"a": 1, "b": [[0, 1], 2], "c": "knotted"}
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text("a = 1\na = 2\n")


def test_model_run(tmp_path):
    out = tmp_path / "out"
    assert cli.run("model", write(tmp_path, MODEL_CFG), out) == cli.EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["success"] and report["classification"] == "solution"
    assert report["mode"] == "knotless"
    grid, u = read_field(out / "u.field")
    assert u.shape[:3] == grid.shape
    assert (out / "profile.csv").read_text().startswith("y,")


def test_model_outputs_deterministic(tmp_path):
    cfg = write(tmp_path, MODEL_CFG)
    for d in ("a", "b"):
        assert cli.run("model", cfg, tmp_path / d) == cli.EXIT_OK
    for name in ("u.field", "residual.field", "profile.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_approx_run(tmp_path):
    out = tmp_path / "out"
    assert cli.run("approx", write(tmp_path, APPROX_CFG), out) == cli.EXIT_OK
    fits = json.loads((out / "fits.json").read_text())
    assert fits["profile"]["zero_sup"] <= 1e-8
    assert fits["bezout_error"] < 1e-12
    assert (out / "regions.csv").read_text().startswith("region,")


def test_approx_failure_writes_report(tmp_path):
    # a root of Q under the far region cannot be glued
    text = APPROX_CFG.replace("Q = [0, 1]", "Q = [-3.5, 1]").replace("box = [2.0, 0.1, 4.0]", "box = [4.0, 0.1, 6.0]")
    cfg = write(tmp_path, text + "rho_far = 4.0\n")
    out = tmp_path / "out"
    assert cli.run("approx", cfg, out) == cli.EXIT_FAILURE
    assert json.loads((out / "fits.json").read_text())["success"] is False


def test_continue_run(tmp_path):
    out = tmp_path / "out"
    assert cli.run("continue", write(tmp_path, CONTINUE_CFG), out) == cli.EXIT_OK
    decay = json.loads((out / "decay.json").read_text())
    assert decay["success"] and decay["final_t"] == 0.25
    assert len(decay["corrections"]) == 1
    assert decay["decay"]["bottom_levels"] >= 2
    lines = (out / "history.csv").read_text().splitlines()
    assert lines[0] == "t,residual,steps,alpha,accepted" and len(lines) >= 3
    grid, s = read_field(out / "s.field")
    assert np.all(np.isfinite(s.view(float)))


def test_verify_passes_and_detects_fault(tmp_path):
    base = "scenario = verify\nverify_n = 9\nchecks = ['gamma_series', 'v_square', 'polar_roundtrip']\n"
    assert cli.run("verify", write(tmp_path, base), tmp_path / "ok") == cli.EXIT_OK
    bad = write(tmp_path, base + "gamma_fault = 1e-6\n", "bad.cfg")
    assert cli.run("verify", bad, tmp_path / "bad") == cli.EXIT_FAILURE
    verdicts = json.loads((tmp_path / "bad" / "verdicts.json").read_text())["verdicts"]
    failed = {v["check"] for v in verdicts if not v["passed"]}
    assert "gamma_series" in failed


def test_verify_empty_check_list(tmp_path):
    cfg = write(tmp_path, "scenario = verify\nchecks = []\n")
    assert cli.run("verify", cfg, tmp_path / "out") == cli.EXIT_OK
    assert json.loads((tmp_path / "out" / "verdicts.json").read_text())["verdicts"] == []


def test_verify_unknown_check(tmp_path, capsys):
    cfg = write(tmp_path, "scenario = verify\nchecks = ['nope']\n")
    assert cli.run("verify", cfg, tmp_path / "out") == cli.EXIT_CONFIG
    assert "checks" in capsys.readouterr().err


def test_main_argparse(tmp_path):
    cfg = write(tmp_path, MODEL_CFG)
    assert cli.main(["model", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus", "--config", str(cfg), "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert cli.main(["model", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2
