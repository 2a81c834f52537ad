"""End-to-end command-line workflows on tiny problem sizes."""

import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from pinnflow.cli import (EXIT_CONFIG, EXIT_DATA, apply_overrides, main,
                          parse_config)
from pinnflow.metrics import load_field_export
from pinnflow.errors import ConfigError

TINY_FORWARD = """
# manufactured forward problem, desk scale
problem = kovasznay
mode = forward
n_residual = 40
n_labeled = 16
n_boundary = 6
layers = 2,6,3
epochs = 12
seed = 0
"""

TINY_INVERSE = """
problem = kovasznay
mode = inverse
n_residual = 40
n_velocity = 20
n_pressure = 8
layers = 2,6,3
epochs = 12
seed = 0
"""


@pytest.fixture
def runner():
    return CliRunner()


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_config_and_overrides(tmp_path):
    path = _write(tmp_path, "cfg.txt", "a = 1\n# comment\nb = two # inline\n")
    cfg = parse_config(path)
    assert cfg == {"a": "1", "b": "two"}
    assert apply_overrides(cfg, ["a=9"])["a"] == "9"
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["broken"])
    bad = _write(tmp_path, "bad.txt", "no equals sign\n")
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_train_writes_artifacts(runner, tmp_path):
    cfg = _write(tmp_path, "fwd.txt", TINY_FORWARD)
    out = str(tmp_path / "run")
    result = runner.invoke(main, ["train", "--config", cfg, "--out", out])
    assert result.exit_code == 0, result.output
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    for artifact in manifest["artifacts"].values():
        assert os.path.exists(artifact)
    assert manifest["seed"] == 0
    assert manifest["final_loss"] is not None
    history = open(os.path.join(out, "history.csv")).read().splitlines()
    assert len(history) == 13  # header + one row per epoch


def test_train_is_reproducible(runner, tmp_path):
    cfg = _write(tmp_path, "fwd.txt", TINY_FORWARD)
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert runner.invoke(main, ["train", "--config", cfg, "--out", out_a]).exit_code == 0
    assert runner.invoke(main, ["train", "--config", cfg, "--out", out_b]).exit_code == 0
    hist_a = open(os.path.join(out_a, "history.csv")).read()
    hist_b = open(os.path.join(out_b, "history.csv")).read()
    assert hist_a == hist_b


def test_ablate_zeroes_residual_weight(runner, tmp_path):
    cfg = _write(tmp_path, "fwd.txt", TINY_FORWARD)
    out = str(tmp_path / "run")
    result = runner.invoke(main, ["ablate", "--config", cfg, "--out", out])
    assert result.exit_code == 0, result.output
    rows = open(os.path.join(out, "history.csv")).read().splitlines()[1:]
    w1_col = [float(r.split(",")[2]) for r in rows]
    assert all(w == 0.0 for w in w1_col)


def test_train_missing_data_file_exits_data_code(runner, tmp_path):
    cfg = _write(tmp_path, "files.txt",
                 "problem = files\nresidual_file = /nonexistent/points.csv\n"
                 "epochs = 2\n")
    out = str(tmp_path / "run")
    result = runner.invoke(main, ["train", "--config", cfg, "--out", out])
    assert result.exit_code == EXIT_DATA
    assert not os.path.exists(os.path.join(out, "checkpoint.npz"))
    assert not os.path.exists(os.path.join(out, "manifest.json"))


def test_train_invalid_config_exits_config_code(runner, tmp_path):
    cfg = _write(tmp_path, "bad.txt", TINY_FORWARD + "epochs = -5\n")
    result = runner.invoke(main, ["train", "--config", cfg,
                                  "--out", str(tmp_path / "run")])
    assert result.exit_code == EXIT_CONFIG


def test_override_precedence(runner, tmp_path):
    cfg = _write(tmp_path, "fwd.txt", TINY_FORWARD)
    out = str(tmp_path / "run")
    result = runner.invoke(main, ["train", "--config", cfg, "--out", out,
                                  "-o", "epochs=3", "-o", "warmup=2"])
    assert result.exit_code == 0, result.output
    history = open(os.path.join(out, "history.csv")).read().splitlines()
    assert len(history) == 4


def test_outdir_from_environment(runner, tmp_path, monkeypatch):
    cfg = _write(tmp_path, "fwd.txt", TINY_FORWARD)
    envdir = str(tmp_path / "envruns")
    monkeypatch.setenv("PINNFLOW_OUTDIR", envdir)
    result = runner.invoke(main, ["train", "--config", cfg])
    assert result.exit_code == 0, result.output
    assert os.path.exists(os.path.join(envdir, "checkpoint.npz"))


def _train_checkpoint(runner, tmp_path):
    cfg = _write(tmp_path, "fwd.txt", TINY_FORWARD)
    out = str(tmp_path / "run")
    assert runner.invoke(main, ["train", "--config", cfg, "--out", out]).exit_code == 0
    return os.path.join(out, "checkpoint.npz")


def test_evaluate_against_analytic_reference(runner, tmp_path):
    ckpt = _train_checkpoint(runner, tmp_path)
    report = str(tmp_path / "report.txt")
    result = runner.invoke(main, ["evaluate", "--checkpoint", ckpt,
                                  "--reference", "kovasznay", "--grid", "8,8",
                                  "--out", report])
    assert result.exit_code == 0, result.output
    assert "rel MSE" in result.output
    text = open(report).read()
    for f in ("u", "v", "p"):
        assert f"\n{f}," in text


def test_evaluate_without_reference_exports_predictions(runner, tmp_path):
    ckpt = _train_checkpoint(runner, tmp_path)
    out = str(tmp_path / "pred.csv")
    result = runner.invoke(main, ["evaluate", "--checkpoint", ckpt,
                                  "--grid", "4,4", "--out", out])
    assert result.exit_code == 0, result.output
    pts = load_field_export(out)
    assert pts.n == 16
    assert pts.mask_u.all() and pts.mask_p.all()


def test_evaluate_against_file_reference(runner, tmp_path):
    ckpt = _train_checkpoint(runner, tmp_path)
    ref = tmp_path / "ref.csv"
    ref.write_text("x,y,u\n0.5,0.5,1.0\n1.5,0.2,0.9\n")
    result = runner.invoke(main, ["evaluate", "--checkpoint", ckpt,
                                  "--reference", str(ref)])
    assert result.exit_code == 0, result.output
    assert "u" in result.output


def test_export_grid(runner, tmp_path):
    ckpt = _train_checkpoint(runner, tmp_path)
    out = str(tmp_path / "field.csv")
    result = runner.invoke(main, ["export", "--checkpoint", ckpt,
                                  "--out", out, "--grid", "3,5"])
    assert result.exit_code == 0, result.output
    pts = load_field_export(out)
    assert pts.n == 15


def test_missing_checkpoint_is_data_error(runner, tmp_path):
    result = runner.invoke(main, ["export", "--checkpoint",
                                  str(tmp_path / "none.npz"),
                                  "--out", str(tmp_path / "o.csv")])
    assert result.exit_code == EXIT_DATA


def test_noise_sweep(runner, tmp_path):
    cfg = _write(tmp_path, "inv.txt", TINY_INVERSE)
    out = str(tmp_path / "sweep")
    result = runner.invoke(main, ["noise-sweep", "--config", cfg, "--out", out,
                                  "--levels", "0,0.05", "--seeds", "0"])
    assert result.exit_code == 0, result.output
    rows = open(os.path.join(out, "sweep.csv")).read().splitlines()
    assert rows[0] == "level,seed,rel_mse_u,rel_mse_v,rel_mse_p"
    assert len(rows) == 3
    for level in ("0", "0.05"):
        sub = os.path.join(out, f"level_{level}_seed_0")
        assert os.path.exists(os.path.join(sub, "manifest.json"))


def test_noise_sweep_rejects_forward_config(runner, tmp_path):
    cfg = _write(tmp_path, "fwd.txt", TINY_FORWARD)
    result = runner.invoke(main, ["noise-sweep", "--config", cfg,
                                  "--out", str(tmp_path / "s")])
    assert result.exit_code == EXIT_CONFIG
