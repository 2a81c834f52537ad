"""Command-line entry point: train, evaluate, export, noise-sweep, ablate.

Configuration files are plain-text ``key = value`` lines ('#' comments).
Command-line overrides take precedence over file values, which take
precedence over defaults.  Exit codes: 0 success, 2 configuration error,
3 data error, 4 divergence.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time

import click
import numpy as np

from .data import build_bundle, kovasznay, load_points, PointSet
from .errors import ConfigError, DataError, DivergenceError, PinnflowError
from .metrics import (evaluate_fields, export_field, field_metrics,
                      MetricsReport, write_report)
from .network import load_checkpoint, save_checkpoint
from .physics import FluidConstants
from .problems import ProblemSpec, UnknownDecl
from .training import TrainConfig, export_history, train

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def parse_config(path) -> dict:
    cfg = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, val = line.split("=", 1)
                cfg[key.strip().lower()] = val.strip()
    except OSError as e:
        raise DataError(f"cannot read config {path}: {e}")
    return cfg


def apply_overrides(cfg: dict, overrides) -> dict:
    out = dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must be key=value")
        key, val = item.split("=", 1)
        out[key.strip().lower()] = val.strip()
    return out


def _get(cfg, key, cast, default):
    if key not in cfg:
        return default
    try:
        return cast(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"config field {key!r}: cannot parse {cfg[key]!r}")


def config_to_spec(cfg: dict) -> ProblemSpec:
    bundle = build_bundle(cfg)
    re = _get(cfg, "re", float, 40.0)
    constants = FluidConstants(
        density=_get(cfg, "density", float, 1.0),
        viscosity=_get(cfg, "viscosity", float, 1.0 / re))
    unknowns = []
    if cfg.get("unknowns"):
        for part in cfg["unknowns"].split(","):
            bits = part.strip().split(":")
            if len(bits) not in (2, 3):
                raise ConfigError(f"unknown declaration {part!r}: use name:init[:positive]")
            positive = len(bits) == 3 and bits[2].lower() in ("1", "true", "yes")
            unknowns.append(UnknownDecl(bits[0], float(bits[1]), positive))
    active = None
    if cfg.get("active_boundaries") is not None:
        names = [s for s in cfg["active_boundaries"].split(",") if s.strip()]
        active = frozenset(s.strip().lower() for s in names)
    return ProblemSpec(
        mode=cfg.get("mode", "forward").lower(), bundle=bundle,
        constants=constants, active_boundaries=active, unknowns=unknowns,
        ablate=_get(cfg, "ablate", _as_bool, False),
        periodic_pressure=_get(cfg, "periodic_pressure", _as_bool, False),
        wall_velocity_in_inverse=_get(cfg, "wall_velocity", _as_bool, False),
        paper_viscous_sign=_get(cfg, "paper_viscous_sign", _as_bool, False),
        nu_eff_unknown=cfg.get("nu_eff_unknown"))


def _as_bool(s):
    return str(s).lower() in ("1", "true", "yes", "on")


def config_to_train(cfg: dict) -> TrainConfig:
    layers = (2, 32, 32, 32, 3)
    if cfg.get("layers"):
        layers = tuple(int(s) for s in cfg["layers"].split(","))
    return TrainConfig(
        epochs=_get(cfg, "epochs", int, 1000),
        seed=_get(cfg, "seed", int, 0),
        layer_sizes=layers,
        ablate=_get(cfg, "ablate", _as_bool, False),
        weight_update_period=_get(cfg, "weight_update_period", int, 10),
        ema_alpha=_get(cfg, "ema_alpha", float, 0.9),
        initial_weights=tuple(float(s) for s in
                              cfg.get("initial_weights", "1,1").split(",")),
        weight_mode=cfg.get("weight_mode", "ratio_of_means"),
        lr_min=_get(cfg, "lr_min", float, 1e-7),
        lr_max=_get(cfg, "lr_max", float, 1e-3),
        warmup_epochs=_get(cfg, "warmup", int, 10),
        chunk_size=_get(cfg, "chunk_size", int, 1250),
        residual_batch=_get(cfg, "residual_batch", int, None))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _outdir(cfg, explicit):
    out = explicit or cfg.get("outdir") or os.environ.get("PINNFLOW_OUTDIR", "runs")
    os.makedirs(out, exist_ok=True)
    return out


def run_training(cfg: dict, outdir: str, quiet=False) -> dict:
    """Train from a config mapping; writes checkpoint/history/manifest."""
    spec = config_to_spec(cfg)
    tc = config_to_train(cfg)
    started = time.strftime("%Y-%m-%dT%H:%M:%S")

    def progress(epoch, lr, b):
        if not quiet and epoch % 100 == 0:
            click.echo(f"epoch {epoch:6d}  lr {lr:.3e}  total {b.total:.6e}",
                       err=True)

    result = train(spec, tc, progress=progress)
    ckpt = os.path.join(outdir, "checkpoint.npz")
    hist = os.path.join(outdir, "history.csv")
    save_checkpoint(ckpt, result.params, result.optimizer_state, seed=tc.seed,
                    meta={"scales": [spec.bundle.scales.length,
                                     spec.bundle.scales.velocity,
                                     spec.bundle.scales.density]})
    export_history(result.history, hist)
    digests = {k: _sha256(cfg[k]) for k in cfg
               if k.endswith("_file") and os.path.exists(cfg[k])}
    manifest = {
        "config": cfg,
        "seed": tc.seed,
        "data_digests": digests,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "artifacts": {"checkpoint": ckpt, "history": hist},
        "final_loss": result.final.total if result.final else None,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    if result.final and not quiet:
        click.echo(f"final total loss: {result.final.total:.6e}", err=True)
    return manifest


def _fail(e):
    click.echo(f"error: {e}", err=True)
    if isinstance(e, DivergenceError):
        sys.exit(EXIT_DIVERGED)
    if isinstance(e, DataError):
        sys.exit(EXIT_DATA)
    sys.exit(EXIT_CONFIG)


@click.group()
def main():
    """Flow-field reconstruction with physics-informed networks."""


@main.command("train")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", "out", default=None, help="Output directory.")
@click.option("--set", "-o", "overrides", multiple=True,
              help="Override a config value, key=value.")
@click.option("--ablate-dnn", is_flag=True, help="Drop the residual term.")
def cmd_train(config_path, out, overrides, ablate_dnn):
    """Train a problem described by a config file."""
    try:
        cfg = apply_overrides(parse_config(config_path), overrides)
        if ablate_dnn:
            cfg["ablate"] = "true"
        run_training(cfg, _outdir(cfg, out))
    except PinnflowError as e:
        _fail(e)


@main.command("ablate")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--out", "out", default=None)
@click.option("--set", "-o", "overrides", multiple=True)
def cmd_ablate(config_path, out, overrides):
    """Train the plain-network baseline (residual term excluded)."""
    try:
        cfg = apply_overrides(parse_config(config_path), overrides)
        cfg["ablate"] = "true"
        run_training(cfg, _outdir(cfg, out))
    except PinnflowError as e:
        _fail(e)


def _reference_set(reference, re, grid, domain) -> PointSet | None:
    if reference is None:
        return None
    if reference == "kovasznay":
        nx, ny = grid
        x0, x1, y0, y1 = domain
        gx, gy = np.meshgrid(np.linspace(x0, x1, nx), np.linspace(y0, y1, ny),
                             indexing="ij")
        u, v, p = kovasznay(gx.ravel(), gy.ravel(), re)
        return PointSet(gx.ravel(), gy.ravel(), u, v, p)
    return load_points(reference)


@main.command("evaluate")
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--reference", default=None,
              help="Labeled reference file, or 'kovasznay'.")
@click.option("--re", "re", default=40.0, show_default=True)
@click.option("--grid", default="40,40", help="nx,ny for analytic references.")
@click.option("--domain", default="0:2:-0.5:1.5", help="x0:x1:y0:y1.")
@click.option("--out", default=None, help="Report (or export) path.")
def cmd_evaluate(checkpoint, reference, re, grid, domain, out):
    """Report per-field error metrics of a checkpoint, Table-style."""
    try:
        params, _, seed, _ = load_checkpoint(checkpoint)
        nx, ny = (int(s) for s in grid.split(","))
        dom = tuple(float(s) for s in domain.split(":"))
        ref = _reference_set(reference, re, (nx, ny), dom)
        if ref is None:
            out = out or "predictions.csv"
            export_field(params, np.linspace(dom[0], dom[1], nx),
                         np.linspace(dom[2], dom[3], ny), out)
            click.echo(f"no reference given; predictions written to {out}")
            return
        report = evaluate_fields(params, ref,
                                 metadata={"checkpoint": checkpoint, "seed": seed})
        click.echo("field  abs MSE        rel MSE %   R^2")
        for f, m in report.fields.items():
            r2 = "n/a" if m.r_squared is None else f"{m.r_squared:.6f}"
            click.echo(f"{f:5s}  {m.abs_mse:.6e}   {m.rel_mse_pct:8.4f}   {r2}")
        if out:
            write_report(report, out)
    except FileNotFoundError as e:
        _fail(DataError(str(e)))
    except PinnflowError as e:
        _fail(e)


@main.command("export")
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--grid", default="100,100")
@click.option("--domain", default="0:2:-0.5:1.5")
def cmd_export(checkpoint, out, grid, domain):
    """Evaluate a checkpoint on a rectangular grid and write x,y,u,v,p rows."""
    try:
        params, _, _, _ = load_checkpoint(checkpoint)
        nx, ny = (int(s) for s in grid.split(","))
        x0, x1, y0, y1 = (float(s) for s in domain.split(":"))
        export_field(params, np.linspace(x0, x1, nx), np.linspace(y0, y1, ny), out)
    except FileNotFoundError as e:
        _fail(DataError(str(e)))
    except PinnflowError as e:
        _fail(e)


@main.command("noise-sweep")
@click.option("--config", "config_path", type=click.Path(), required=True)
@click.option("--levels", default="0.01,0.05,0.10", show_default=True)
@click.option("--seeds", default="0", show_default=True)
@click.option("--out", default=None)
@click.option("--set", "-o", "overrides", multiple=True)
def cmd_noise_sweep(config_path, levels, seeds, out, overrides):
    """Repeat an inverse run across label-noise levels and tabulate errors."""
    try:
        base = apply_overrides(parse_config(config_path), overrides)
        if base.get("mode", "forward").lower() != "inverse":
            raise ConfigError("noise-sweep needs an inverse-mode config")
        outdir = _outdir(base, out)
        level_list = [float(s) for s in levels.split(",")]
        seed_list = [int(s) for s in seeds.split(",")]
        rows = []
        for level in level_list:
            for seed in seed_list:
                cfg = dict(base)
                cfg["noise_level"] = repr(level)
                cfg["seed"] = str(seed)
                subdir = os.path.join(outdir, f"level_{level:g}_seed_{seed}")
                os.makedirs(subdir, exist_ok=True)
                try:
                    run_training(cfg, subdir, quiet=True)
                except DivergenceError as e:
                    rows.append((level, seed, None))
                    click.echo(f"level {level:g} seed {seed}: diverged ({e})",
                               err=True)
                    continue
                params, _, _, _ = load_checkpoint(
                    os.path.join(subdir, "checkpoint.npz"))
                ref = _reference_set("kovasznay", _get(cfg, "re", float, 40.0),
                                     (40, 40), (0.0, 2.0, -0.5, 1.5))
                rep = evaluate_fields(params, ref)
                rows.append((level, seed, rep))
        sweep_path = os.path.join(outdir, "sweep.csv")
        with open(sweep_path, "w") as fh:
            fh.write("level,seed,rel_mse_u,rel_mse_v,rel_mse_p\n")
            for level, seed, rep in rows:
                if rep is None:
                    fh.write(f"{level:g},{seed},diverged,diverged,diverged\n")
                else:
                    fh.write("%g,%d,%.17g,%.17g,%.17g\n" % (
                        level, seed, rep.fields["u"].rel_mse_pct,
                        rep.fields["v"].rel_mse_pct, rep.fields["p"].rel_mse_pct))
        click.echo(f"sweep table written to {sweep_path}")
    except PinnflowError as e:
        _fail(e)


if __name__ == "__main__":
    main()
