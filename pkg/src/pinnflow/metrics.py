"""Evaluation against reference fields and export for plotting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FIELDS, PointSet, Scales, load_points
from .errors import ConfigError, DataError
from .network import ParamVector, predict


@dataclass(frozen=True)
class FieldMetrics:
    """Absolute MSE, relative MSE (%), and R-squared for one field."""

    abs_mse: float
    rel_mse_pct: float
    r_squared: float | None  # None when the reference is constant


def field_metrics(pred, ref) -> FieldMetrics:
    """Error metrics of a prediction against a reference array.

    Relative MSE is absolute MSE over mean squared reference, in percent.
    R-squared is 1 - SS_res/SS_tot, reported as absent for constant refs.
    """
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pred.shape != ref.shape or pred.size == 0:
        raise DataError("field_metrics needs equal-length non-empty arrays")
    d = pred - ref
    abs_mse = float(np.mean(d * d))
    ref_power = float(np.mean(ref * ref))
    rel = abs_mse / ref_power * 100.0 if ref_power > 0 else np.inf
    ss_tot = float(np.sum((ref - ref.mean()) ** 2))
    r2 = 1.0 - float(np.sum(d * d)) / ss_tot if ss_tot > 0 else None
    return FieldMetrics(abs_mse, float(rel), r2)


def relative_l2(pred, ref) -> float:
    """Alternative relative error: ||pred - ref||_2 / ||ref||_2."""
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    denom = np.sqrt(np.sum(ref * ref))
    if denom == 0:
        raise DataError("relative_l2 undefined for an all-zero reference")
    return float(np.sqrt(np.sum((pred - ref) ** 2)) / denom)


def pressure_coefficient(p_nw, p_in_static: float, p_in_total: float):
    """(p - p_static,in) / (P_total,in - p_static,in)."""
    denom = p_in_total - p_in_static
    if denom <= 0:
        raise ConfigError("inlet total pressure must exceed inlet static pressure")
    return (np.asarray(p_nw, dtype=float) - p_in_static) / denom


def line_profile(params: ParamVector, x, y):
    """Velocity magnitude and flow angle (degrees) along a sampled line."""
    u, v, _ = predict(params, np.asarray(x, float), np.asarray(y, float))
    magnitude = np.sqrt(u * u + v * v)
    angle = np.degrees(np.arctan2(v, u))
    return magnitude, angle


@dataclass
class MetricsReport:
    """Per-field error metrics plus optional Cp table and line profiles."""

    fields: dict                      # field name -> FieldMetrics
    cp_table: np.ndarray | None = None   # columns (arc position, Cp), sorted
    profiles: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cp_table is not None:
            arc = self.cp_table[:, 0]
            if np.any(np.diff(arc) < 0):
                raise DataError("Cp table must be sorted by arc position")


def evaluate_fields(params: ParamVector, reference: PointSet,
                    metadata=None) -> MetricsReport:
    """Compare network predictions with a labeled reference point set."""
    preds = dict(zip(FIELDS, predict(params, reference.x, reference.y)))
    out = {}
    for f in FIELDS:
        if reference.available(f).any():
            mask = reference.available(f)
            out[f] = field_metrics(preds[f][mask], reference.labels(f))
    if not out:
        raise DataError("reference set carries no labeled fields")
    return MetricsReport(out, metadata=dict(metadata or {}))


def write_report(report: MetricsReport, path):
    """Human-readable summary followed by a machine-readable CSV block."""
    with open(path, "w") as fh:
        fh.write("# prediction error report\n")
        for k, v in sorted(report.metadata.items()):
            fh.write(f"# {k}: {v}\n")
        for f, m in report.fields.items():
            r2 = "n/a" if m.r_squared is None else f"{m.r_squared:.6f}"
            fh.write(f"# {f}: abs MSE {m.abs_mse:.6e}, "
                     f"rel MSE {m.rel_mse_pct:.4f}%, R2 {r2}\n")
        fh.write("field,abs_mse,rel_mse_pct,r_squared\n")
        for f, m in report.fields.items():
            r2 = "" if m.r_squared is None else "%.17g" % m.r_squared
            fh.write("%s,%.17g,%.17g,%s\n" % (f, m.abs_mse, m.rel_mse_pct, r2))
        if report.cp_table is not None:
            fh.write("arc_position,cp\n")
            for arc, cp in report.cp_table:
                fh.write("%.17g,%.17g\n" % (arc, cp))


def read_report_fields(path) -> dict:
    """Parse the CSV block of a report back into FieldMetrics."""
    out = {}
    in_block = False
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line == "field,abs_mse,rel_mse_pct,r_squared":
                in_block = True
                continue
            if not in_block or not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if parts[0] not in FIELDS:
                break
            r2 = float(parts[3]) if parts[3] else None
            out[parts[0]] = FieldMetrics(float(parts[1]), float(parts[2]), r2)
    return out


def export_field(params: ParamVector, x_axis, y_axis, path,
                 scales: Scales = Scales()):
    """Evaluate on a rectangular grid and write dimensional x,y,u,v,p rows."""
    x_axis = np.asarray(x_axis, dtype=float)
    y_axis = np.asarray(y_axis, dtype=float)
    if x_axis.size < 2 or y_axis.size < 2:
        raise ConfigError("export grid must be at least 2x2")
    gx, gy = np.meshgrid(x_axis, y_axis, indexing="ij")
    gx, gy = gx.ravel(), gy.ravel()
    u, v, p = predict(params, gx, gy)
    with open(path, "w") as fh:
        fh.write("# scales: length=%.17g velocity=%.17g pressure=%.17g\n"
                 % (scales.length, scales.velocity, scales.pressure))
        fh.write("x,y,u,v,p\n")
        for row in zip(gx * scales.length, gy * scales.length,
                       u * scales.velocity, v * scales.velocity,
                       p * scales.pressure):
            fh.write(",".join("%.17g" % c for c in row) + "\n")


def load_field_export(path) -> PointSet:
    """Read a file written by :func:`export_field` back into a PointSet."""
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("x,"):
                continue
            rows.append([float(c) for c in line.strip().split(",")])
    arr = np.array(rows)
    return PointSet(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])
