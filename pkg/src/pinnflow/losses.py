"""Loss terms over point sets and the weighted composite objective.

Every builder takes a *model*: any object with ``outputs(x_node, y_node)``
returning (u, v, p) expression graphs (the network, or an analytic solution
for verification).  Builders bind the point coordinates to fresh variable
nodes, so the returned loss is a closed expression sharing only the model's
parameter nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import graph
from .data import FIELDS, PeriodicPairs, PointSet
from .errors import ConfigError, DataError
from .physics import FluidConstants, ns_residual


def mse(pred, target) -> float:
    """Plain mean square error of two equal-length arrays."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.ndim != 1:
        raise DataError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise DataError("mse of empty arrays")
    d = pred - target
    return float(np.mean(d * d))


def _bound_coords(points: PointSet):
    x = graph.variable("x", points.x)
    y = graph.variable("y", points.y)
    return x, y


def _sq(n):
    return graph.mul(n, n)


def _mse_expr(pred, target_values):
    d = graph.sub(pred, graph.constant(np.asarray(target_values, dtype=float)))
    return graph.mean(_sq(d))


def residual_loss(model, points: PointSet, constants: FluidConstants,
                  nu_eff=None, paper_viscous_sign: bool = False) -> graph.Node:
    """Mean over points of the squared 2-norm of the three residuals."""
    if points.n == 0:
        raise ConfigError("residual loss needs a non-empty point set")
    x, y = _bound_coords(points)
    if nu_eff is None and points.nu_eff is not None:
        nu_eff = graph.constant(points.nu_eff)
    u, v, p = model.outputs(x, y)
    triple = ns_residual(u, v, p, x, y, constants, nu_eff=nu_eff,
                         paper_viscous_sign=paper_viscous_sign)
    fm, fx, fy = triple.components()
    return graph.mean(graph.nsum([_sq(fm), _sq(fx), _sq(fy)]))


def labeled_loss(model, points: PointSet) -> graph.Node:
    """Sum of per-field MSE terms, each averaged over its unmasked points.

    Points are grouped by mask signature so each distinct availability
    pattern costs one network evaluation; a field's term is the count-weighted
    combination of its group means.
    """
    if points.n == 0:
        raise ConfigError("labeled loss needs a non-empty point set")
    any_field = points.mask_u | points.mask_v | points.mask_p
    if not any_field.all():
        raise DataError("labeled point without any available field")
    sig = (points.mask_u.astype(int) * 4 + points.mask_v.astype(int) * 2
           + points.mask_p.astype(int))
    field_counts = {f: int(points.available(f).sum()) for f in FIELDS}
    field_parts = {f: [] for f in FIELDS}
    for s in np.unique(sig):
        idx = np.flatnonzero(sig == s)
        group = points.subset(idx)
        x, y = _bound_coords(group)
        preds = dict(zip(FIELDS, model.outputs(x, y)))
        for f in FIELDS:
            gmask = group.available(f)
            if not gmask.any():
                continue
            # signature grouping makes masks uniform within a group
            term = _mse_expr(preds[f], getattr(group, f))
            field_parts[f].append((len(idx), term))
    terms = []
    for f in FIELDS:
        if not field_parts[f]:
            continue
        total = field_counts[f]
        terms.append(graph.nsum(
            [graph.mul(graph.constant(cnt / total), t) for cnt, t in field_parts[f]]))
    return graph.nsum(terms)


def boundary_losses(model, inlet: PointSet, outlet: PointSet, wall: PointSet,
                    periodic: PeriodicPairs, periodic_pressure: bool = False):
    """(inlet, outlet, wall, periodic) loss expressions.

    Any empty set contributes the exact zero constant.  Inlet constrains
    (u, v) to labels, outlet constrains p, wall pins (u, v) to zero, and the
    periodic term equates (u, v) across pitchwise pairs (optionally p too).
    """
    if inlet.n:
        if inlet.u is None or inlet.v is None or not (inlet.mask_u.all() and inlet.mask_v.all()):
            raise ConfigError("inlet set must carry u and v labels at every point")
        x, y = _bound_coords(inlet)
        u, v, _ = model.outputs(x, y)
        l_in = graph.add(_mse_expr(u, inlet.u), _mse_expr(v, inlet.v))
    else:
        l_in = graph.ZERO
    if outlet.n:
        if outlet.p is None or not outlet.mask_p.all():
            raise ConfigError("outlet set must carry p labels at every point")
        x, y = _bound_coords(outlet)
        _, _, p = model.outputs(x, y)
        l_out = _mse_expr(p, outlet.p)
    else:
        l_out = graph.ZERO
    if wall.n:
        x, y = _bound_coords(wall)
        u, v, _ = model.outputs(x, y)
        l_wall = graph.add(graph.mean(_sq(u)), graph.mean(_sq(v)))
    else:
        l_wall = graph.ZERO
    if periodic.n:
        xl, yl = _bound_coords(periodic.lower)
        xu, yu = _bound_coords(periodic.upper)
        ul, vl, pl = model.outputs(xl, yl)
        uu, vu, pu = model.outputs(xu, yu)
        parts = [graph.mean(_sq(graph.sub(ul, uu))),
                 graph.mean(_sq(graph.sub(vl, vu)))]
        if periodic_pressure:
            parts.append(graph.mean(_sq(graph.sub(pl, pu))))
        l_per = graph.nsum(parts)
    else:
        l_per = graph.ZERO
    return l_in, l_out, l_wall, l_per


def total_loss(l_e, l_f, boundary_terms, weights) -> graph.Node:
    """w1*L_e + w2*L_f + w3*(sum of boundary terms)."""
    w1, w2, w3 = weights
    for w in (w1, w2, w3):
        if not isinstance(w, graph.Node):
            if not np.isfinite(w) or w < 0:
                raise ConfigError(f"loss weight must be finite and non-negative, got {w}")
    wn = [w if isinstance(w, graph.Node) else graph.constant(float(w))
          for w in (w1, w2, w3)]
    l_b = graph.nsum(list(boundary_terms))
    return graph.nsum([graph.mul(wn[0], l_e), graph.mul(wn[1], l_f),
                       graph.mul(wn[2], l_b)])


@dataclass
class LossBreakdown:
    """Evaluated values of every term, the current weights, and the total."""

    l_e: float
    l_f: float
    l_b_in: float
    l_b_out: float
    l_b_wall: float
    l_b_per: float
    w1: float
    w2: float
    w3: float

    @property
    def l_b(self) -> float:
        return self.l_b_in + self.l_b_out + self.l_b_wall + self.l_b_per

    @property
    def total(self) -> float:
        return self.w1 * self.l_e + self.w2 * self.l_f + self.w3 * self.l_b
