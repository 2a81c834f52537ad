"""Steady incompressible Navier-Stokes residuals from expression graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import graph
from .errors import ConfigError


@dataclass(frozen=True)
class FluidConstants:
    """Density and laminar kinematic viscosity (nondimensional or SI)."""

    density: float = 1.225
    viscosity: float = 1.48e-5

    def __post_init__(self):
        if self.density <= 0 or self.viscosity <= 0:
            raise ConfigError("density and viscosity must be strictly positive")


@dataclass(frozen=True)
class ResidualTriple:
    """Continuity and momentum residual expressions at the bound points."""

    f_mass: graph.Node
    f_xmom: graph.Node
    f_ymom: graph.Node

    def components(self):
        return self.f_mass, self.f_xmom, self.f_ymom


def ns_residual(u, v, p, x, y, constants: FluidConstants, nu_eff=None,
                paper_viscous_sign: bool = False) -> ResidualTriple:
    """Assemble the three steady incompressible residuals.

    ``u, v, p`` are expression graphs rooted at coordinate variables ``x, y``.
    ``nu_eff`` is the per-point effective viscosity (a node, e.g. a data
    constant or a trainable unknown); when omitted the laminar value is used.

    The viscous term is ``-nu_eff * laplacian`` (standard momentum equation);
    ``paper_viscous_sign=True`` flips it to the published ``+`` form.
    """
    if nu_eff is None:
        nu_eff = graph.constant(constants.viscosity)
    elif not isinstance(nu_eff, graph.Node):
        nu_eff = graph.constant(np.asarray(nu_eff, dtype=float))

    cx, cy = {}, {}  # shared tangent caches per direction
    du_dx = graph.differentiate(u, x, cache=cx)
    dv_dx = graph.differentiate(v, x, cache=cx)
    dp_dx = graph.differentiate(p, x, cache=cx)
    du_dy = graph.differentiate(u, y, cache=cy)
    dv_dy = graph.differentiate(v, y, cache=cy)
    dp_dy = graph.differentiate(p, y, cache=cy)
    d2u_dx2 = graph.differentiate(du_dx, x, cache=cx)
    d2u_dy2 = graph.differentiate(du_dy, y, cache=cy)
    d2v_dx2 = graph.differentiate(dv_dx, x, cache=cx)
    d2v_dy2 = graph.differentiate(dv_dy, y, cache=cy)

    inv_rho = graph.constant(1.0 / constants.density)
    lap_u = graph.add(d2u_dx2, d2u_dy2)
    lap_v = graph.add(d2v_dx2, d2v_dy2)
    visc_u = graph.mul(nu_eff, lap_u)
    visc_v = graph.mul(nu_eff, lap_v)

    f_mass = graph.add(du_dx, dv_dy)
    conv_u = graph.add(graph.mul(u, du_dx), graph.mul(v, du_dy))
    conv_v = graph.add(graph.mul(u, dv_dx), graph.mul(v, dv_dy))
    f_xmom = graph.add(conv_u, graph.mul(inv_rho, dp_dx))
    f_ymom = graph.add(conv_v, graph.mul(inv_rho, dp_dy))
    if paper_viscous_sign:
        f_xmom = graph.add(f_xmom, visc_u)
        f_ymom = graph.add(f_ymom, visc_v)
    else:
        f_xmom = graph.sub(f_xmom, visc_u)
        f_ymom = graph.sub(f_ymom, visc_v)
    return ResidualTriple(f_mass, f_xmom, f_ymom)
