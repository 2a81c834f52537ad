"""Navier-Stokes residual assembly, verified against a symbolic oracle."""

import numpy as np
import pytest
import sympy

from pinnflow import graph
from pinnflow.data import kovasznay_expressions, kovasznay_lambda
from pinnflow.errors import ConfigError
from pinnflow.physics import FluidConstants, ResidualTriple, ns_residual


def _eval_triple(triple, shape):
    return [np.broadcast_to(graph.evaluate(c), shape) for c in triple.components()]


def test_fluid_constants_defaults_and_validation():
    c = FluidConstants()
    assert c.density == 1.225
    assert c.viscosity == 1.48e-5
    with pytest.raises(ConfigError):
        FluidConstants(density=0.0)
    with pytest.raises(ConfigError):
        FluidConstants(viscosity=-1.0)


def test_constant_field_zero_residual():
    x = graph.variable("x", np.array([0.1, 0.5]))
    y = graph.variable("y", np.array([0.2, 0.9]))
    c = graph.constant(3.0)
    triple = ns_residual(c, c, c, x, y, FluidConstants(1.0, 0.01))
    for comp in _eval_triple(triple, (2,)):
        np.testing.assert_array_equal(comp, 0.0)


def test_linear_shear_zero_residual():
    """u = y, v = 0, p = const solves the equations for any viscosity."""
    x = graph.variable("x", np.linspace(0, 1, 7))
    y = graph.variable("y", np.linspace(-1, 1, 7))
    triple = ns_residual(y, graph.ZERO, graph.constant(2.0), x, y,
                         FluidConstants(1.0, 0.37))
    for comp in _eval_triple(triple, (7,)):
        np.testing.assert_allclose(comp, 0.0, atol=1e-14)


def test_kovasznay_residual_small():
    rng = np.random.default_rng(17)
    xs = rng.uniform(0, 2, 25)
    ys = rng.uniform(-0.5, 1.5, 25)
    x = graph.variable("x", xs)
    y = graph.variable("y", ys)
    u, v, p = kovasznay_expressions(x, y, 40.0)
    triple = ns_residual(u, v, p, x, y, FluidConstants(1.0, 1.0 / 40.0))
    for comp in _eval_triple(triple, xs.shape):
        assert np.max(np.abs(comp)) < 1e-8


def test_kovasznay_symbolic_oracle():
    """Independent check: substitute the closed form into the equations with
    a computer-algebra system and confirm the residuals vanish identically."""
    xs, ys = sympy.symbols("x y", real=True)
    re = sympy.Integer(40)
    lam = re / 2 - sympy.sqrt(re ** 2 / 4 + 4 * sympy.pi ** 2)
    u = 1 - sympy.exp(lam * xs) * sympy.cos(2 * sympy.pi * ys)
    v = lam / (2 * sympy.pi) * sympy.exp(lam * xs) * sympy.sin(2 * sympy.pi * ys)
    p = sympy.Rational(1, 2) * (1 - sympy.exp(2 * lam * xs))
    nu = 1 / re
    mass = sympy.diff(u, xs) + sympy.diff(v, ys)
    xmom = (u * sympy.diff(u, xs) + v * sympy.diff(u, ys) + sympy.diff(p, xs)
            - nu * (sympy.diff(u, xs, 2) + sympy.diff(u, ys, 2)))
    ymom = (u * sympy.diff(v, xs) + v * sympy.diff(v, ys) + sympy.diff(p, ys)
            - nu * (sympy.diff(v, xs, 2) + sympy.diff(v, ys, 2)))
    assert sympy.simplify(mass) == 0
    assert sympy.simplify(xmom) == 0
    assert sympy.simplify(ymom) == 0
    # and the engine agrees with the symbolic values of the building blocks
    assert kovasznay_lambda(40.0) == pytest.approx(float(lam), rel=1e-15)


def test_viscous_sign_flag_flips_term():
    x = graph.variable("x", np.array([0.4]))
    y = graph.variable("y", np.array([0.6]))
    u, v, p = kovasznay_expressions(x, y, 40.0)
    consts = FluidConstants(1.0, 1.0 / 40.0)
    std = ns_residual(u, v, p, x, y, consts)
    flip = ns_residual(u, v, p, x, y, consts, paper_viscous_sign=True)
    sx = float(np.ravel(graph.evaluate(std.f_xmom))[0])
    fx = float(np.ravel(graph.evaluate(flip.f_xmom))[0])
    # the flipped form differs by twice the viscous term (nonzero here)
    assert abs(sx) < 1e-8
    assert abs(fx) > 1e-3


def test_nu_eff_override_array():
    """A per-point effective viscosity column feeds the viscous term."""
    x = graph.variable("x", np.array([0.2, 0.8]))
    y = graph.variable("y", np.array([0.1, 0.3]))
    # field u = x^2 has laplacian 2; v=0, p=0 isolates the viscous x-term
    u = graph.mul(x, x)
    nu = np.array([0.5, 2.0])
    triple = ns_residual(u, graph.ZERO, graph.ZERO, x, y,
                         FluidConstants(1.0, 1.0), nu_eff=nu)
    fx = np.broadcast_to(graph.evaluate(triple.f_xmom), (2,))
    # u*du/dx - nu*2 = x^2*2x - 2 nu
    expected = 2 * np.array([0.2, 0.8]) ** 3 - 2 * nu
    np.testing.assert_allclose(fx, expected, atol=1e-14)


def test_residual_triple_components_order():
    t = ResidualTriple(graph.ZERO, graph.ONE, graph.constant(2.0))
    a, b, c = t.components()
    assert a is t.f_mass and b is t.f_xmom and c is t.f_ymom


def test_density_enters_pressure_gradient():
    x = graph.variable("x", np.array([0.3]))
    y = graph.variable("y", np.array([0.3]))
    p = graph.mul(graph.constant(4.0), x)
    triple = ns_residual(graph.ZERO, graph.ZERO, p, x, y,
                         FluidConstants(density=2.0, viscosity=1.0))
    fx = float(np.broadcast_to(graph.evaluate(triple.f_xmom), (1,))[0])
    assert fx == pytest.approx(4.0 / 2.0)
