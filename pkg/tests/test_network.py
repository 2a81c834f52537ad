"""Network construction, initialization, optimizer, checkpoints."""

import numpy as np
import pytest

from pinnflow import graph
from pinnflow.errors import ConfigError
from pinnflow.network import (DEFAULT_LAYER_SIZES, NetworkGraph, OptimizerState,
                              ParamVector, TrainableScalar, adam_update,
                              init_glorot, load_checkpoint, optimizer_step,
                              predict, save_checkpoint)


def test_default_architecture():
    assert DEFAULT_LAYER_SIZES == (2, 20, 50, 100, 100, 200, 200, 100, 50, 20, 3)


def test_biases_initialized_to_zero():
    params = init_glorot((2, 20, 3), seed=0)
    for b in params.biases:
        np.testing.assert_array_equal(b, 0.0)


def test_glorot_variance():
    params = init_glorot((2, 100, 100, 3), seed=5)
    w = params.weights[1]  # the 100x100 layer
    assert w.shape == (100, 100)
    var = w.var()
    assert abs(var - 0.01) / 0.01 < 0.20


def test_io_shape_enforced():
    with pytest.raises(ConfigError):
        init_glorot((3, 8, 2), seed=0)
    # auxiliary networks may opt out
    init_glorot((3, 8, 2), seed=0, enforce_io=False)


def test_zero_network_outputs_zero():
    params = init_glorot((2, 8, 3), seed=0)
    params = params.with_flat(np.zeros(params.n_params))
    u, v, p = predict(params, np.array([0.3, -4.0]), np.array([1.0, 9.0]))
    np.testing.assert_array_equal(u, 0.0)
    np.testing.assert_array_equal(v, 0.0)
    np.testing.assert_array_equal(p, 0.0)


def test_outputs_finite_on_box():
    params = init_glorot((2, 16, 16, 3), seed=2)
    g = np.linspace(-10, 10, 21)
    gx, gy = np.meshgrid(g, g)
    outs = predict(params, gx.ravel(), gy.ravel())
    for o in outs:
        assert np.all(np.isfinite(o))


def test_single_neuron_formula():
    """One hidden neuron reproduces w2*tanh(w1*x + b1) + b2 exactly."""
    w1, b1, w2, b2 = 1.3, -0.2, 0.7, 0.05
    params = init_glorot((1, 1, 1), seed=0, enforce_io=False)
    params = params.with_flat(np.array([w1, b1, w2, b2]))
    net = NetworkGraph(params)
    x = graph.variable("x", 0.9)
    # drive the 1-in/1-out network through its parameter nodes by hand
    pre = graph.nsum([graph.mul(net.weight_nodes[0][0][0], x),
                      net.bias_nodes[0][0]])
    hidden = graph.tanh(pre)
    final = graph.nsum([graph.mul(net.weight_nodes[1][0][0], hidden),
                        net.bias_nodes[1][0]])
    got = graph.evaluate(final)
    want = w2 * np.tanh(w1 * 0.9 + b1) + b2
    assert abs(got - want) < 1e-14


def test_flatten_roundtrip():
    params = init_glorot((2, 5, 3), seed=1,
                         extras=[TrainableScalar("lam", 0.3, True)])
    flat = params.flatten()
    back = params.with_flat(flat)
    np.testing.assert_array_equal(back.flatten(), flat)
    assert back.extra("lam").value == 0.3


def test_network_graph_matches_predict():
    params = init_glorot((2, 7, 3), seed=4)
    net = NetworkGraph(params)
    xs = np.array([0.2, 1.4])
    ys = np.array([-0.3, 0.9])
    x = graph.variable("x", xs)
    y = graph.variable("y", ys)
    outs = net.outputs(x, y)
    via_graph = [np.broadcast_to(graph.evaluate(o), xs.shape) for o in outs]
    via_predict = predict(params, xs, ys)
    for a, b in zip(via_graph, via_predict):
        np.testing.assert_allclose(a, b, rtol=0, atol=0)


def test_trainable_scalar_positive_reparam():
    s = TrainableScalar("nu", np.log(0.025), positive=True)
    assert s.physical() == pytest.approx(0.025)
    free = TrainableScalar("c", -2.0)
    assert free.physical() == -2.0


# -- optimizer ----------------------------------------------------------------

def test_adam_zero_gradient():
    flat = np.array([1.0, -2.0])
    state = OptimizerState.fresh(2)
    out = adam_update(flat, np.zeros(2), state, lr=0.1)
    np.testing.assert_array_equal(out, flat)
    # nonzero moments decay toward zero under a zero gradient
    state.m[:] = 1.0
    state.v[:] = 1.0
    adam_update(flat, np.zeros(2), state, lr=0.1)
    np.testing.assert_allclose(state.m, 0.9)
    np.testing.assert_allclose(state.v, 0.999)


def test_adam_first_step_direction_and_magnitude():
    flat = np.zeros(3)
    g = np.array([0.5, -2.0, 1e-3])
    state = OptimizerState.fresh(3)
    out = adam_update(flat, g, state, lr=0.01)
    # bias-corrected first step: -lr * g / (|g| + eps) ~= -lr * sign(g)
    np.testing.assert_allclose(out, -0.01 * np.sign(g), rtol=1e-4)


def test_adam_converges_on_quadratic():
    theta = np.array([1.0])
    state = OptimizerState.fresh(1)
    for _ in range(200):
        theta = adam_update(theta, 2 * theta, state, lr=0.1)
    assert abs(theta[0]) < 0.01


def test_optimizer_step_wrapper():
    params = init_glorot((2, 4, 3), seed=0)
    state = OptimizerState.fresh(params.n_params)
    grad = np.ones(params.n_params)
    new, same_state = optimizer_step(params, grad, state, lr=0.05)
    assert same_state is state
    assert new.layer_sizes == params.layer_sizes
    assert not np.array_equal(new.flatten(), params.flatten())


def test_adam_rejects_nonfinite_gradient():
    state = OptimizerState.fresh(2)
    with pytest.raises(Exception, match="index 1"):
        adam_update(np.zeros(2), np.array([0.0, np.nan]), state, lr=0.1)


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    params = init_glorot((2, 6, 3), seed=9,
                         extras=[TrainableScalar("lam", -1.2, True)])
    state = OptimizerState.fresh(params.n_params)
    state.m[:] = np.random.default_rng(0).normal(size=params.n_params)
    state.step = 42
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, params, state, seed=7, meta={"epochs": 100})
    back, bstate, seed, meta = load_checkpoint(path)
    np.testing.assert_array_equal(back.flatten(), params.flatten())
    assert back.layer_sizes == params.layer_sizes
    assert back.extra("lam").positive is True
    np.testing.assert_array_equal(bstate.m, state.m)
    assert bstate.step == 42
    assert seed == 7
    assert int(meta["epochs"]) == 100
