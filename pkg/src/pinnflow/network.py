"""Fully connected tanh network over expression graphs.

Maps nondimensional coordinates (x, y) to flow outputs (u, v, p).  Hidden
layers use tanh, the output layer is affine.  Parameters live in a flat,
deterministic order so optimizer state and gradients line up.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import graph
from .errors import ConfigError, EvaluationError

#: Hidden-layer widths used for the full-scale cascade runs.
DEFAULT_LAYER_SIZES = (2, 20, 50, 100, 100, 200, 200, 100, 50, 20, 3)


@dataclass
class TrainableScalar:
    """Extra trainable unknown (inverse problems), e.g. an effective viscosity.

    ``value`` is the raw optimization variable.  With ``positive=True`` the
    physical value is exp(raw), keeping it strictly positive.
    """

    name: str
    value: float
    positive: bool = False

    def physical(self) -> float:
        return float(np.exp(self.value)) if self.positive else float(self.value)


@dataclass
class ParamVector:
    """All trainable parameters: per-layer weights/biases plus extra scalars."""

    layer_sizes: tuple
    weights: list  # list of (out, in) float arrays
    biases: list   # list of (out,) float arrays
    extras: list = field(default_factory=list)  # list[TrainableScalar]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ConfigError(f"invalid layer sizes {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ConfigError("weights/biases count does not match layer sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (sizes[k + 1], sizes[k])
            if w.shape != want or b.shape != (sizes[k + 1],):
                raise ConfigError(f"layer {k} shapes {w.shape}/{b.shape} != {want}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigError(f"non-finite parameter in layer {k}")
        self.layer_sizes = sizes

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases)) + len(self.extras)

    def flatten(self) -> np.ndarray:
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b)
        chunks.append(np.array([e.value for e in self.extras]))
        return np.concatenate(chunks) if chunks else np.empty(0)

    def with_flat(self, flat: np.ndarray) -> "ParamVector":
        if flat.shape != (self.n_params,):
            raise ConfigError(f"flat vector length {flat.shape} != {self.n_params}")
        weights, biases = [], []
        k = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[k:k + w.size].reshape(w.shape).copy())
            k += w.size
            biases.append(flat[k:k + b.size].copy())
            k += b.size
        extras = [replace(e, value=float(flat[k + i])) for i, e in enumerate(self.extras)]
        return ParamVector(self.layer_sizes, weights, biases, extras)

    def extra(self, name: str) -> TrainableScalar:
        for e in self.extras:
            if e.name == name:
                return e
        raise KeyError(name)


def init_glorot(layer_sizes, seed: int, extras=None, enforce_io: bool = True) -> ParamVector:
    """Glorot-normal weights (variance 2/(fan_in+fan_out)), zero biases.

    The flow networks map 2 coordinates to 3 outputs; pass
    ``enforce_io=False`` for auxiliary toy networks.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ConfigError(f"layer sizes must be positive, got {sizes}")
    if enforce_io and (sizes[0] != 2 or sizes[-1] != 3):
        raise ConfigError(f"flow network needs 2 inputs and 3 outputs, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ParamVector(sizes, weights, biases, list(extras or []))


class NetworkGraph:
    """Expression-graph view of a network: one variable node per parameter.

    Built once per training run; all loss terms share the same parameter
    nodes, so one backward sweep yields the full gradient.  ``outputs`` builds
    a fresh (u, v, p) subgraph rooted at the given coordinate variables.
    """

    def __init__(self, params: ParamVector):
        self.layer_sizes = params.layer_sizes
        self.param_nodes = []
        self.weight_nodes = []
        self.bias_nodes = []
        for li, (w, b) in enumerate(zip(params.weights, params.biases)):
            wn = [[graph.variable(f"w{li}_{i}_{j}") for j in range(w.shape[1])]
                  for i in range(w.shape[0])]
            bn = [graph.variable(f"b{li}_{i}") for i in range(b.shape[0])]
            self.weight_nodes.append(wn)
            self.bias_nodes.append(bn)
            for row in wn:
                self.param_nodes.extend(row)
            self.param_nodes.extend(bn)
        self.extra_raw_nodes = {}
        self.extra_nodes = {}
        for e in params.extras:
            raw = graph.variable(f"extra_{e.name}")
            self.extra_raw_nodes[e.name] = raw
            self.extra_nodes[e.name] = graph.exp(raw) if e.positive else raw
            self.param_nodes.append(raw)
        self.template = params
        self.set_flat(params.flatten())

    @property
    def n_params(self) -> int:
        return len(self.param_nodes)

    def set_flat(self, flat: np.ndarray):
        if len(flat) != len(self.param_nodes):
            raise ConfigError("flat vector length mismatch")
        for node, v in zip(self.param_nodes, flat):
            node.val = v

    def current_params(self) -> ParamVector:
        return self.template.with_flat(
            np.array([float(n.val) for n in self.param_nodes]))

    def outputs(self, x: graph.Node, y: graph.Node):
        """(u, v, p) expression graphs rooted at coordinate variables x, y."""
        acts = [x, y]
        n_layers = len(self.weight_nodes)
        for li in range(n_layers):
            wn, bn = self.weight_nodes[li], self.bias_nodes[li]
            pre = [graph.nsum([graph.mul(wij, a) for wij, a in zip(row, acts)] + [bi])
                   for row, bi in zip(wn, bn)]
            if li < n_layers - 1:
                acts = [graph.tanh(z) for z in pre]
            else:
                acts = pre
        if len(acts) != 3:
            raise ConfigError("flow network must have exactly 3 outputs")
        return acts[0], acts[1], acts[2]


def predict(params: ParamVector, x: np.ndarray, y: np.ndarray):
    """Evaluate the network at coordinate arrays, returning (u, v, p) arrays."""
    net = NetworkGraph(params)
    xv = graph.variable("x", np.asarray(x, dtype=float))
    yv = graph.variable("y", np.asarray(y, dtype=float))
    u, v, p = net.outputs(xv, yv)
    tape = graph.Tape([u, v, p])
    uu, vv, pp = tape.forward()
    shape = np.shape(x)
    return (np.broadcast_to(uu, shape).copy(),
            np.broadcast_to(vv, shape).copy(),
            np.broadcast_to(pp, shape).copy())


@dataclass
class OptimizerState:
    """Adaptive-moment (Adam) state: first/second moments plus step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, **hyper) -> "OptimizerState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), **hyper)


def adam_update(flat: np.ndarray, grad: np.ndarray, state: OptimizerState,
                lr: float) -> np.ndarray:
    """In-place-free Adam step on a flat parameter array; mutates ``state``."""
    if grad.shape != flat.shape:
        raise ConfigError("gradient length does not match parameter count")
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise EvaluationError(f"non-finite gradient entry at index {int(bad[0])}")
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    mhat = state.m / (1 - state.beta1 ** state.step)
    vhat = state.v / (1 - state.beta2 ** state.step)
    out = flat - lr * mhat / (np.sqrt(vhat) + state.eps)
    if not np.all(np.isfinite(out)):
        raise EvaluationError("optimizer step produced non-finite parameters")
    return out


def optimizer_step(params: ParamVector, grad: np.ndarray, state: OptimizerState,
                   lr: float):
    """One adaptive-moment update; returns (new params, same state object)."""
    flat = params.flatten()
    return params.with_flat(adam_update(flat, grad, state, lr)), state


def save_checkpoint(path, params: ParamVector, state: OptimizerState | None = None,
                    seed: int | None = None, meta: dict | None = None):
    """Binary checkpoint (npz container); round-trips bit-exactly."""
    payload = {"layer_sizes": np.array(params.layer_sizes, dtype=np.int64)}
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"w{k}"] = w
        payload[f"b{k}"] = b
    payload["extra_names"] = np.array([e.name for e in params.extras], dtype="U64")
    payload["extra_values"] = np.array([e.value for e in params.extras])
    payload["extra_positive"] = np.array([e.positive for e in params.extras])
    if state is not None:
        payload["opt_m"] = state.m
        payload["opt_v"] = state.v
        payload["opt_step"] = np.array(state.step, dtype=np.int64)
        payload["opt_hyper"] = np.array([state.beta1, state.beta2, state.eps])
    if seed is not None:
        payload["seed"] = np.array(seed, dtype=np.int64)
    if meta:
        for key, arr in meta.items():
            payload[f"meta_{key}"] = np.asarray(arr)
    np.savez(path, **payload)


def load_checkpoint(path):
    """Returns (ParamVector, OptimizerState | None, seed | None, meta dict)."""
    with np.load(path, allow_pickle=False) as z:
        sizes = tuple(int(s) for s in z["layer_sizes"])
        weights = [z[f"w{k}"] for k in range(len(sizes) - 1)]
        biases = [z[f"b{k}"] for k in range(len(sizes) - 1)]
        extras = [TrainableScalar(str(n), float(v), bool(p))
                  for n, v, p in zip(z["extra_names"], z["extra_values"],
                                     z["extra_positive"])]
        params = ParamVector(sizes, weights, biases, extras)
        state = None
        if "opt_m" in z:
            b1, b2, eps = z["opt_hyper"]
            state = OptimizerState(m=z["opt_m"], v=z["opt_v"],
                                   step=int(z["opt_step"]),
                                   beta1=float(b1), beta2=float(b2), eps=float(eps))
        seed = int(z["seed"]) if "seed" in z else None
        meta = {k[5:]: z[k] for k in z.files if k.startswith("meta_")}
    return params, state, seed, meta
