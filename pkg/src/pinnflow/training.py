"""Adaptive training strategy: gradient-balanced weights, warmup + cosine
restart learning-rate schedule, and the epoch loop tying them together."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import BalancingError, ConfigError, DivergenceError
from .losses import LossBreakdown
from .network import (DEFAULT_LAYER_SIZES, OptimizerState, adam_update,
                      init_glorot)
from .network import NetworkGraph
from .problems import Objective, ProblemSpec, assemble_objective


# -- learning-rate schedule -------------------------------------------------

@dataclass
class ScheduleState:
    """Position inside the chained warmup + cosine-restart schedule.

    After the warmup ramp, cycle ``i`` (starting at 1) spans positions
    ``t_cur`` = 0..T^i inclusive with T^i = 100 * 2^i, so the rate hits
    exactly lr_max at each cycle start and lr_min at each cycle end before
    restarting with a doubled period.
    """

    epoch: int = 0
    warmup_epochs: int = 10
    lr_min: float = 1e-7
    lr_max: float = 1e-3
    cycle: int = 1
    t_cur: int = 0

    def __post_init__(self):
        if not self.lr_min < self.lr_max:
            raise ConfigError("lr_min must be below lr_max")

    @property
    def cycle_length(self) -> int:
        return 100 * 2 ** self.cycle

    @property
    def in_warmup(self) -> bool:
        return self.epoch < self.warmup_epochs

    def step(self):
        """Advance one epoch, restarting the cycle when it completes."""
        self.epoch += 1
        if self.epoch <= self.warmup_epochs:
            return
        self.t_cur += 1
        if self.t_cur > self.cycle_length:
            self.cycle += 1
            self.t_cur = 0


def schedule_lr(state: ScheduleState) -> float:
    """Learning rate at the state's current position.

    Linear ramp lr_min -> lr_max over the warmup epochs, then
    lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi t/T)) within each cycle.
    """
    if state.in_warmup:
        frac = state.epoch / state.warmup_epochs
        return state.lr_min + (state.lr_max - state.lr_min) * frac
    spread = state.lr_max - state.lr_min
    return state.lr_min + 0.5 * spread * (
        1.0 + np.cos(np.pi * state.t_cur / state.cycle_length))


# -- adaptive loss weights --------------------------------------------------

@dataclass
class WeightState:
    """Current loss-term weights with EMA smoothing; w1 is pinned to 1."""

    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    alpha: float = 0.9   # EMA factor applied to the raw ratio
    period: int = 10     # update cadence in epochs

    def weights(self):
        return self.w1, self.w2, self.w3


def adaptive_weights(grad_le, grad_lf, grad_lb, prev: WeightState,
                     mode: str = "ratio_of_means") -> WeightState:
    """Rebalance w2/w3 from gradient magnitudes.

    ``ratio_of_means`` uses mean|grad_le| / mean|grad_lf|; ``elementwise``
    averages the per-parameter ratios instead.  ``grad_lb`` may be None when
    no boundary term is active (w3 is then left untouched).  A zero
    denominator raises :class:`BalancingError` so the caller can skip the
    update.
    """
    ge = np.abs(np.asarray(grad_le, dtype=float))
    gf = np.abs(np.asarray(grad_lf, dtype=float))
    if ge.shape != gf.shape:
        raise ConfigError("gradient arrays must share the parameter count")

    def raw_ratio(num, den, label):
        if mode == "ratio_of_means":
            m = den.mean()
            if m == 0.0:
                raise BalancingError(f"mean |grad {label}| is zero")
            return num.mean() / m
        if mode == "elementwise":
            if np.any(den == 0.0):
                raise BalancingError(f"zero entry in |grad {label}|")
            return float(np.mean(num / den))
        raise ConfigError(f"unknown weight mode {mode!r}")

    a = prev.alpha
    w2 = (1 - a) * prev.w2 + a * raw_ratio(ge, gf, "L_f")
    w3 = prev.w3
    if grad_lb is not None:
        gb = np.abs(np.asarray(grad_lb, dtype=float))
        w3 = (1 - a) * prev.w3 + a * raw_ratio(ge, gb, "L_b")
    if not (np.isfinite(w2) and np.isfinite(w3)):
        raise BalancingError("adaptive weight update produced a non-finite value")
    return WeightState(1.0, float(w2), float(w3), prev.alpha, prev.period)


# -- training loop ----------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int
    seed: int = 0
    layer_sizes: tuple = DEFAULT_LAYER_SIZES
    ablate: bool = False
    use_adaptive_weights: bool = True
    fixed_weights: tuple | None = None  # overrides adaptation when set
    weight_update_period: int = 10
    ema_alpha: float = 0.9
    initial_weights: tuple = (1.0, 1.0)  # (w2, w3) seeding the EMA state
    weight_mode: str = "ratio_of_means"
    lr_min: float = 1e-7
    lr_max: float = 1e-3
    warmup_epochs: int = 10
    fixed_lr: float | None = None  # bypass the schedule (debug/regression)
    chunk_size: int = 1250
    residual_batch: int | None = None  # minibatch resampling of residual points

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.warmup_epochs > self.epochs and self.epochs > 0:
            raise ConfigError("total epochs must cover the warmup")


@dataclass
class HistoryRow:
    epoch: int
    lr: float
    breakdown: LossBreakdown

    def as_tuple(self):
        b = self.breakdown
        return (self.epoch, self.lr, b.w1, b.w2, b.w3, b.l_e, b.l_f,
                b.l_b_in, b.l_b_out, b.l_b_wall, b.l_b_per, b.total)


HISTORY_COLUMNS = ("epoch", "lr", "w1", "w2", "w3", "loss_residual",
                   "loss_labeled", "loss_inlet", "loss_outlet", "loss_wall",
                   "loss_periodic", "loss_total")


def export_history(history, path):
    """Delimited text history: one row per epoch."""
    with open(path, "w") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in history:
            vals = row.as_tuple()
            fh.write("%d,%s\n" % (vals[0], ",".join("%.17g" % v for v in vals[1:])))


@dataclass
class TrainResult:
    params: object          # ParamVector
    history: list
    optimizer_state: OptimizerState
    weight_state: WeightState
    objective: Objective = None

    @property
    def final(self) -> LossBreakdown | None:
        return self.history[-1].breakdown if self.history else None


def train(spec: ProblemSpec, config: TrainConfig, progress=None) -> TrainResult:
    """Run the full training loop; identical seed/config/data reproduce the
    history bit-exactly.

    ``progress(epoch, lr, breakdown)`` is called once per epoch when given.
    """
    if config.ablate and not spec.ablate:
        spec = dataclasses.replace(spec, ablate=True)
    extras = [d.as_scalar() for d in spec.unknowns]
    params = init_glorot(config.layer_sizes, config.seed, extras=extras)
    net = NetworkGraph(params)
    obj = assemble_objective(spec, net, chunk_size=config.chunk_size)

    flat = params.flatten()
    opt = OptimizerState.fresh(len(flat))
    sched = ScheduleState(warmup_epochs=config.warmup_epochs,
                          lr_min=config.lr_min, lr_max=config.lr_max)
    w2_0, w3_0 = config.initial_weights
    ws = WeightState(w2=float(w2_0), w3=float(w3_0), alpha=config.ema_alpha,
                     period=config.weight_update_period)
    rng = np.random.default_rng(config.seed + 1)
    wrt = net.param_nodes
    history = []

    for epoch in range(config.epochs):
        net.set_flat(flat)
        if config.residual_batch and "residual" in obj.terms:
            obj.terms["residual"].resample(rng, config.residual_batch)
        vals, grads = {}, {}
        for name, term in obj.terms.items():
            v, g = term.value_and_grad(wrt)
            if not np.isfinite(v):
                raise DivergenceError(epoch, name)
            vals[name] = v
            grads[name] = g

        if config.ablate:
            weights = (0.0, 1.0, 1.0)
        elif config.fixed_weights is not None:
            weights = tuple(config.fixed_weights)
        else:
            if (config.use_adaptive_weights and "residual" in grads
                    and epoch % ws.period == 0):
                gb = None
                if obj.boundary_names:
                    gb = sum(grads[n] for n in obj.boundary_names)
                try:
                    ws = adaptive_weights(grads["residual"], grads["labeled"],
                                          gb, ws, mode=config.weight_mode)
                except BalancingError:
                    pass  # keep previous weights this round
            weights = ws.weights()

        breakdown = Objective.make_breakdown(vals, weights)
        if not np.isfinite(breakdown.total):
            raise DivergenceError(epoch, "total")
        lr = config.fixed_lr if config.fixed_lr is not None else schedule_lr(sched)
        history.append(HistoryRow(epoch, lr, breakdown))
        if progress is not None:
            progress(epoch, lr, breakdown)

        w1, w2, w3 = weights
        total_grad = w2 * grads["labeled"]
        if "residual" in grads and w1:
            total_grad = total_grad + w1 * grads["residual"]
        for nm in obj.boundary_names:
            total_grad = total_grad + w3 * grads[nm]
        flat = adam_update(flat, total_grad, opt, lr)
        sched.step()

    net.set_flat(flat)
    return TrainResult(params.with_flat(flat), history, opt, ws, obj)
