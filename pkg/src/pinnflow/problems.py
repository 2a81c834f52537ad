"""Forward/inverse problem definitions and objective assembly.

A :class:`ProblemSpec` binds a dataset bundle, the active loss terms, fluid
constants and any extra trainable unknowns.  ``assemble_objective`` turns a
validated spec plus a network graph into evaluatable loss terms that all share
the network's parameter nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import graph, losses
from .data import DatasetBundle
from .errors import ConfigError
from .network import NetworkGraph, TrainableScalar
from .physics import FluidConstants, ns_residual

BOUNDARY_NAMES = ("inlet", "outlet", "wall", "periodic")

#: term name -> LossBreakdown slot
TERM_SLOTS = {"residual": "l_e", "labeled": "l_f", "inlet": "l_b_in",
              "outlet": "l_b_out", "wall": "l_b_wall", "periodic": "l_b_per"}


@dataclass(frozen=True)
class UnknownDecl:
    """Extra trainable unknown: physical initial value plus positivity flag."""

    name: str
    initial: float
    positive: bool = False

    def as_scalar(self) -> TrainableScalar:
        raw = float(np.log(self.initial)) if self.positive else float(self.initial)
        return TrainableScalar(self.name, raw, self.positive)


@dataclass
class ProblemSpec:
    mode: str
    bundle: DatasetBundle
    constants: FluidConstants
    active_boundaries: frozenset | None = None  # None: derive from mode/data
    unknowns: list = field(default_factory=list)
    ablate: bool = False
    periodic_pressure: bool = False
    wall_velocity_in_inverse: bool = False
    paper_viscous_sign: bool = False
    nu_eff_unknown: str | None = None  # unknown name used as effective viscosity

    def resolved_boundaries(self) -> frozenset:
        if self.active_boundaries is not None:
            return frozenset(self.active_boundaries)
        if self.mode == "forward":
            present = [n for n in BOUNDARY_NAMES
                       if _boundary_size(self.bundle, n) > 0]
            return frozenset(present)
        if self.wall_velocity_in_inverse and self.bundle.wall.n > 0:
            return frozenset({"wall"})
        return frozenset()


def _boundary_size(bundle: DatasetBundle, name: str) -> int:
    if name == "periodic":
        return bundle.periodic.n
    return getattr(bundle, name).n


def validate(spec: ProblemSpec) -> list:
    """Structural checks; returns a list of error strings (empty when valid)."""
    errors = []
    if spec.mode not in ("forward", "inverse"):
        errors.append(f"unknown mode {spec.mode!r}; use 'forward' or 'inverse'")
        return errors
    b = spec.bundle
    if b.residual.n == 0 and not spec.ablate:
        errors.append("no residual points; supply residual points or set the "
                      "ablation flag for a data-only network")
    if b.labeled.n == 0:
        errors.append("no labeled points; every problem needs labeled data "
                      "for the prediction loss")
    else:
        covered = b.labeled.mask_u | b.labeled.mask_v | b.labeled.mask_p
        if not covered.all():
            errors.append("labeled set has points with no available field; "
                          "drop them or fix the masks")
    active = spec.resolved_boundaries()
    if spec.mode == "forward":
        if b.inlet.n == 0:
            errors.append("forward mode needs a non-empty inlet set carrying "
                          "the imposed inlet velocity components")
        if b.outlet.n == 0:
            errors.append("forward mode needs a non-empty outlet set carrying "
                          "the imposed outlet pressure")
        for name in active:
            if _boundary_size(b, name) == 0:
                errors.append(f"boundary term '{name}' is active but its point "
                              "set is empty; deactivate it or supply points")
    if b.inlet.n and (b.inlet.u is None or b.inlet.v is None
                      or not (b.inlet.mask_u.all() and b.inlet.mask_v.all())):
        errors.append("inlet set lacks velocity labels; the inlet loss "
                      "constrains (u, v) to imposed values")
    if b.outlet.n and (b.outlet.p is None or not b.outlet.mask_p.all()):
        errors.append("outlet set lacks pressure labels; the outlet loss "
                      "constrains p to the imposed value")
    seen = set()
    for decl in spec.unknowns:
        if decl.name in seen:
            errors.append(f"duplicate unknown name {decl.name!r}")
        seen.add(decl.name)
        if decl.positive and decl.initial <= 0:
            errors.append(f"unknown {decl.name!r} is flagged positive but its "
                          f"initial value is {decl.initial}; start it > 0")
    if spec.nu_eff_unknown is not None and spec.nu_eff_unknown not in seen:
        errors.append(f"nu_eff unknown {spec.nu_eff_unknown!r} is not declared")
    return errors


class Term:
    """One evaluatable loss term backed by a compiled tape."""

    def __init__(self, name: str, root: graph.Node):
        self.name = name
        self.root = root
        self.tape = graph.Tape([root])

    def value(self) -> float:
        return float(self.tape.forward())

    def value_and_grad(self, wrt):
        v = float(self.tape.forward())
        return v, self.tape.backward(wrt)


class ChunkedResidualTerm:
    """Residual loss evaluated chunkwise over the collocation points.

    The graph is built once over coordinate variables; each chunk rebinds the
    variables and reruns the tape, keeping peak memory proportional to the
    chunk size instead of the full point count.  The chunk reduction order is
    fixed, so results are deterministic.
    """

    def __init__(self, name, model, points, constants, nu_node=None,
                 paper_viscous_sign=False, chunk_size=1250):
        if points.n == 0:
            raise ConfigError("residual term needs a non-empty point set")
        self.name = name
        self.x = graph.variable("rx")
        self.y = graph.variable("ry")
        self.nu_var = None
        if nu_node is None and points.nu_eff is not None:
            self.nu_var = nu_node = graph.variable("rnu")
        u, v, p = model.outputs(self.x, self.y)
        triple = ns_residual(u, v, p, self.x, self.y, constants, nu_eff=nu_node,
                             paper_viscous_sign=paper_viscous_sign)
        fm, fx, fy = triple.components()
        self.root = graph.mean(graph.nsum(
            [graph.mul(fm, fm), graph.mul(fx, fx), graph.mul(fy, fy)]))
        n_chunks = max(1, -(-points.n // chunk_size))
        xs = np.array_split(points.x, n_chunks)
        ys = np.array_split(points.y, n_chunks)
        nus = (np.array_split(points.nu_eff, n_chunks) if self.nu_var is not None
               else [None] * n_chunks)
        self.chunks = [(xa, ya, na, len(xa) / points.n)
                       for xa, ya, na in zip(xs, ys, nus)]
        self._full = (points.x, points.y, points.nu_eff)
        self._bind(*self.chunks[0][:3])
        self.tape = graph.Tape([self.root])

    def resample(self, rng, n: int):
        """Minibatch mode: draw n collocation points for the next evaluation."""
        xs, ys, nus = self._full
        idx = rng.choice(len(xs), size=min(n, len(xs)), replace=False)
        na = nus[idx] if (nus is not None and self.nu_var is not None) else None
        self.chunks = [(xs[idx], ys[idx], na, 1.0)]

    def _bind(self, xa, ya, na):
        self.x.val = xa
        self.y.val = ya
        if self.nu_var is not None:
            self.nu_var.val = na

    def value(self) -> float:
        acc = 0.0
        for xa, ya, na, w in self.chunks:
            self._bind(xa, ya, na)
            acc += w * float(self.tape.forward())
        return acc

    def value_and_grad(self, wrt):
        acc = 0.0
        grad = np.zeros(len(wrt))
        for xa, ya, na, w in self.chunks:
            self._bind(xa, ya, na)
            acc += w * float(self.tape.forward())
            grad += w * self.tape.backward(wrt)
        return acc, grad


class Objective:
    """Active loss terms of one problem, sharing a single network graph."""

    def __init__(self, spec: ProblemSpec, net: NetworkGraph, terms: dict):
        self.spec = spec
        self.net = net
        self.terms = terms  # name -> Term-like, insertion-ordered
        self.boundary_names = [n for n in BOUNDARY_NAMES if n in terms]

    @property
    def roots(self) -> dict:
        return {name: t.root for name, t in self.terms.items()}

    def term_values(self) -> dict:
        return {name: t.value() for name, t in self.terms.items()}

    def breakdown(self, weights) -> losses.LossBreakdown:
        vals = self.term_values()
        return self.make_breakdown(vals, weights)

    @staticmethod
    def make_breakdown(vals: dict, weights) -> losses.LossBreakdown:
        w1, w2, w3 = weights
        return losses.LossBreakdown(
            l_e=vals.get("residual", 0.0), l_f=vals.get("labeled", 0.0),
            l_b_in=vals.get("inlet", 0.0), l_b_out=vals.get("outlet", 0.0),
            l_b_wall=vals.get("wall", 0.0), l_b_per=vals.get("periodic", 0.0),
            w1=w1, w2=w2, w3=w3)


def assemble_objective(spec: ProblemSpec, net: NetworkGraph,
                       chunk_size: int = 1250) -> Objective:
    """Build the active loss terms for a validated problem."""
    errors = validate(spec)
    if errors:
        raise ConfigError("invalid problem spec: " + "; ".join(errors))
    b = spec.bundle
    terms = {}
    if not spec.ablate:
        nu_node = None
        if spec.nu_eff_unknown is not None:
            nu_node = net.extra_nodes[spec.nu_eff_unknown]
        terms["residual"] = ChunkedResidualTerm(
            "residual", net, b.residual, spec.constants, nu_node=nu_node,
            paper_viscous_sign=spec.paper_viscous_sign, chunk_size=chunk_size)
    terms["labeled"] = Term("labeled", losses.labeled_loss(net, b.labeled))
    active = spec.resolved_boundaries()
    l_in, l_out, l_wall, l_per = losses.boundary_losses(
        net,
        b.inlet if "inlet" in active else b.inlet.subset(slice(0, 0)),
        b.outlet if "outlet" in active else b.outlet.subset(slice(0, 0)),
        b.wall if "wall" in active else b.wall.subset(slice(0, 0)),
        b.periodic if "periodic" in active else _empty_pairs(),
        periodic_pressure=spec.periodic_pressure)
    for name, root in (("inlet", l_in), ("outlet", l_out),
                       ("wall", l_wall), ("periodic", l_per)):
        if name in active and _boundary_size(b, name) > 0:
            terms[name] = Term(name, root)
    return Objective(spec, net, terms)


def _empty_pairs():
    from .data import empty_pairs
    return empty_pairs()
