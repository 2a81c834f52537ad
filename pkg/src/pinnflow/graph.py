"""Expression-graph automatic differentiation engine.

Scalar-valued computation graphs with exact, repeatable differentiation.
``differentiate`` is a graph-to-graph transformation, so derivatives can be
nested (input second derivatives, then parameter gradients of expressions that
contain them).  Node values may be plain floats or 1-D numpy arrays: an array
value means the same scalar expression evaluated at a batch of points, with
every operation applied elementwise.  Reductions over the batch axis happen
only through the explicit ``mean`` node.

Graphs are acyclic by construction and immutable once built; evaluation caches
a value on each node.
"""

from __future__ import annotations

import numpy as np

from .errors import EvaluationError

# Operation kinds.
CONST = 0
VAR = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
NEG = 6
TANH = 7
EXP = 8
SIN = 9
COS = 10
POW = 11
SUMN = 12  # n-ary sum
MEAN = 13  # reduction over the batch axis

_OP_NAMES = {
    CONST: "const", VAR: "var", ADD: "add", SUB: "sub", MUL: "mul",
    DIV: "div", NEG: "neg", TANH: "tanh", EXP: "exp", SIN: "sin",
    COS: "cos", POW: "pow", SUMN: "sum", MEAN: "mean",
}


class Node:
    """One operation in an expression graph.

    ``val`` caches the most recent evaluation result.  For ``CONST`` nodes it
    is fixed at construction; for ``VAR`` nodes it is whatever was last bound
    via :meth:`bind`.
    """

    __slots__ = ("op", "args", "val", "name", "exponent")

    def __init__(self, op, args=(), val=None, name=None, exponent=None):
        self.op = op
        self.args = args
        self.val = val
        self.name = name
        self.exponent = exponent

    def bind(self, value):
        if self.op != VAR:
            raise EvaluationError(f"cannot bind a value to a {_OP_NAMES[self.op]} node")
        self.val = value

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, as_node(other))

    def __radd__(self, other):
        return add(as_node(other), self)

    def __sub__(self, other):
        return sub(self, as_node(other))

    def __rsub__(self, other):
        return sub(as_node(other), self)

    def __mul__(self, other):
        return mul(self, as_node(other))

    def __rmul__(self, other):
        return mul(as_node(other), self)

    def __truediv__(self, other):
        return div(self, as_node(other))

    def __rtruediv__(self, other):
        return div(as_node(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __repr__(self):
        tag = _OP_NAMES.get(self.op, "?")
        if self.name is not None:
            return f"<Node {tag} {self.name!r}>"
        if self.op == CONST:
            return f"<Node const {self.val!r}>"
        return f"<Node {tag}>"


def constant(value):
    return Node(CONST, val=value)


def variable(name, value=None):
    return Node(VAR, name=name, val=value)


ZERO = constant(0.0)
ONE = constant(1.0)


def as_node(x):
    if isinstance(x, Node):
        return x
    return constant(float(x))


def _is_zero(n):
    return n.op == CONST and np.ndim(n.val) == 0 and n.val == 0.0


def _is_one(n):
    return n.op == CONST and np.ndim(n.val) == 0 and n.val == 1.0


def _both_const(a, b):
    return a.op == CONST and b.op == CONST


# -- simplifying constructors ---------------------------------------------
# Folding constants and dropping zero/one operands keeps derivative graphs
# from ballooning: most tangents of a network graph are structurally zero.

def add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if _both_const(a, b):
        return constant(a.val + b.val)
    return Node(ADD, (a, b))


def sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return neg(b)
    if _both_const(a, b):
        return constant(a.val - b.val)
    return Node(SUB, (a, b))


def mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return ZERO
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if _both_const(a, b):
        return constant(a.val * b.val)
    return Node(MUL, (a, b))


def div(a, b):
    if _is_one(b):
        return a
    if _is_zero(a):
        return ZERO
    if _both_const(a, b):
        if np.any(b.val == 0):
            raise EvaluationError("division by zero in constant fold")
        return constant(a.val / b.val)
    return Node(DIV, (a, b))


def neg(a):
    if a.op == CONST:
        return constant(-a.val)
    if a.op == NEG:
        return a.args[0]
    return Node(NEG, (a,))


def tanh(a):
    if a.op == CONST:
        return constant(np.tanh(a.val))
    return Node(TANH, (a,))


def exp(a):
    if a.op == CONST:
        return constant(np.exp(a.val))
    return Node(EXP, (a,))


def sin(a):
    if a.op == CONST:
        return constant(np.sin(a.val))
    return Node(SIN, (a,))


def cos(a):
    if a.op == CONST:
        return constant(np.cos(a.val))
    return Node(COS, (a,))


def power(a, exponent):
    if exponent != int(exponent):
        raise EvaluationError("power supports integer exponents only")
    exponent = int(exponent)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return a
    if a.op == CONST:
        return constant(a.val ** exponent)
    return Node(POW, (a,), exponent=exponent)


def nsum(terms):
    """Sum of arbitrarily many nodes, with constants folded together."""
    live = []
    const_acc = 0.0
    has_const = False
    for t in terms:
        if t.op == CONST:
            const_acc = const_acc + t.val
            has_const = True
        elif not _is_zero(t):
            live.append(t)
    if has_const and np.any(const_acc != 0.0):
        live.append(constant(const_acc))
    if not live:
        return ZERO
    if len(live) == 1:
        return live[0]
    if len(live) == 2:
        return Node(ADD, tuple(live))
    return Node(SUMN, tuple(live))


def mean(a):
    if a.op == CONST and np.ndim(a.val) == 0:
        return a
    return Node(MEAN, (a,))


# -- traversal -------------------------------------------------------------

def topo_order(roots):
    """All nodes reachable from ``roots`` in dependency order (leaves first)."""
    order = []
    seen = set()
    stack = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        key = id(node)
        if key in seen:
            continue
        seen.add(key)
        stack.append((node, True))
        for a in node.args:
            if id(a) not in seen:
                stack.append((a, False))
    return order


def _compute(n):
    op = n.op
    a = n.args
    if op == ADD:
        n.val = a[0].val + a[1].val
    elif op == MUL:
        n.val = a[0].val * a[1].val
    elif op == SUB:
        n.val = a[0].val - a[1].val
    elif op == SUMN:
        acc = a[0].val + a[1].val
        for t in a[2:]:
            acc = acc + t.val
        n.val = acc
    elif op == TANH:
        n.val = np.tanh(a[0].val)
    elif op == DIV:
        d = a[1].val
        if np.any(d == 0):
            raise EvaluationError(f"division by zero while evaluating {n!r}")
        n.val = a[0].val / d
    elif op == NEG:
        n.val = -a[0].val
    elif op == EXP:
        n.val = np.exp(a[0].val)
    elif op == SIN:
        n.val = np.sin(a[0].val)
    elif op == COS:
        n.val = np.cos(a[0].val)
    elif op == POW:
        n.val = a[0].val ** n.exponent
    elif op == MEAN:
        n.val = np.mean(a[0].val)
    elif op == VAR:
        if n.val is None:
            raise EvaluationError(f"unbound variable {n.name!r}")
    # CONST: nothing to do


def evaluate(root, env=None):
    """Evaluate a graph, returning the root's value.

    ``env`` optionally maps variable name to value and is bound before the
    sweep.  Values are cached on the nodes.
    """
    if env:
        for n in topo_order([root]):
            if n.op == VAR and n.name in env:
                n.val = env[n.name]
    for n in topo_order([root]):
        if n.op not in (CONST, VAR):
            _compute(n)
        elif n.op == VAR and n.val is None:
            raise EvaluationError(f"unbound variable {n.name!r}")
    return root.val


class Tape:
    """Pre-ordered evaluation plan over one or more graph roots.

    The topological order is compiled once into index-based instruction
    lists, so replaying it (training epochs) avoids graph traversal and node
    attribute access.  ``backward`` runs a numeric reverse sweep using the
    values of the latest ``forward``.
    """

    def __init__(self, roots):
        if isinstance(roots, Node):
            roots = [roots]
        self.roots = list(roots)
        self.order = topo_order(self.roots)
        index = {id(n): i for i, n in enumerate(self.order)}
        self.vals = [None] * len(self.order)
        self._leaves = []
        plan = []
        for i, n in enumerate(self.order):
            op = n.op
            if op == CONST:
                self.vals[i] = n.val
            elif op == VAR:
                if n.val is None:
                    raise EvaluationError(f"unbound variable {n.name!r} on tape")
                self._leaves.append((i, n))
            elif op == SUMN:
                plan.append((op, i, tuple(index[id(a)] for a in n.args), 0))
            elif op == POW:
                plan.append((op, i, index[id(n.args[0])], n.exponent))
            elif len(n.args) == 1:
                plan.append((op, i, index[id(n.args[0])], 0))
            else:
                plan.append((op, i, index[id(n.args[0])], index[id(n.args[1])]))
        self.plan = plan
        self._root_ix = [index[id(r)] for r in self.roots]
        self._index = index
        self._scalar = None  # per-slot "value is scalar" flags, set on forward

    def forward(self):
        vals = self.vals
        for i, n in self._leaves:
            vals[i] = n.val
        for op, i, ia, ib in self.plan:
            if op == MUL:
                vals[i] = vals[ia] * vals[ib]
            elif op == ADD:
                vals[i] = vals[ia] + vals[ib]
            elif op == SUMN:
                it = iter(ia)
                acc = vals[next(it)]
                for j in it:
                    acc = acc + vals[j]
                vals[i] = acc
            elif op == TANH:
                vals[i] = np.tanh(vals[ia])
            elif op == SUB:
                vals[i] = vals[ia] - vals[ib]
            elif op == MEAN:
                vals[i] = np.mean(vals[ia])
            elif op == NEG:
                vals[i] = -vals[ia]
            elif op == DIV:
                d = vals[ib]
                if np.any(d == 0):
                    raise EvaluationError(
                        f"division by zero while evaluating {self.order[i]!r}")
                vals[i] = vals[ia] / d
            elif op == EXP:
                vals[i] = np.exp(vals[ia])
            elif op == SIN:
                vals[i] = np.sin(vals[ia])
            elif op == COS:
                vals[i] = np.cos(vals[ia])
            else:  # POW
                vals[i] = vals[ia] ** ib
        if self._scalar is None:
            self._scalar = [not isinstance(v, np.ndarray) for v in vals]
        for r, i in zip(self.roots, self._root_ix):
            r.val = vals[i]
        if len(self.roots) == 1:
            return self.vals[self._root_ix[0]]
        return [self.vals[i] for i in self._root_ix]

    def backward(self, wrt, root=None):
        """Adjoints of a scalar-valued root with respect to ``wrt`` variables.

        Assumes ``forward`` has run.  Returns a flat float array aligned with
        ``wrt``.  Array-valued adjoint contributions are reduced (summed)
        when they hit a scalar-valued node, which is exactly the broadcast
        rule for a parameter shared across batch points.
        """
        vals = self.vals
        scal = self._scalar
        if scal is None:
            raise EvaluationError("backward requires a prior forward")
        root_ix = self._root_ix[0] if root is None else self._index[id(root)]
        if not scal[root_ix]:
            raise EvaluationError("backward requires a scalar-valued root")
        adj = [None] * len(self.order)
        adj[root_ix] = 1.0
        isarr = np.ndarray

        def acc(j, contrib):
            if scal[j] and type(contrib) is isarr:
                contrib = contrib.sum()
            prev = adj[j]
            adj[j] = contrib if prev is None else prev + contrib

        for op, i, ia, ib in reversed(self.plan):
            if i > root_ix:
                continue
            g = adj[i]
            if g is None:
                continue
            if op == MUL:
                acc(ia, g * vals[ib])
                acc(ib, g * vals[ia])
            elif op == ADD:
                acc(ia, g)
                acc(ib, g)
            elif op == SUMN:
                for j in ia:
                    acc(j, g)
            elif op == TANH:
                t = vals[i]
                acc(ia, g * (1.0 - t * t))
            elif op == SUB:
                acc(ia, g)
                acc(ib, -g)
            elif op == MEAN:
                acc(ia, g / np.size(vals[ia]))
            elif op == NEG:
                acc(ia, -g)
            elif op == DIV:
                acc(ia, g / vals[ib])
                acc(ib, -g * vals[i] / vals[ib])
            elif op == EXP:
                acc(ia, g * vals[i])
            elif op == SIN:
                acc(ia, g * np.cos(vals[ia]))
            elif op == COS:
                acc(ia, -g * np.sin(vals[ia]))
            else:  # POW
                acc(ia, g * ib * vals[ia] ** (ib - 1))
        out = np.empty(len(wrt))
        for k, v in enumerate(wrt):
            j = self._index.get(id(v))
            entry = 0.0 if j is None else adj[j]
            if entry is None:
                entry = 0.0
            elif type(entry) is isarr:
                entry = entry.sum()
            out[k] = entry
        bad = np.flatnonzero(~np.isfinite(out))
        if bad.size:
            raise EvaluationError(
                f"non-finite gradient for parameter index {int(bad[0])}"
            )
        return out


def differentiate(output, wrt, cache=None):
    """Derivative of ``output`` with respect to variable ``wrt``, as a graph.

    The result is an ordinary expression graph, so it can be differentiated
    again (forward-over-forward for nested input derivatives, or fed to
    ``Tape.backward`` for parameter gradients).  If ``wrt`` does not appear in
    ``output`` the zero-constant graph is returned.

    ``cache`` maps (node id, variable id) -> tangent node and may be shared
    across calls (any mix of variables); sharing it lets second derivatives
    and sibling expressions reuse tangent subgraphs.
    """
    if wrt.op != VAR:
        raise EvaluationError("differentiate requires a variable node for wrt")
    wid = id(wrt)
    raw = cache if cache is not None else {}

    class _View:
        __slots__ = ()

        def __contains__(self, k):
            return (k, wid) in raw

        def __getitem__(self, k):
            return raw[(k, wid)]

        def __setitem__(self, k, v):
            raw[(k, wid)] = v

    tz = _View()
    for n in topo_order([output]):
        key = id(n)
        if key in tz:
            continue
        op = n.op
        if op == CONST:
            tz[key] = ZERO
        elif op == VAR:
            tz[key] = ONE if n is wrt else ZERO
        else:
            a = n.args
            if op == ADD:
                t = add(tz[id(a[0])], tz[id(a[1])])
            elif op == SUB:
                t = sub(tz[id(a[0])], tz[id(a[1])])
            elif op == MUL:
                t = add(mul(tz[id(a[0])], a[1]), mul(a[0], tz[id(a[1])]))
            elif op == DIV:
                ta, tb = tz[id(a[0])], tz[id(a[1])]
                t = div(ta, a[1])
                if not _is_zero(tb):
                    t = sub(t, div(mul(n, tb), a[1]))
            elif op == NEG:
                t = neg(tz[id(a[0])])
            elif op == TANH:
                # d tanh(z) = (1 - tanh(z)^2) dz, reusing the tanh node itself
                t = mul(sub(ONE, mul(n, n)), tz[id(a[0])])
            elif op == EXP:
                t = mul(n, tz[id(a[0])])
            elif op == SIN:
                t = mul(cos(a[0]), tz[id(a[0])])
            elif op == COS:
                t = neg(mul(sin(a[0]), tz[id(a[0])]))
            elif op == POW:
                t = mul(mul(constant(float(n.exponent)),
                            power(a[0], n.exponent - 1)), tz[id(a[0])])
            elif op == SUMN:
                t = nsum([tz[id(x)] for x in a])
            elif op == MEAN:
                t = mean(tz[id(a[0])])
            else:  # pragma: no cover
                raise EvaluationError(f"cannot differentiate op {_OP_NAMES[op]}")
            tz[key] = t
    return tz[id(output)]


def gradient(output, wrt):
    """Flat array of d(output)/d(v) for each variable ``v`` in ``wrt``.

    ``output`` must be scalar-valued.  Convenience wrapper over a one-shot
    :class:`Tape`; training loops hold persistent tapes instead.
    """
    tape = Tape([output])
    tape.forward()
    return tape.backward(list(wrt))
