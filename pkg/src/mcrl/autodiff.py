"""Reverse-mode automatic differentiation on dense float64 arrays.

The engine is a define-by-run tape: every primitive produces a `Node`
holding its value, the primitive kind, and references to its parents.
``backward`` walks the graph once in reverse topological order and
accumulates vector-Jacobian products. Each primitive's backward rule is
written against a small backend protocol with two implementations, one
that works on raw numpy arrays (fast path) and one that builds new Nodes
out of the same primitives. The second is what ``create_graph=True``
uses: the returned gradients are themselves differentiable Nodes, so a
second backward pass yields mixed second derivatives such as the
derivative of a gradient step with respect to parameters of the loss
that produced it.

Everything is float64. Accumulation order is fixed by the deterministic
topological sort, so repeated backward passes over the same graph are
bit-identical. Sampling primitives take their noise as an explicit
argument; this module owns no RNG state.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64
LOG_2PI = math.log(2.0 * math.pi)
SQUASH_EPS = 1e-9


class AutodiffError(Exception):
    """Base class for graph construction and backward errors."""


class ShapeError(AutodiffError):
    """Operand shapes incompatible for a primitive."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(map(str, shapes))}")


class NanGradientError(AutodiffError):
    """A NaN appeared in the gradient flowing out of a primitive."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"NaN gradient produced at primitive '{op}'")


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=DTYPE)


class Node:
    """One value in the computation graph.

    ``grad`` is filled in by :func:`backward` for the nodes it was asked
    to differentiate with respect to. It holds a raw array normally, or
    another Node when the backward pass ran with ``create_graph=True``,
    in which case the gradient is itself differentiable.
    """

    __slots__ = ("op", "value", "parents", "requires_grad", "attrs", "grad")

    def __init__(self, op: str, value: np.ndarray, parents: tuple = (),
                 attrs: tuple = (), requires_grad: bool | None = None):
        self.op = op
        self.value = value
        self.parents = parents
        self.attrs = attrs
        if requires_grad is None:
            requires_grad = False
            for p in parents:
                if p.requires_grad:
                    requires_grad = True
                    break
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape}, requires_grad={self.requires_grad})"


class Variable:
    """A named leaf Node whose value can be replaced (shape is fixed)."""

    __slots__ = ("node", "name")

    def __init__(self, value, name: str = ""):
        self.node = Node("leaf", _arr(value), (), (), requires_grad=True)
        self.name = name

    @property
    def value(self) -> np.ndarray:
        return self.node.value

    @property
    def grad(self):
        return self.node.grad

    @property
    def shape(self):
        return self.node.value.shape

    def set_value(self, value) -> None:
        v = _arr(value)
        if v.shape != self.node.value.shape:
            raise ShapeError("set_value", self.node.value.shape, v.shape)
        self.node.value = v

    def __repr__(self):
        return f"Variable({self.name!r}, shape={self.shape})"


def constant(value) -> Node:
    """Wrap an array as a non-differentiable leaf."""
    return Node("const", _arr(value), (), (), requires_grad=False)


def as_node(x) -> Node:
    t = type(x)
    if t is Node:
        return x
    if t is Variable:
        return x.node
    return constant(x)


def evaluate(expr) -> np.ndarray:
    """Numeric value of an expression; does not touch graph structure."""
    return as_node(expr).value


def detach(x) -> Node:
    """A constant view of x's value: backward through it contributes zero."""
    return Node("const", as_node(x).value, (), (), requires_grad=False)


# ---------------------------------------------------------------------------
# forward primitives
# ---------------------------------------------------------------------------

_mk = Node


def _binary_shapes_ok(a: np.ndarray, b: np.ndarray) -> bool:
    # supported: equal shapes, either side scalar, and row-broadcast
    # (N, D) op (D,). Anything else is rejected rather than silently
    # numpy-broadcast.
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return True
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return True
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return True
    if a.ndim == 2 and b.ndim == 2 and a.shape[0] == b.shape[0] and (a.shape[1] == 1 or b.shape[1] == 1):
        return True
    return False


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.shape != bv.shape and not _binary_shapes_ok(av, bv):
        raise ShapeError("add", av.shape, bv.shape)
    return _mk("add", av + bv, (a, b))


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.shape != bv.shape and not _binary_shapes_ok(av, bv):
        raise ShapeError("sub", av.shape, bv.shape)
    return _mk("sub", av - bv, (a, b))


def neg(a) -> Node:
    a = as_node(a)
    return _mk("neg", -a.value, (a,))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.shape != bv.shape and not _binary_shapes_ok(av, bv):
        raise ShapeError("mul", av.shape, bv.shape)
    return _mk("mul", av * bv, (a, b))


def scale(a, c: float) -> Node:
    """Multiply by a python scalar constant (kept out of the graph)."""
    a = as_node(a)
    return _mk("scale", a.value * c, (a,), (float(c),))


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError("matmul", av.shape, bv.shape)
    return _mk("matmul", av @ bv, (a, b))


def affine(x, w, b) -> Node:
    """Row-wise affine map x @ w + b for x (N, I), w (I, O), b (O,)."""
    x, w, b = as_node(x), as_node(w), as_node(b)
    xv, wv, bv = x.value, w.value, b.value
    if (xv.ndim != 2 or wv.ndim != 2 or bv.ndim != 1
            or xv.shape[1] != wv.shape[0] or wv.shape[1] != bv.shape[0]):
        raise ShapeError("affine", xv.shape, wv.shape, bv.shape)
    return _mk("affine", xv @ wv + bv, (x, w, b))


def relu(a) -> Node:
    a = as_node(a)
    return _mk("relu", np.maximum(a.value, 0.0), (a,))


def tanh(a) -> Node:
    a = as_node(a)
    return _mk("tanh", np.tanh(a.value), (a,))


def sigmoid(a) -> Node:
    a = as_node(a)
    # 0.5*(1+tanh(x/2)) is overflow-free for large |x|
    return _mk("sigmoid", 0.5 * (1.0 + np.tanh(0.5 * a.value)), (a,))


def softplus(a) -> Node:
    a = as_node(a)
    return _mk("softplus", np.logaddexp(0.0, a.value), (a,))


def exp(a) -> Node:
    a = as_node(a)
    return _mk("exp", np.exp(a.value), (a,))


def log(a) -> Node:
    a = as_node(a)
    return _mk("log", np.log(a.value), (a,))


def square(a) -> Node:
    a = as_node(a)
    return _mk("square", a.value * a.value, (a,))


def power(a, p: float) -> Node:
    a = as_node(a)
    return _mk("power", a.value ** p, (a,), (float(p),))


def absval(a) -> Node:
    a = as_node(a)
    return _mk("absval", np.abs(a.value), (a,))


def minimum(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.shape != b.value.shape:
        raise ShapeError("minimum", a.value.shape, b.value.shape)
    return _mk("minimum", np.minimum(a.value, b.value), (a, b))


def clip(a, lo: float, hi: float) -> Node:
    """Clamp to [lo, hi]; gradient passes only where lo < x < hi holds."""
    a = as_node(a)
    return _mk("clip", np.clip(a.value, lo, hi), (a,), (float(lo), float(hi)))


def asum(a) -> Node:
    """Sum of all elements, scalar result."""
    a = as_node(a)
    return _mk("asum", np.asarray(a.value.sum(), dtype=DTYPE), (a,))


def sum_axis0(a) -> Node:
    a = as_node(a)
    if a.value.ndim != 2:
        raise ShapeError("sum_axis0", a.value.shape)
    return _mk("sum_axis0", a.value.sum(axis=0), (a,))


def sum_axis1(a) -> Node:
    """Row sums of an (N, D) array, keeping the column axis: result (N, 1)."""
    a = as_node(a)
    if a.value.ndim != 2:
        raise ShapeError("sum_axis1", a.value.shape)
    return _mk("sum_axis1", a.value.sum(axis=1, keepdims=True), (a,))


def mean(a) -> Node:
    """Mean of all elements (batch reduction)."""
    a = as_node(a)
    return scale(asum(a), 1.0 / a.value.size)


def broadcast(a, shape: tuple) -> Node:
    a = as_node(a)
    try:
        v = np.broadcast_to(a.value, shape)
    except ValueError:
        raise ShapeError("broadcast", a.value.shape, shape) from None
    return _mk("broadcast", v, (a,), (tuple(shape),))


def _np_sum_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gs, s) in enumerate(zip(g.shape, shape)):
        if s == 1 and gs != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def sum_to(a, shape: tuple) -> Node:
    """Reduce-sum down to a broadcast-compatible smaller shape."""
    a = as_node(a)
    return _mk("sum_to", _np_sum_to(a.value, tuple(shape)), (a,), (tuple(shape),))


def concat(parts: Sequence, ) -> Node:
    """Concatenate (N, D_i) blocks along axis 1."""
    nodes = [as_node(p) for p in parts]
    n0 = nodes[0].value.shape[0]
    for nd in nodes:
        if nd.value.ndim != 2 or nd.value.shape[0] != n0:
            raise ShapeError("concat", *(x.value.shape for x in nodes))
    offs = []
    o = 0
    for nd in nodes:
        offs.append(o)
        o += nd.value.shape[1]
    return _mk("concat", np.concatenate([nd.value for nd in nodes], axis=1),
               tuple(nodes), (tuple(offs), o))


def slice_cols(a, i0: int, i1: int) -> Node:
    a = as_node(a)
    if a.value.ndim != 2 or not (0 <= i0 <= i1 <= a.value.shape[1]):
        raise ShapeError("slice_cols", a.value.shape, (i0, i1))
    return _mk("slice_cols", a.value[:, i0:i1], (a,), (int(i0), int(i1)))


def pad_cols(a, i0: int, total: int) -> Node:
    """Embed an (N, D) block into (N, total) zeros starting at column i0."""
    a = as_node(a)
    v = np.zeros((a.value.shape[0], total), dtype=DTYPE)
    v[:, i0:i0 + a.value.shape[1]] = a.value
    return _mk("pad_cols", v, (a,), (int(i0), int(total)))


def transpose(a) -> Node:
    a = as_node(a)
    if a.value.ndim != 2:
        raise ShapeError("transpose", a.value.shape)
    return _mk("transpose", a.value.T, (a,))


# ---------------------------------------------------------------------------
# stochastic / density compositions (noise is always an explicit input)
# ---------------------------------------------------------------------------

def gaussian_sample(mean_, log_std, noise) -> Node:
    """Reparameterized draw mean + exp(log_std) * noise; deterministic in its inputs."""
    return add(mean_, mul(exp(log_std), as_node(noise)))


def gaussian_log_density(x, mean_, log_std) -> Node:
    """Row-wise diagonal-gaussian log density, shape (N, 1)."""
    z = mul(sub(as_node(x), mean_), exp(neg(log_std)))
    per = sub(scale(square(z), -0.5), log_std)
    return add(sum_axis1(per), constant(np.array(-0.5 * LOG_2PI)
                                        * as_node(x).value.shape[1]))


def squashed_gaussian(mean_, log_std, noise, action_scale: float):
    """tanh-squashed reparameterized gaussian.

    Returns (action, log_prob) with action = scale * tanh(u),
    u = mean + exp(log_std) * noise, and log_prob including the change of
    variables correction sum log(scale * (1 - tanh(u)^2) + eps), shape (N, 1).
    """
    u = gaussian_sample(mean_, log_std, noise)
    t = tanh(u)
    action = scale(t, action_scale)
    corr = log(add(scale(sub(constant(np.array(1.0)), square(t)), action_scale),
                   constant(np.array(SQUASH_EPS))))
    logp = sub(gaussian_log_density(u, mean_, log_std), sum_axis1(corr))
    return action, logp


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

class _NumpyBackend:
    """Backward arithmetic on raw arrays (create_graph=False)."""

    create_graph = False

    @staticmethod
    def val(p):
        return p.value

    @staticmethod
    def acc(a, b):
        return a + b

    neg = staticmethod(np.negative)

    @staticmethod
    def mul(a, b):
        return a * b

    @staticmethod
    def scale(a, c):
        return a * c

    @staticmethod
    def matmul(a, b):
        return a @ b

    @staticmethod
    def transpose(a):
        return a.T

    @staticmethod
    def square(a):
        return a * a

    @staticmethod
    def one_minus(a):
        return 1.0 - a

    @staticmethod
    def power(a, p):
        return a ** p

    @staticmethod
    def sigmoid(a):
        return 0.5 * (1.0 + np.tanh(0.5 * a))

    @staticmethod
    def exp(a):
        return np.exp(a)

    @staticmethod
    def mul_mask(a, mask):
        return a * mask

    @staticmethod
    def sum_to(a, shape):
        return _np_sum_to(a, shape)

    @staticmethod
    def broadcast(a, shape):
        return np.broadcast_to(a, shape)

    @staticmethod
    def sum_axis0(a):
        return a.sum(axis=0)

    @staticmethod
    def slice_cols(a, i0, i1):
        return a[:, i0:i1]

    @staticmethod
    def pad_cols(a, i0, total):
        v = np.zeros((a.shape[0], total), dtype=DTYPE)
        v[:, i0:i0 + a.shape[1]] = a
        return v

    @staticmethod
    def zeros(shape):
        return np.zeros(shape, dtype=DTYPE)

    @staticmethod
    def seed_for(node):
        return np.ones(node.value.shape, dtype=DTYPE)

    @staticmethod
    def raw(g):
        return g


class _GraphBackend:
    """Backward arithmetic that builds Nodes (create_graph=True)."""

    create_graph = True

    @staticmethod
    def val(p):
        return p

    acc = staticmethod(add)
    neg = staticmethod(neg)
    mul = staticmethod(mul)
    scale = staticmethod(scale)
    matmul = staticmethod(matmul)
    transpose = staticmethod(transpose)
    square = staticmethod(square)
    power = staticmethod(power)
    sigmoid = staticmethod(sigmoid)
    exp = staticmethod(exp)
    sum_to = staticmethod(sum_to)
    broadcast = staticmethod(broadcast)
    sum_axis0 = staticmethod(sum_axis0)
    slice_cols = staticmethod(slice_cols)
    pad_cols = staticmethod(pad_cols)

    @staticmethod
    def one_minus(a):
        return sub(constant(np.array(1.0)), a)

    @staticmethod
    def mul_mask(a, mask):
        return mul(a, constant(mask))

    @staticmethod
    def zeros(shape):
        return constant(np.zeros(shape, dtype=DTYPE))

    @staticmethod
    def seed_for(node):
        return constant(np.ones(node.value.shape, dtype=DTYPE))

    @staticmethod
    def raw(g):
        return g.value


def _fit(B, g, shape):
    # skip the reduction node entirely when shapes already agree
    raw = g.value if isinstance(g, Node) else g
    return g if raw.shape == shape else B.sum_to(g, shape)


def _vjp_add(B, g, n):
    a, b = n.parents
    return (_fit(B, g, a.value.shape) if a.requires_grad else None,
            _fit(B, g, b.value.shape) if b.requires_grad else None)


def _vjp_sub(B, g, n):
    a, b = n.parents
    return (_fit(B, g, a.value.shape) if a.requires_grad else None,
            _fit(B, B.neg(g), b.value.shape) if b.requires_grad else None)


def _vjp_neg(B, g, n):
    return (B.neg(g),)


def _vjp_mul(B, g, n):
    a, b = n.parents
    ga = _fit(B, B.mul(g, B.val(b)), a.value.shape) if a.requires_grad else None
    gb = _fit(B, B.mul(g, B.val(a)), b.value.shape) if b.requires_grad else None
    return (ga, gb)


def _vjp_scale(B, g, n):
    return (B.scale(g, n.attrs[0]),)


def _vjp_matmul(B, g, n):
    a, b = n.parents
    ga = B.matmul(g, B.transpose(B.val(b))) if a.requires_grad else None
    gb = B.matmul(B.transpose(B.val(a)), g) if b.requires_grad else None
    return (ga, gb)


def _vjp_affine(B, g, n):
    x, w, b = n.parents
    gx = B.matmul(g, B.transpose(B.val(w))) if x.requires_grad else None
    gw = B.matmul(B.transpose(B.val(x)), g) if w.requires_grad else None
    gb = B.sum_axis0(g) if b.requires_grad else None
    return (gx, gw, gb)


def _vjp_relu(B, g, n):
    mask = n.parents[0].value > 0.0
    return (B.mul_mask(g, mask),)


def _vjp_tanh(B, g, n):
    y = B.val(n) if B.create_graph else n.value
    return (B.mul(g, B.one_minus(B.square(y))),)


def _vjp_sigmoid(B, g, n):
    y = B.val(n) if B.create_graph else n.value
    return (B.mul(g, B.mul(y, B.one_minus(y))),)


def _vjp_softplus(B, g, n):
    return (B.mul(g, B.sigmoid(B.val(n.parents[0]))),)


def _vjp_exp(B, g, n):
    y = B.val(n) if B.create_graph else n.value
    return (B.mul(g, y),)


def _vjp_log(B, g, n):
    return (B.mul(g, B.power(B.val(n.parents[0]), -1.0)),)


def _vjp_square(B, g, n):
    return (B.scale(B.mul(g, B.val(n.parents[0])), 2.0),)


def _vjp_power(B, g, n):
    p = n.attrs[0]
    return (B.scale(B.mul(g, B.power(B.val(n.parents[0]), p - 1.0)), p),)


def _vjp_absval(B, g, n):
    sign = np.sign(n.parents[0].value)
    return (B.mul_mask(g, sign),)


def _vjp_minimum(B, g, n):
    a, b = n.parents
    mask = a.value <= b.value
    ga = B.mul_mask(g, mask) if a.requires_grad else None
    gb = B.mul_mask(g, ~mask) if b.requires_grad else None
    return (ga, gb)


def _vjp_clip(B, g, n):
    lo, hi = n.attrs
    x = n.parents[0].value
    return (B.mul_mask(g, (x > lo) & (x < hi)),)


def _vjp_asum(B, g, n):
    return (B.broadcast(g, n.parents[0].value.shape),)


def _vjp_sum_axis0(B, g, n):
    return (B.broadcast(g, n.parents[0].value.shape),)


def _vjp_sum_axis1(B, g, n):
    return (B.broadcast(g, n.parents[0].value.shape),)


def _vjp_broadcast(B, g, n):
    return (B.sum_to(g, n.parents[0].value.shape),)


def _vjp_sum_to(B, g, n):
    return (B.broadcast(g, n.parents[0].value.shape),)


def _vjp_concat(B, g, n):
    offs, _total = n.attrs
    out = []
    for p, o in zip(n.parents, offs):
        if p.requires_grad:
            out.append(B.slice_cols(g, o, o + p.value.shape[1]))
        else:
            out.append(None)
    return tuple(out)


def _vjp_slice_cols(B, g, n):
    i0, _i1 = n.attrs
    return (B.pad_cols(g, i0, n.parents[0].value.shape[1]),)


def _vjp_pad_cols(B, g, n):
    i0, _total = n.attrs
    return (B.slice_cols(g, i0, i0 + n.parents[0].value.shape[1]),)


def _vjp_transpose(B, g, n):
    return (B.transpose(g),)


_VJP: dict[str, Callable] = {
    "add": _vjp_add, "sub": _vjp_sub, "neg": _vjp_neg, "mul": _vjp_mul,
    "scale": _vjp_scale, "matmul": _vjp_matmul, "affine": _vjp_affine,
    "relu": _vjp_relu, "tanh": _vjp_tanh, "sigmoid": _vjp_sigmoid,
    "softplus": _vjp_softplus, "exp": _vjp_exp, "log": _vjp_log,
    "square": _vjp_square, "power": _vjp_power, "absval": _vjp_absval,
    "minimum": _vjp_minimum, "clip": _vjp_clip, "asum": _vjp_asum,
    "sum_axis0": _vjp_sum_axis0, "sum_axis1": _vjp_sum_axis1,
    "broadcast": _vjp_broadcast, "sum_to": _vjp_sum_to, "concat": _vjp_concat,
    "slice_cols": _vjp_slice_cols, "pad_cols": _vjp_pad_cols,
    "transpose": _vjp_transpose,
}


def _toposort(root: Node) -> list[Node]:
    # mark visited at expansion, not at push: pre-marking reorders interior
    # diamond nodes and silently drops their late gradient contributions
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(output, wrt: Iterable, create_graph: bool = False) -> list:
    """Gradients of a scalar expression with respect to ``wrt``.

    Returns one gradient per entry of ``wrt`` (Variables or Nodes), each
    shaped like the entry's value. Entries unreachable from ``output``
    get zero gradients. With ``create_graph=True`` the results are Nodes
    and remain differentiable, which is what enables second-order
    gradients through an inner update step.

    Raises ShapeError for a non-scalar output and NanGradientError the
    first time a NaN shows up during accumulation, naming the primitive
    whose output gradient went bad.
    """
    out = as_node(output)
    if out.value.size != 1:
        raise ShapeError("backward(non-scalar output)", out.value.shape)
    targets = [as_node(w) for w in wrt]
    B = _GraphBackend if create_graph else _NumpyBackend

    grads: dict[int, object] = {}
    if out.requires_grad:
        topo = _toposort(out)
        grads[id(out)] = B.seed_for(out)
        vjps = _VJP
        for node in reversed(topo):
            g = grads.get(id(node))
            if g is None:
                continue
            raw = g if create_graph is False else g.value
            m = raw.min()  # min propagates NaN
            if m != m:
                raise NanGradientError(node.op)
            if not node.parents:
                continue
            contribs = vjps[node.op](B, g, node)
            for p, c in zip(node.parents, contribs):
                if c is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = c if prev is None else B.acc(prev, c)

    results = []
    for t in targets:
        g = grads.get(id(t))
        if g is None:
            g = B.zeros(t.value.shape)
        results.append(g)
        t.grad = g
    for t, w in zip(targets, wrt):
        if isinstance(w, Variable):
            w.node.grad = t.grad
    return results


def grad_values(output, wrt: Iterable) -> list[np.ndarray]:
    """Convenience wrapper: plain-array gradients."""
    return backward(output, wrt, create_graph=False)


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

def fd_gradient(f: Callable[[np.ndarray], float], point, epsilon: float = 1e-4) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function.

    Perturbs one coordinate at a time: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
    This is the independent oracle the gradient-check suite compares
    backward() against; it never touches the graph machinery.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = _arr(point).copy()
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        fp = float(f(x))
        flat[i] = orig - epsilon
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * epsilon)
    return g


def reaches(node: Node, targets: Iterable[Node]) -> bool:
    """True if any of ``targets`` is reachable from ``node`` through parents."""
    wanted = {id(as_node(t)) for t in targets}
    seen: set[int] = set()
    stack = [as_node(node)]
    while stack:
        n = stack.pop()
        if id(n) in wanted:
            return True
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.extend(n.parents)
    return False
