"""Minimal reverse-mode differentiation over numpy arrays.

Every primitive accepts plain ``numpy`` arrays as well as :class:`TapeNode`
operands. With plain arrays it simply computes the value, so numeric code
written against these primitives (geometry, losses, the model) runs either
eagerly or recorded on a :class:`Tape` without modification.

Example
-------
>>> tape = Tape()
>>> x = tape.var(np.array([1.0, 2.0]), name="x")
>>> y = dot(x, x)
>>> tape.backward(y)["x"]
array([2., 4.])
"""

from __future__ import annotations

from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

ATANH_EPS = 1e-5
NORM_FLOOR = 1e-15


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class TapeNode:
    """Recorded value plus the rule that maps its adjoint to its parents."""

    __array_ufunc__ = None  # make ndarray binary ops defer to our reflected methods

    __slots__ = ("value", "parents", "rule", "_vjp", "tape", "index", "name")

    def __init__(self, value, parents, rule, vjp, tape, name=None):
        self.value = value
        self.parents = parents
        self.rule = rule
        self._vjp = vjp
        self.tape = tape
        self.index = -1
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"TapeNode(rule={self.rule!r}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return take(self, key)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


class Gradient(dict):
    """Mapping from leaf name to adjoint array, shaped like the leaf."""

    def norm(self) -> float:
        total = 0.0
        for g in self.values():
            total += float(np.sum(g * g))
        return float(np.sqrt(total))


class Tape:
    """Append-only record of one computation.

    Nodes are numbered in creation order, which is already a topological
    order, so the backward sweep is a single reversed pass with a fixed
    accumulation order.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self.leaves: Dict[str, TapeNode] = {}

    def var(self, value, name: Optional[str] = None) -> TapeNode:
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise ValueError(f"non-finite leaf value for {name!r}")
        if name is None:
            name = f"x{len(self.leaves)}"
        if name in self.leaves:
            raise ValueError(f"duplicate leaf name {name!r}")
        node = TapeNode(value, (), "leaf", None, self, name=name)
        self._push(node)
        self.leaves[name] = node
        return node

    def _push(self, node):
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def record(self, value, parents, rule, vjp) -> TapeNode:
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite value produced by {rule!r}")
        return self._push(TapeNode(value, parents, rule, vjp, self))

    def backward(self, root: TapeNode) -> Gradient:
        if root.tape is not self:
            raise ValueError("root was recorded on a different tape")
        if root.value.size != 1:
            raise ShapeError(f"backward needs a scalar root, got shape {root.value.shape}")
        adj: Dict[int, np.ndarray] = {root.index: np.ones_like(root.value)}
        for node in reversed(self.nodes[: root.index + 1]):
            g = adj.pop(node.index, None)
            if g is None or node._vjp is None:
                if g is not None:
                    adj[node.index] = g  # keep leaf adjoints
                continue
            for parent, pg in zip(node.parents, node._vjp(g)):
                if parent is None or pg is None:
                    continue
                prev = adj.get(parent.index)
                adj[parent.index] = pg if prev is None else prev + pg
        grads = Gradient()
        for name, leaf in self.leaves.items():
            g = adj.get(leaf.index)
            grads[name] = np.zeros_like(leaf.value) if g is None else np.asarray(g).reshape(leaf.value.shape)
        return grads


def backward(root: TapeNode) -> Gradient:
    """Adjoints of a scalar ``root`` with respect to every leaf on its tape."""
    if not isinstance(root, TapeNode):
        raise TypeError("backward needs a recorded TapeNode")
    return root.tape.backward(root)


# ---------------------------------------------------------------------------
# helpers


def _tape_of(*xs) -> Optional[Tape]:
    for x in xs:
        if isinstance(x, TapeNode):
            return x.tape
    return None


def _val(x):
    return x.value if isinstance(x, TapeNode) else x


def _parent(x):
    return x if isinstance(x, TapeNode) else None


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, value, rule, ga: Callable, gb: Callable):
    tape = _tape_of(a, b)
    if tape is None:
        return value
    sa, sb = np.shape(_val(a)), np.shape(_val(b))

    def vjp(g):
        return (
            _unbroadcast(ga(g), sa) if isinstance(a, TapeNode) else None,
            _unbroadcast(gb(g), sb) if isinstance(b, TapeNode) else None,
        )

    return tape.record(value, (_parent(a), _parent(b)), rule, vjp)


def _unary(x, value, rule, gx: Callable):
    if not isinstance(x, TapeNode):
        return value
    return x.tape.record(value, (x,), rule, lambda g: (gx(g),))


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    return _binary(a, b, np.add(_val(a), _val(b)), "add", lambda g: g, lambda g: g)


def sub(a, b):
    return _binary(a, b, np.subtract(_val(a), _val(b)), "sub", lambda g: g, lambda g: -g)


def neg(x):
    return _unary(x, -_val(x), "neg", lambda g: -g)


def scalar_mul(s: float, x):
    s = float(s)
    return _unary(x, s * _val(x), "scalar_mul", lambda g: s * g)


def mul(a, b):
    """Elementwise product with broadcasting."""
    va, vb = _val(a), _val(b)
    return _binary(a, b, np.multiply(va, vb), "mul", lambda g: g * vb, lambda g: g * va)


elementwise_mul = mul


def div(a, b):
    va, vb = _val(a), _val(b)
    out = np.divide(va, vb)
    return _binary(a, b, out, "div", lambda g: g / vb, lambda g: -g * out / vb)


def dot(a, b, keepdims: bool = False):
    """Inner product along the last axis (batched over leading axes)."""
    va, vb = _val(a), _val(b)
    if np.shape(va)[-1] != np.shape(vb)[-1]:
        raise ShapeError(f"dot: {np.shape(va)} vs {np.shape(vb)}")
    out = np.sum(va * vb, axis=-1, keepdims=keepdims)
    expand = (lambda g: g) if keepdims else (lambda g: np.expand_dims(g, -1))
    return _binary(a, b, out, "dot", lambda g: expand(g) * vb, lambda g: expand(g) * va)


def norm(x, keepdims: bool = False):
    """Euclidean norm along the last axis; the adjoint at zero is zero."""
    v = _val(x)
    out = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))

    def gx(g):
        g = g if keepdims else np.expand_dims(g, -1)
        return g * v / np.maximum(out, NORM_FLOOR)

    return _unary(x, out if keepdims else out[..., 0], "norm", gx)


def matmul(a, b):
    """``numpy.matmul`` semantics, including broadcasting over batch axes."""
    va, vb = _val(a), _val(b)
    if np.ndim(va) < 2 or np.ndim(vb) < 2:
        raise ShapeError("matmul needs operands of rank >= 2; use matvec/dot")
    if va.shape[-1] != vb.shape[-2]:
        raise ShapeError(f"matmul: {va.shape} @ {vb.shape}")
    return _binary(
        a, b, np.matmul(va, vb), "matmul",
        lambda g: np.matmul(g, np.swapaxes(vb, -1, -2)),
        lambda g: np.matmul(np.swapaxes(va, -1, -2), g),
    )


def matvec(m, x):
    """``m @ x`` for a matrix ``m`` (..., r, k) and vector ``x`` (..., k)."""
    vm, vx = _val(m), _val(x)
    if vm.shape[-1] != vx.shape[-1]:
        raise ShapeError(f"matvec: {vm.shape} @ {vx.shape}")
    out = np.einsum("...rk,...k->...r", vm, vx)
    return _binary(
        m, x, out, "matvec",
        lambda g: g[..., :, None] * vx[..., None, :],
        lambda g: np.einsum("...rk,...r->...k", vm, g),
    )


def swapaxes(x, a1: int, a2: int):
    return _unary(x, np.swapaxes(_val(x), a1, a2), "swapaxes", lambda g: np.swapaxes(g, a1, a2))


def reshape(x, shape):
    v = _val(x)
    return _unary(x, np.reshape(v, shape), "reshape", lambda g: np.reshape(g, v.shape))


def tanh(x):
    out = np.tanh(_val(x))
    return _unary(x, out, "tanh", lambda g: g * (1.0 - out * out))


def atanh(x, eps: float = ATANH_EPS):
    """``arctanh`` with its argument clamped to ``[-1+eps, 1-eps]``.

    Clamped entries receive a zero adjoint.
    """
    v = _val(x)
    lim = 1.0 - eps
    vc = np.clip(v, -lim, lim)
    inside = np.abs(v) <= lim
    return _unary(x, np.arctanh(vc), "atanh", lambda g: np.where(inside, g / (1.0 - vc * vc), 0.0))


def sqrt(x):
    out = np.sqrt(_val(x))
    return _unary(x, out, "sqrt", lambda g: g / (2.0 * np.maximum(out, NORM_FLOOR)))


def exp(x):
    out = np.exp(_val(x))
    return _unary(x, out, "exp", lambda g: g * out)


def log(x):
    v = _val(x)
    return _unary(x, np.log(v), "log", lambda g: g / v)


def maximum(x, floor):
    """Elementwise ``max(x, floor)``; ``floor`` is treated as a constant."""
    v = _val(x)
    fl = _val(floor)
    keep = v >= fl
    return _unary(x, np.maximum(v, fl), "maximum", lambda g: np.where(keep, g, 0.0))


def softmax(x, axis: int = -1):
    v = _val(x)
    z = np.exp(v - np.max(v, axis=axis, keepdims=True))
    out = z / np.sum(z, axis=axis, keepdims=True)
    return _unary(
        x, out, "softmax",
        lambda g: out * (g - np.sum(g * out, axis=axis, keepdims=True)),
    )


def log_softmax(x, axis: int = -1):
    v = _val(x)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    return _unary(
        x, out, "log_softmax",
        lambda g: g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),
    )


def sum(x, axis=None, keepdims: bool = False):  # noqa: A001 - mirrors numpy
    v = _val(x)
    out = np.sum(v, axis=axis, keepdims=keepdims)

    def gx(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, v.shape).copy()

    return _unary(x, out, "sum", gx)


def mean(x, axis=None, keepdims: bool = False):
    v = _val(x)
    count = v.size if axis is None else np.prod([v.shape[a] for a in np.atleast_1d(axis)])
    return scalar_mul(1.0 / count, sum(x, axis=axis, keepdims=keepdims))


def concat(xs: Sequence, axis: int = 0):
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*xs)
    if tape is None:
        return out
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        parts = np.split(g, bounds, axis=axis)
        return tuple(p if isinstance(x, TapeNode) else None for x, p in zip(xs, parts))

    return tape.record(out, tuple(_parent(x) for x in xs), "concat", vjp)


def take(x, key):
    """Basic or advanced indexing; repeated indices accumulate adjoints."""
    v = _val(x)
    out = v[key]

    def gx(g):
        full = np.zeros_like(v)
        np.add.at(full, key, g)
        return full

    return _unary(x, np.array(out, dtype=np.float64, copy=True), "slice", gx)


slice_ = take


# ---------------------------------------------------------------------------
# verification oracle


def finite_diff_grad(f: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per coordinate."""
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(f(x))
        flat[i] = orig - step
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """``||a - b|| / max(||a||, ||b||)``, the figure reported by gradient checks."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)


def value_and_grad(f: Callable, x: np.ndarray) -> Tuple[float, np.ndarray]:
    """Evaluate scalar ``f`` at ``x`` on a fresh tape and return ``(f(x), df/dx)``."""
    tape = Tape()
    node = tape.var(x, name="x")
    out = f(node)
    if not isinstance(out, TapeNode):
        # f does not depend on x
        return float(np.asarray(out)), np.zeros_like(np.asarray(x, dtype=np.float64))
    return float(out.value), tape.backward(out)["x"]
