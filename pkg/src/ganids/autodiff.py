"""Reverse-mode automatic differentiation on dense float64 arrays.

Gradients are built out of the same differentiable primitives as the forward
pass, so a gradient expression can itself be differentiated again. That is
what the gradient-penalty term needs: parameter gradients of a function of
input gradients (reverse-over-reverse).
"""

from __future__ import annotations

import numpy as np


class NonFiniteValue(ArithmeticError):
    """A NaN or Inf showed up where only finite values are allowed."""


class ShapeMismatch(ValueError):
    pass


def check_finite(arr, what="value"):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"non-finite {what} encountered")
    return arr


class Var:
    """One node of the computation graph.

    `parents` are the input Vars and `vjp` maps the incoming cotangent (a Var)
    to a tuple of cotangents aligned with `parents` (None for inputs that do
    not need gradients).
    """

    __slots__ = ("data", "parents", "vjp", "requires_grad")

    def __init__(self, data, parents=(), vjp=None, requires_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def detach(self):
        return Var(self.data, requires_grad=False)

    def item(self):
        return float(self.data.reshape(()))

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, neg(asvar(other)))

    def __rsub__(self, other):
        return add(asvar(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def asvar(x):
    if isinstance(x, Var):
        return x
    return Var(x, requires_grad=False)


def leaf(data, requires_grad=True):
    return Var(data, requires_grad=requires_grad)


def _zeros_like(v):
    return Var(np.zeros_like(v.data), requires_grad=False)


def grad(output, wrt, create_graph=False):
    """Gradients of a scalar `output` with respect to the Vars in `wrt`.

    With create_graph=True the returned gradients stay connected to the graph
    and can be differentiated again; otherwise they are detached constants.
    """
    if output.data.size != 1:
        raise ShapeMismatch("grad expects a scalar output")

    # topological order over the subgraph that requires gradients
    order = []
    seen = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(output): Var(np.ones_like(output.data), requires_grad=False)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if not create_graph:
                pg = pg.detach()
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else add(acc, pg)

    out = []
    for w in wrt:
        g = grads.get(id(w))
        out.append(g if g is not None else _zeros_like(w))
    return out


# ---------------------------------------------------------------------------
# primitives


def _unbroadcast(g, shape):
    """Reduce a broadcasted cotangent back to `shape`."""
    extra = g.data.ndim - len(shape)
    if extra > 0:
        g = sum_(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.data.shape[i] != 1)
    if axes:
        g = sum_(g, axis=axes, keepdims=True)
    return g


def add(a, b):
    a, b = asvar(a), asvar(b)
    out = Var(a.data + b.data, (a, b),
              lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))
    return out


def neg(a):
    a = asvar(a)
    return Var(-a.data, (a,), lambda g: (neg(g),))


def mul(a, b):
    a, b = asvar(a), asvar(b)
    return Var(a.data * b.data, (a, b),
               lambda g: (_unbroadcast(mul(g, b), a.data.shape),
                          _unbroadcast(mul(g, a), b.data.shape)))


def matmul(a, b):
    a, b = asvar(a), asvar(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch("matmul expects 2-D operands")
    return Var(a.data @ b.data, (a, b),
               lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)))


def transpose(a, axes=None):
    a = asvar(a)
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    inv = tuple(np.argsort(axes))
    return Var(np.transpose(a.data, axes), (a,), lambda g: (transpose(g, inv),))


def reshape(a, shape):
    a = asvar(a)
    old = a.data.shape
    return Var(a.data.reshape(shape), (a,), lambda g: (reshape(g, old),))


def sum_(a, axis=None, keepdims=False):
    a = asvar(a)
    shape = a.data.shape

    def vjp(g):
        gd = g
        if axis is not None and not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            kshape = list(g.data.shape)
            for i in sorted(a2 % len(shape) for a2 in ax):
                kshape.insert(i, 1)
            gd = reshape(g, tuple(kshape))
        return (broadcast_to(gd, shape),)

    return Var(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp)


def broadcast_to(a, shape):
    a = asvar(a)
    return Var(np.broadcast_to(a.data, shape), (a,),
               lambda g: (_unbroadcast(g, a.data.shape),))


def mean(a, axis=None):
    a = asvar(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis), 1.0 / n)


def tanh(a):
    a = asvar(a)
    y = np.tanh(a.data)
    out = Var(y, (a,), None)
    out.vjp = lambda g: (mul(g, 1.0 - mul(out, out)),)
    return out


def leaky_relu(a, slope=0.2):
    a = asvar(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return mul(a, Var(factor, requires_grad=False))


def square(a):
    a = asvar(a)
    return mul(a, a)


def safe_recip(a):
    """1/x with 0 mapped to 0 (all derivatives 0 there as well)."""
    a = asvar(a)
    nz = a.data != 0
    y = np.where(nz, 1.0 / np.where(nz, a.data, 1.0), 0.0)
    out = Var(y, (a,), None)
    out.vjp = lambda g: (neg(mul(g, mul(out, out))),)
    return out


def sqrt(a):
    """Square root whose derivative is defined as 0 at 0.

    The zero case is what a gradient norm of exactly zero produces; the
    penalty there is a constant with respect to the parameters.
    """
    a = asvar(a)
    y = np.sqrt(a.data)
    out = Var(y, (a,), None)
    out.vjp = lambda g: (mul(g, mul(0.5, safe_recip(out))),)
    return out


# ---------------------------------------------------------------------------
# 1-D convolution plumbing (gather/scatter pair, exact adjoints of each other)


def _unfold_data(x, k, pad):
    b, c, length = x.shape
    xp = np.zeros((b, c, length + 2 * pad), dtype=np.float64)
    xp[:, :, pad:pad + length] = x
    idx = np.arange(length)[:, None] + np.arange(k)[None, :]  # (L, k)
    cols = xp[:, :, idx]                 # (B, C, L, k)
    cols = cols.transpose(0, 2, 1, 3)    # (B, L, C, k)
    return cols.reshape(b, length, c * k)


def _fold_data(g, k, pad, c, length):
    b = g.shape[0]
    gc = g.reshape(b, length, c, k).transpose(0, 2, 1, 3)  # (B, C, L, k)
    buf = np.zeros((b, c, length + 2 * pad), dtype=np.float64)
    idx = np.arange(length)[:, None] + np.arange(k)[None, :]
    np.add.at(buf, (slice(None), slice(None), idx), gc)
    return buf[:, :, pad:pad + length]


def unfold1d(a, k, pad):
    """(B, C, L) -> (B, L, C*k) sliding windows with zero padding."""
    a = asvar(a)
    b, c, length = a.data.shape
    return Var(_unfold_data(a.data, k, pad), (a,),
               lambda g: (fold1d(g, k, pad, c, length),))


def fold1d(a, k, pad, c, length):
    """Adjoint of unfold1d: scatter-add windows back to (B, C, L)."""
    a = asvar(a)
    return Var(_fold_data(a.data, k, pad, c, length), (a,),
               lambda g: (unfold1d(g, k, pad),))
