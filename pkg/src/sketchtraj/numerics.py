"""Minimal reverse-mode gradient engine and Adam optimizer.

The engine operates on a small closed set of primitives (add, mul, exp,
log, tanh, square, sum, affine); everything trainable in this package is
expressed through them. Values are float64 numpy arrays; broadcasting is
supported and handled in the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteError(RuntimeError):
    """Raised when a loss or gradient stops being finite.

    ``block`` names the parameter block (or "loss") where the problem
    was detected.
    """

    def __init__(self, block, message=""):
        self.block = block
        super().__init__(f"non-finite value in '{block}'" + (f": {message}" if message else ""))


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    # collapse leading axes added by broadcasting
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tensor:
    """Node in the computation tape. Wraps a float64 ndarray."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def backward(self):
        """Accumulate gradients of this (scalar) node into every ancestor."""
        if self.value.size != 1:
            raise ValueError("backward requires a scalar node")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                parent.grad = parent.grad + _unbroadcast(g, parent.value.shape)

    # operator sugar used throughout flow/trajdist losses
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.value + b.value, (a, b), lambda g: (g, g))


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    return Tensor(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def exp(a):
    a = _wrap(a)
    out = np.exp(a.value)
    return Tensor(out, (a,), lambda g: (g * out,))


def log(a):
    a = _wrap(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.value)
    return Tensor(out, (a,), lambda g: (g / a.value,))


def tanh(a):
    a = _wrap(a)
    out = np.tanh(a.value)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def square(a):
    a = _wrap(a)
    return Tensor(a.value * a.value, (a,), lambda g: (g * 2.0 * a.value,))


def tsum(a, axis=None, keepdims=False):
    a = _wrap(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.value.shape).copy(),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge, a.value.shape).copy(),)

    return Tensor(out, (a,), backward)


def affine(x, w, b=None):
    """x @ w (+ b). ``x`` is (n, i) or (i,), ``w`` is (i, o), ``b`` is (o,)."""
    x, w = _wrap(x), _wrap(w)
    y = x.value @ w.value
    if b is None:
        def backward(g):
            return (g @ w.value.T, _xT_dot(x.value, g))
        return Tensor(y, (x, w), backward)
    b = _wrap(b)

    def backward(g):
        gb = g.sum(axis=0) if g.ndim > b.value.ndim else g
        return (g @ w.value.T, _xT_dot(x.value, g), gb)

    return Tensor(y + b.value, (x, w, b), backward)


def _xT_dot(xv, g):
    if xv.ndim == 1:
        return np.outer(xv, g)
    return xv.T @ g


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter storage with named block views.

    ``blocks`` maps a name to (offset, shape); the blocks must tile the
    flat array exactly with no overlap.
    """

    values: np.ndarray
    blocks: dict

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        covered = 0
        offsets = []
        for name, (off, shape) in self.blocks.items():
            size = int(np.prod(shape)) if shape else 1
            offsets.append((off, off + size, name))
            covered += size
        offsets.sort()
        if covered != self.values.size:
            raise ValueError("blocks do not cover the parameter array exactly")
        pos = 0
        for start, end, name in offsets:
            if start != pos:
                raise ValueError(f"block '{name}' overlaps or leaves a gap")
            pos = end
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter values must be finite")

    @classmethod
    def build(cls, arrays):
        """Pack an ordered {name: array} mapping into a ParamVector."""
        blocks = {}
        chunks = []
        off = 0
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            blocks[name] = (off, arr.shape)
            chunks.append(arr.ravel())
            off += arr.size
        values = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(values, blocks)

    def block(self, name):
        off, shape = self.blocks[name]
        size = int(np.prod(shape)) if shape else 1
        return self.values[off:off + size].reshape(shape)

    def replace_values(self, values):
        return ParamVector(values, self.blocks)


def value_and_grad(loss_fn, params):
    """Loss value plus its reverse-mode gradient at ``params``.

    ``loss_fn`` receives a {block name: Tensor} mapping and must return a
    scalar Tensor built from the engine primitives. Returns the loss as a
    float and the gradient packed with the same block layout.
    """
    leaves = {name: Tensor(params.block(name)) for name in params.blocks}
    loss = loss_fn(leaves)
    if not np.all(np.isfinite(loss.value)):
        raise NonFiniteError("loss")
    loss.backward()
    out = np.zeros_like(params.values)
    for name, leaf in leaves.items():
        g = leaf.grad
        if g is None:
            g = np.zeros_like(leaf.value)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(name)
        off, shape = params.blocks[name]
        size = int(np.prod(shape)) if shape else 1
        out[off:off + size] = np.asarray(g).ravel()
    return float(loss.value), params.replace_values(out)


def grad(loss_fn, params):
    """Reverse-mode gradient of ``loss_fn`` at ``params``."""
    return value_and_grad(loss_fn, params)[1]


@dataclass(frozen=True)
class OptimizerState:
    """Adam accumulators. Aligned elementwise with a ParamVector."""

    step: int
    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        z = np.zeros_like(params.values)
        return cls(0, z, z.copy(), lr, beta1, beta2, eps)


def adam_step(state, params, gradient):
    """One bias-corrected Adam update. Pure: returns (new state, new params)."""
    if gradient.values.shape != params.values.shape:
        raise ValueError("gradient/parameter shape mismatch")
    if state.m.shape != params.values.shape:
        raise ValueError("optimizer state/parameter shape mismatch")
    t = state.step + 1
    g = gradient.values
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_values = params.values - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = OptimizerState(t, m, v, state.lr, state.beta1, state.beta2, state.eps)
    return new_state, params.replace_values(new_values)
