"""Minimal reverse-mode automatic differentiation on numpy arrays.

The whole package trains on CPU with explicit 32/64-bit control, so we
carry our own tape instead of a framework: a `Tensor` wraps an ndarray
and records, per input, a vector-Jacobian closure. Backward closures are
themselves written with tape ops, so `grad(..., create_graph=True)` yields
differentiable gradients (needed for the gradient-penalty critic loss).

Conventions:
  * matmul operands are at least 2-D; batch dimensions broadcast.
  * reductions accept a single axis (tuple allowed for `tsum`) or None.
  * `where`/`tmax` route gradients by masks computed from values (the
    usual subgradient choice); ties take the first index.
  * python scalars mixed into ops adopt the tensor operand's dtype, so
    float32 graphs stay float32.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import expit as _expit

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents")

    def __init__(self, data, requires_grad=False, _parents=()):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.requires_grad = requires_grad
        self._parents = _parents

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        grad_tag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{grad_tag})"

    # operator sugar
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def parameter(data):
    """Leaf tensor tracked by `grad`."""
    arr = data if isinstance(data, np.ndarray) else np.array(data)
    return Tensor(arr, requires_grad=True)


def astensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b):
    """Tensorize a binary-op pair; scalars adopt the tensor's dtype."""
    if isinstance(a, Tensor):
        if not isinstance(b, Tensor):
            b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    else:
        a, b = astensor(a), astensor(b)
    return a, b


def _tracked(t):
    return t.requires_grad or bool(t._parents)


def _make(data, parents):
    """Wrap an op result, recording only parents on a gradient path."""
    if _grad_enabled:
        live = tuple((p, fn) for p, fn in parents if _tracked(p))
        if live:
            return Tensor(data, requires_grad=True, _parents=live)
    return Tensor(data)


def _unbroadcast(g, shape):
    """Reduce gradient `g` back to the broadcast operand's `shape`."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = tsum(g, axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = tsum(g, axis=i, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a, b = _pair(a, b)
    out = a.data + b.data
    return _make(out, (
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ))


def sub(a, b):
    a, b = _pair(a, b)
    out = a.data - b.data
    return _make(out, (
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(neg(g), b.shape)),
    ))


def mul(a, b):
    a, b = _pair(a, b)
    out = a.data * b.data
    return _make(out, (
        (a, lambda g: _unbroadcast(mul(g, b), a.shape)),
        (b, lambda g: _unbroadcast(mul(g, a), b.shape)),
    ))


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data
    res = _make(out, (
        (a, lambda g: _unbroadcast(div(g, b), a.shape)),
        (b, lambda g: _unbroadcast(neg(div(mul(g, res), b)), b.shape)),
    ))
    return res


def neg(a):
    a = astensor(a)
    return _make(-a.data, ((a, lambda g: neg(g)),))


def square(a):
    return mul(a, a)


# ---------------------------------------------------------------------------
# nonlinearities

def tanh(a):
    a = astensor(a)
    out = np.tanh(a.data)
    res = _make(out, ((a, lambda g: mul(g, sub(1.0, square(res)))),))
    return res


def sigmoid(a):
    a = astensor(a)
    out = _expit(a.data)
    res = _make(out, ((a, lambda g: mul(g, mul(res, sub(1.0, res)))),))
    return res


def exp(a):
    a = astensor(a)
    res = _make(np.exp(a.data), ((a, lambda g: mul(g, res)),))
    return res


def log(a):
    a = astensor(a)
    return _make(np.log(a.data), ((a, lambda g: div(g, a)),))


def sqrt(a):
    a = astensor(a)
    res = _make(np.sqrt(a.data), ((a, lambda g: div(g, mul(2.0, res))),))
    return res


def absolute(a):
    a = astensor(a)
    sign = np.sign(a.data)
    return _make(np.abs(a.data), ((a, lambda g: mul(g, Tensor(sign))),))


def softsign(a):
    """x / (1 + |x|): bounded in (-1, 1)."""
    a = astensor(a)
    return div(a, add(absolute(a), 1.0))


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b):
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    out = a.data @ b.data
    return _make(out, (
        (a, lambda g: _unbroadcast(matmul(g, swapaxes(b, -1, -2)), a.shape)),
        (b, lambda g: _unbroadcast(matmul(swapaxes(a, -1, -2), g), b.shape)),
    ))


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(a, shape):
    a = astensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), ((a, lambda g: reshape(g, old)),))


def swapaxes(a, ax1, ax2):
    a = astensor(a)
    return _make(np.swapaxes(a.data, ax1, ax2),
                 ((a, lambda g: swapaxes(g, ax1, ax2)),))


def expand(a, shape):
    """Broadcast to `shape` (gradient sums back)."""
    a = astensor(a)
    old = a.shape
    return _make(np.broadcast_to(a.data, shape),
                 ((a, lambda g: _unbroadcast(g, old)),))


def concatenate(tensors, axis=0):
    tensors = [astensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    parents = []
    offset = 0
    for t in tensors:
        n = t.shape[axis]
        key = [slice(None)] * out.ndim
        key[axis] = slice(offset, offset + n)
        parents.append((t, (lambda k: lambda g: getitem(g, tuple(k)))(key)))
        offset += n
    return _make(out, tuple(parents))


def stack(tensors, axis=0):
    tensors = [astensor(t) for t in tensors]
    ax = axis if axis >= 0 else tensors[0].ndim + 1 + axis
    expanded = []
    for t in tensors:
        shp = t.shape[:ax] + (1,) + t.shape[ax:]
        expanded.append(reshape(t, shp))
    return concatenate(expanded, axis=ax)


def getitem(a, key):
    a = astensor(a)
    shape = a.shape
    return _make(a.data[key], ((a, lambda g: _scatter(g, key, shape)),))


def _is_basic_key(key):
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(p, (slice, int)) or p is None or p is Ellipsis
               for p in parts)


def _scatter(g, key, shape):
    """Adjoint of `getitem`: place `g` into zeros of `shape` at `key`."""
    g = astensor(g)
    out = np.zeros(shape, dtype=g.dtype)
    if _is_basic_key(key):
        out[key] += g.data
    else:
        np.add.at(out, key, g.data)
    return _make(out, ((g, lambda gg: getitem(gg, key)),))


# ---------------------------------------------------------------------------
# reductions

def tsum(a, axis=None, keepdims=False):
    a = astensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return expand(reshape(g, (1,) * len(shape)), shape)
        if not keepdims:
            kshape = list(shape)
            for ax in (axis if isinstance(axis, tuple) else (axis,)):
                kshape[ax] = 1
            g = reshape(g, tuple(kshape))
        return expand(g, shape)

    return _make(np.asarray(out), ((a, backward),))


def tmean(a, axis=None, keepdims=False):
    a = astensor(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        n = a.shape[axis]
    return div(tsum(a, axis=axis, keepdims=keepdims), float(n))


def tmax(a, axis, keepdims=False):
    a = astensor(a)
    shape = a.shape
    out = a.data.max(axis=axis, keepdims=keepdims)
    idx = np.argmax(a.data, axis=axis)
    onehot = np.zeros(shape, dtype=a.dtype)
    np.put_along_axis(onehot, np.expand_dims(idx, axis), 1.0, axis)

    def backward(g):
        if not keepdims:
            kshape = list(shape)
            kshape[axis] = 1
            g = reshape(g, tuple(kshape))
        return mul(expand(g, shape), Tensor(onehot))

    return _make(np.asarray(out), ((a, backward),))


def where(cond, a, b):
    """Select by a constant boolean mask; gradients flow to both branches."""
    cond = np.asarray(cond)
    a, b = _pair(a, b)
    out = np.where(cond, a.data, b.data)
    mask = cond.astype(out.dtype)
    return _make(out, (
        (a, lambda g: _unbroadcast(mul(g, Tensor(mask)), a.shape)),
        (b, lambda g: _unbroadcast(mul(g, Tensor(1.0 - mask)), b.shape)),
    ))


# ---------------------------------------------------------------------------
# softmax family

def logsumexp(a, axis=-1, keepdims=False):
    a = astensor(a)
    # constant shift: its gradient contribution cancels exactly
    shift = np.max(a.data, axis=axis, keepdims=True)
    out = add(log(tsum(exp(sub(a, Tensor(shift))), axis=axis, keepdims=True)),
              Tensor(shift))
    if not keepdims:
        ax = axis if axis >= 0 else a.ndim + axis
        out = reshape(out, a.shape[:ax] + a.shape[ax + 1:])
    return out


def log_softmax(a, axis=-1):
    a = astensor(a)
    return sub(a, logsumexp(a, axis=axis, keepdims=True))


def softmax(a, axis=-1):
    return exp(log_softmax(a, axis=axis))


# ---------------------------------------------------------------------------
# backward driver

def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen and _tracked(parent):
                stack.append((parent, False))
    return order


def grad(output, inputs, grad_output=None, create_graph=False):
    """Gradients of a scalar `output` w.r.t. `inputs` (list of leaf tensors).

    Returns one Tensor per input (zeros when the input is unreachable).
    With `create_graph=True` the returned gradients are themselves
    differentiable.
    """
    if not isinstance(inputs, (list, tuple)):
        raise TypeError("inputs must be a list/tuple of tensors")
    for t in inputs:
        if not _tracked(t):
            raise ValueError("grad requested w.r.t. a non-tracked tensor")
    if grad_output is None:
        if output.data.size != 1:
            raise ValueError("output must be scalar unless grad_output is given")
        grad_output = Tensor(np.ones_like(output.data))

    order = _toposort(output)
    grads = {id(output): grad_output}
    interesting = {id(t) for t in inputs}

    def run():
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None:
                continue
            for parent, vjp in node._parents:
                if not _tracked(parent):
                    continue
                pg = vjp(g)
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else add(acc, pg)
            if id(node) not in interesting:
                del grads[id(node)]

    if create_graph:
        run()
    else:
        with no_grad():
            run()

    out = []
    for t in inputs:
        g = grads.get(id(t))
        if g is None:
            g = Tensor(np.zeros_like(t.data))
        out.append(g)
    return out
