"""Reverse-mode automatic differentiation on numpy arrays.

Everything trainable in this package is a :class:`Tensor`; everything else
stays a plain ndarray and is treated as a constant.  Model code written with
the operators below runs unchanged on either kind, so the same forward
functions serve training (taped, differentiable) and inference (tape-free
numpy) depending only on what the parameters are.

All data is float64.  Gradients accumulate on ``Tensor.grad`` after calling
``backward()`` on a scalar result.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "concat",
    "exp",
    "expm1",
    "leaky_relu",
    "log",
    "relu",
    "sigmoid",
    "softplus",
    "stack",
    "tanh",
    "where",
    "zero_grads",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


class Tensor:
    """A float64 ndarray with reverse-mode gradient tracking."""

    # Make numpy defer binary ops to our reflected operators.
    __array_ufunc__ = None
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    # -- basic protocol ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor({self.data!r})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> np.ndarray:
        """The underlying ndarray, outside the graph (shared storage)."""
        return self.data

    # -- graph construction -------------------------------------------------
    def _accum(self, g: np.ndarray) -> None:
        g = _unbroadcast(np.asarray(g, dtype=np.float64), self.data.shape)
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad=None) -> None:
        """Backpropagate from this node (scalar unless ``grad`` is given)."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad requires a scalar")
            grad = np.ones_like(self.data)
        # Iterative topological sort; graphs can be thousands of nodes deep.
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
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        return _add(self, other)

    def __radd__(self, other):
        return _add(other, self)

    def __sub__(self, other):
        return _add(self, _neg(other))

    def __rsub__(self, other):
        return _add(other, _neg(self))

    def __mul__(self, other):
        return _mul(self, other)

    def __rmul__(self, other):
        return _mul(other, self)

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return _neg(self)

    def __pow__(self, p):
        return _pow(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    # -- shape ops -----------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return _sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return _sum(self, axis, keepdims) * (1.0 / float(n))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self

        def back(g):
            src._accum(g.reshape(src.data.shape))

        return Tensor(self.data.reshape(shape), (self,), back)

    def __getitem__(self, idx):
        src = self
        out = self.data[idx]

        def back(g):
            full = np.zeros_like(src.data)
            np.add.at(full, idx, g)
            src._accum(full)

        return Tensor(out, (self,), back)


def _binary(a, b, out, da, db):
    """Build a Tensor for an elementwise binary op with local grads da/db."""
    parents = tuple(x for x in (a, b) if isinstance(x, Tensor))

    def back(g):
        if isinstance(a, Tensor):
            a._accum(da(g))
        if isinstance(b, Tensor):
            b._accum(db(g))

    return Tensor(out, parents, back)


def _add(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return _data(a) + _data(b)
    return _binary(a, b, _data(a) + _data(b), lambda g: g, lambda g: g)


def _neg(a):
    if not isinstance(a, Tensor):
        return -_data(a)
    return Tensor(-a.data, (a,), lambda g: a._accum(-g))


def _mul(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return _data(a) * _data(b)
    ad, bd = _data(a), _data(b)
    return _binary(a, b, ad * bd, lambda g: g * bd, lambda g: g * ad)


def _div(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return _data(a) / _data(b)
    ad, bd = _data(a), _data(b)
    return _binary(a, b, ad / bd, lambda g: g / bd, lambda g: -g * ad / (bd * bd))


def _pow(a, p):
    p = float(p)
    if not isinstance(a, Tensor):
        return _data(a) ** p
    ad = a.data
    return Tensor(ad**p, (a,), lambda g: a._accum(g * p * ad ** (p - 1.0)))


def _sum(a, axis, keepdims):
    if not isinstance(a, Tensor):
        return _data(a).sum(axis=axis, keepdims=keepdims)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def back(g):
        if axis is None:
            a._accum(np.broadcast_to(g, shape))
            return
        axes = tuple(np.atleast_1d(axis) % len(shape))
        if not keepdims:
            g = np.expand_dims(g, axes)
        a._accum(np.broadcast_to(g, shape))

    return Tensor(out, (a,), back)


def matmul(a, b):
    """Matrix product with numpy semantics (1-D and batched operands)."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return _data(a) @ _data(b)
    ad, bd = _data(a), _data(b)
    out = ad @ bd
    parents = tuple(x for x in (a, b) if isinstance(x, Tensor))

    def back(g):
        g = np.asarray(g, dtype=np.float64)
        if ad.ndim == 1 and bd.ndim == 1:
            ga, gb = g * bd, g * ad
        elif ad.ndim == 1:
            # out[..., m] = sum_k a[k] b[..., k, m]
            ga = np.matmul(bd, g[..., :, None])[..., 0]
            if ga.ndim > 1:
                ga = ga.reshape(-1, ga.shape[-1]).sum(axis=0)
            gb = _unbroadcast(ad[:, None] * g[..., None, :], bd.shape)
        elif bd.ndim == 1:
            # out[..., n] = sum_k a[..., n, k] b[k]
            ga = _unbroadcast(g[..., :, None] * bd, ad.shape)
            gb = np.matmul(ad.swapaxes(-1, -2), g[..., None])[..., 0]
            if gb.ndim > 1:
                gb = gb.reshape(-1, gb.shape[-1]).sum(axis=0)
        else:
            ga = _unbroadcast(np.matmul(g, bd.swapaxes(-1, -2)), ad.shape)
            gb = _unbroadcast(np.matmul(ad.swapaxes(-1, -2), g), bd.shape)
        if isinstance(a, Tensor):
            a._accum(ga)
        if isinstance(b, Tensor):
            b._accum(gb)

    return Tensor(out, parents, back)


def _unary(a, out, local):
    return Tensor(out, (a,), lambda g: a._accum(g * local))


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(_data(x))
    out = np.exp(x.data)
    return _unary(x, out, out)


def expm1(x):
    if not isinstance(x, Tensor):
        return np.expm1(_data(x))
    return _unary(x, np.expm1(x.data), np.exp(x.data))


def log(x):
    if not isinstance(x, Tensor):
        return np.log(_data(x))
    return _unary(x, np.log(x.data), 1.0 / x.data)


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(_data(x))
    out = np.tanh(x.data)
    return _unary(x, out, 1.0 - out * out)


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    if not isinstance(x, Tensor):
        return _sigmoid_np(np.asarray(_data(x)))
    out = _sigmoid_np(x.data)
    return _unary(x, out, out * (1.0 - out))


def _softplus_np(x):
    return np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))


def softplus(x):
    if not isinstance(x, Tensor):
        return _softplus_np(np.asarray(_data(x), dtype=np.float64))
    return _unary(x, _softplus_np(x.data), _sigmoid_np(x.data))


def relu(x):
    if not isinstance(x, Tensor):
        return np.maximum(_data(x), 0.0)
    return _unary(x, np.maximum(x.data, 0.0), (x.data > 0).astype(np.float64))


def leaky_relu(x, slope=0.2):
    if not isinstance(x, Tensor):
        xd = _data(x)
        return np.where(xd > 0, xd, slope * xd)
    local = np.where(x.data > 0, 1.0, slope)
    return _unary(x, np.where(x.data > 0, x.data, slope * x.data), local)


def where(cond, a, b):
    """Select elementwise by a constant boolean mask."""
    cond = np.asarray(cond, dtype=bool)
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return np.where(cond, _data(a), _data(b))
    out = np.where(cond, _data(a), _data(b))
    zeros = np.zeros_like(out)
    return _binary(
        a, b, out,
        lambda g: np.where(cond, g, zeros),
        lambda g: np.where(cond, zeros, g),
    )


def concat(parts, axis=0):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.concatenate([_data(p) for p in parts], axis=axis)
    datas = [_data(p) for p in parts]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)
    parents = tuple(p for p in parts if isinstance(p, Tensor))

    def back(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if isinstance(p, Tensor):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accum(g[tuple(sl)])

    return Tensor(out, parents, back)


def stack(parts, axis=0):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.stack([_data(p) for p in parts], axis=axis)
    out = np.stack([_data(p) for p in parts], axis=axis)
    parents = tuple(p for p in parts if isinstance(p, Tensor))

    def back(g):
        for i, p in enumerate(parts):
            if isinstance(p, Tensor):
                p._accum(np.take(g, i, axis=axis))

    return Tensor(out, parents, back)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
