"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op builds a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  ``backward`` walks
the tape in reverse topological order and accumulates into leaf tensors that
have ``requires_grad`` set.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64
_active = [DEFAULT_DTYPE]


@contextmanager
def precision(dtype):
    """Build tensors in ``dtype`` inside the block (e.g. ``np.longdouble``)."""
    _active.append(np.dtype(dtype).type)
    try:
        yield
    finally:
        _active.pop()


class TensorError(Exception):
    """Base class for contract violations raised by tensor ops."""


class ShapeError(TensorError, ValueError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class NonFiniteError(TensorError, FloatingPointError):
    def __init__(self, op: str, count: int):
        self.op = op
        self.count = count
        super().__init__(f"{op}: produced {count} non-finite value(s)")


def _check_finite(op: str, arr: np.ndarray) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(op, int((~np.isfinite(arr)).sum()))
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # Sum out the axes numpy broadcasting added or stretched.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (),
                 _backward: Callable | None = None, op: str = "leaf"):
        if op == "leaf" or not isinstance(data, np.ndarray):
            arr = np.array(data, dtype=_active[-1], copy=True)
        else:
            arr = np.ascontiguousarray(data, dtype=_active[-1])
        self.data = _check_finite(op, arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape, ())
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, data: np.ndarray, parents: tuple, grad_fn: Callable) -> Tensor:
    out = Tensor(data, _parents=parents, op=op)
    if out.requires_grad:
        out._backward = grad_fn
    else:
        out._parents = ()
    return out


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# elementwise binary ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _make("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _make("div", out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


# elementwise unary ops

def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _make("log", out, (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)
    # d/dx sqrt(x) is unbounded at 0; the finiteness guard on the grad catches it
    def grad_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (_check_finite("sqrt.backward", g * 0.5 / out),)
    return _make("sqrt", out, (a,), grad_fn)


def arctan(a) -> Tensor:
    a = as_tensor(a)
    return _make("arctan", np.arctan(a.data), (a,), lambda g: (g / (1.0 + a.data * a.data),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


# linear algebra and shape ops

def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading (batch) dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def grad_fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("matmul", a.data @ b.data, (a, b), grad_fn)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make("transpose", np.transpose(a.data, axes), (a,),
                 lambda g: (np.transpose(g, inverse),))


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return _make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat", ())
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in ts)) from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make("concat", out, tuple(ts), grad_fn)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather rows (axis 0) or columns (axis 1) by integer index."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or (idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis])):
        raise ShapeError("take", a.shape, idx.shape)
    out = np.take(a.data, idx, axis=axis)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (full,)

    return _make("take", out, (a,), grad_fn)


def take_along(a, indices, axis: int) -> Tensor:
    """Pick one element per lane: ``out[..., 0, ...] = a[..., indices, ...]``."""
    a = as_tensor(a)
    idx = np.expand_dims(np.asarray(indices, dtype=np.int64), axis)
    out = np.take_along_axis(a.data, idx, axis=axis)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx, g, axis=axis)
        return (full,)

    return _make("take_along", out, (a,), grad_fn)


# reductions

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", out, (a,), grad_fn)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def max_axis(a, axis: int = -1, keepdims: bool = False) -> tuple[Tensor, np.ndarray]:
    """Max along an axis plus the argmax; ties resolve to the lowest index.

    The gradient is routed only to the selected element.
    """
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ShapeError("max_axis", a.shape)
    idx = np.argmax(a.data, axis=axis)
    vals = take_along(a, idx, axis=axis)
    if not keepdims:
        vals = reshape(vals, idx.shape)
    return vals, idx


def l2_norm(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (_check_finite("l2_norm.backward", g * a.data / out),)

    return _make("l2_norm", out if keepdims else np.squeeze(out, axis=axis), (a,), grad_fn)


def logsumexp(a, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Stable log-sum-exp; ``mask`` (0/1, broadcastable) drops entries from the sum."""
    a = as_tensor(a)
    # shift by the largest kept entry so a single survivor gives exactly itself
    kept = a.data if mask is None else np.where(np.broadcast_to(mask, a.shape) > 0, a.data, -np.inf)
    shift = kept.max(axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    if mask is None:
        e = exp(a - shift)
    else:
        # dropped entries are zeroed before exp so they cannot overflow
        e = exp((a - shift) * mask) * mask
    return log(sum(e, axis=axis)) + np.squeeze(shift, axis=axis)


# normalization

def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalization over axis 0 of an ``n x features`` tensor.

    In training mode the running statistics arrays are updated in place
    (unbiased variance, as in the usual convention).
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError("batch_norm", x.shape, gamma.shape, beta.shape)
    n = x.shape[0]
    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        unbiased = var * n / (n - 1) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std
    out = gamma.data * x_hat + beta.data

    def grad_fn(g):
        g_gamma = (g * x_hat).sum(axis=0)
        g_beta = g.sum(axis=0)
        gx_hat = g * gamma.data
        if training:
            gx = inv_std / n * (n * gx_hat - gx_hat.sum(axis=0) - x_hat * (gx_hat * x_hat).sum(axis=0))
        else:
            gx = gx_hat * inv_std
        return gx, g_gamma, g_beta

    return _make("batch_norm", out, (x, gamma, beta), grad_fn)


# reverse pass

def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ShapeError("backward", loss.shape, ())
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = np.asarray(pg, dtype=_active[-1])
