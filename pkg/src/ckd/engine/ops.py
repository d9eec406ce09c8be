"""Differentiable ops.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per input (``None`` when an input
does not need one). Non-differentiable points use the subgradient 0
(ReLU at 0, ties in max pooling go to the first maximal element).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ckd import kernels
from ckd.engine.tensor import ShapeError, Tensor, as_tensor


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise arithmetic ----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return Tensor._from_op(a.data * c, (a,), lambda g: (g * c,))


# -- linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product; 3-d operands are treated as stacks with equal leading dim."""
    a, b = as_tensor(a), as_tensor(b)
    ok = a.ndim == b.ndim and a.ndim in (2, 3) and a.shape[-1] == b.shape[-2]
    if ok and a.ndim == 3:
        ok = a.shape[0] == b.shape[0]
    if not ok:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data @ b.data, (a, b), backward)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor._from_op(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def conv2d(x, weight, bias=None, padding: int = 0) -> Tensor:
    """Stride-1 cross-correlation. x: N,C,H,W; weight: O,C,k,k; bias: O."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1] or weight.shape[2] != weight.shape[3]:
        raise ShapeError("conv2d", x.shape, weight.shape)
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    oh, ow = h + 2 * padding - k + 1, w + 2 * padding - k + 1
    if oh < 1 or ow < 1:
        raise ShapeError("conv2d", x.shape, weight.shape, detail="kernel larger than padded input")
    cols = kernels.im2col(x.data, k, padding).reshape(n, c * k * k, oh * ow)
    wmat = weight.data.reshape(o, -1)
    out = np.matmul(wmat, cols)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeError("conv2d", weight.shape, bias.shape, detail="bias")
        out += bias.data[:, None]
        parents.append(bias)

    def backward(g):
        g = g.reshape(n, o, oh * ow)
        gx = gw = None
        if x.requires_grad:
            gx = kernels.col2im(np.matmul(wmat.T, g).reshape(n, -1, oh, ow), x.shape, k, padding)
        if weight.requires_grad:
            gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)) if bias.requires_grad else None)
        return grads

    return Tensor._from_op(out.reshape(n, o, oh, ow), parents, backward)


def linear(x, weight, bias=None) -> Tensor:
    """x @ weight.T + bias with weight stored as (out, in)."""
    out = matmul(x, transpose(weight))
    return add(out, bias) if bias is not None else out


# -- pooling -----------------------------------------------------------------------

def _check_pool(op, x, size):
    if x.ndim != 4 or size < 1 or x.shape[2] < size or x.shape[3] < size:
        raise ShapeError(op, x.shape, (size, size))


def max_pool2d(x, size: int = 2) -> Tensor:
    x = as_tensor(x)
    _check_pool("max_pool2d", x, size)
    out, idx = kernels.maxpool_forward(x.data, size)
    return Tensor._from_op(out, (x,), lambda g: (kernels.maxpool_backward(g, idx, x.shape, size),))


def avg_pool2d(x, size: int = 2) -> Tensor:
    x = as_tensor(x)
    _check_pool("avg_pool2d", x, size)
    out = kernels.avgpool_forward(x.data, size)
    return Tensor._from_op(out, (x,), lambda g: (kernels.avgpool_backward(g, x.shape, size),))


# -- pointwise nonlinearities ------------------------------------------------------------

def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor._from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return Tensor._from_op(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * 0.5 / out,))


def softmax(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return Tensor._from_op(out, (x,), backward)


# -- reductions and shape ops ---------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(np.asarray(out), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(x.shape),))


def flatten(x, start_dim: int = 1) -> Tensor:
    x = as_tensor(x)
    return reshape(x, x.shape[:start_dim] + (-1,))


def concatenate(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concatenate", *(t.shape for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(out, tensors, backward)


def index(x, key) -> Tensor:
    x = as_tensor(x)
    out = x.data[key]

    def backward(g):
        full = np.zeros(x.shape)
        np.add.at(full, key, g)
        return (full,)

    return Tensor._from_op(np.array(out, dtype=np.float64), (x,), backward)


def frobenius_norm(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt((x.data * x.data).sum())

    def backward(g):
        if out == 0.0:
            return (np.zeros(x.shape),)
        return (g * x.data / out,)

    return Tensor._from_op(np.asarray(out), (x,), backward)


def detach(x) -> Tensor:
    return Tensor(as_tensor(x).data)
