"""Differentiable primitives.

Every function accepts Tensors or array-likes, returns a new Tensor, and
records a backward closure on the active tape when any input requires a
gradient. Broadcasting follows numpy; gradients are summed back to the
input shapes.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, active_tape, as_tensor


class ShapeError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised by :func:`inv` for singular or near-singular input."""

    def __init__(self, condition, shape):
        self.condition = condition
        super().__init__(
            f"matrix of shape {shape} is singular to working precision "
            f"(condition estimate {condition:.3e})"
        )


# Inverse refuses matrices whose 2-norm condition number exceeds this.
MAX_CONDITION = 1e13


def _make(data, inputs, backward):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a, b, opname):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape))

    return _make(out, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def square(a):
    a = as_tensor(a)
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def sin(a):
    a = as_tensor(a)
    ad = a.data
    return _make(np.sin(ad), (a,), lambda g: (g * np.cos(ad),))


def cos(a):
    a = as_tensor(a)
    ad = a.data
    return _make(np.cos(ad), (a,), lambda g: (-g * np.sin(ad),))


def atan2(y, x):
    y, x = as_tensor(y), as_tensor(x)
    _check_broadcast(y, x, "atan2")
    yd, xd = y.data, x.data
    r2 = xd * xd + yd * yd

    def backward(g):
        return (_unbroadcast(g * xd / r2, yd.shape), _unbroadcast(-g * yd / r2, xd.shape))

    return _make(np.arctan2(yd, xd), (y, x), backward)


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a):
    a = as_tensor(a)
    # split form avoids overflow in exp for large |x|
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


# -- reductions and shape ---------------------------------------------------

def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(out, (a,), backward)


def mean(a, axis=None):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return reduce_sum(a, axis=axis) * (1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def getitem(a, index):
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _make(a.data[index], (a,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _make(out, tuple(tensors), backward)


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0:
        raise ShapeError("matmul does not accept scalars")
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape} are not aligned")
    out = ad @ bd

    def backward(g):
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd, g * ad
        if ad.ndim == 1:
            return bd @ g, np.outer(ad, g)
        if bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(out, (a, b), backward)


def inv(a, max_condition=MAX_CONDITION):
    """Inverse of a small square matrix.

    Raises SingularMatrixError carrying the condition estimate when the
    matrix is singular or worse conditioned than ``max_condition``.
    """
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"inv expects a square matrix, got {a.shape}")
    cond = np.linalg.cond(a.data)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularMatrixError(float(cond), a.shape)
    out = np.linalg.inv(a.data)

    def backward(g):
        return (-out.T @ g @ out.T,)

    return _make(out, (a,), backward)


# -- convolution and pooling ------------------------------------------------

def conv1d(x, kernel, bias=None):
    """Valid, stride-1 cross-correlation.

    x: (n, C, W); kernel: (F, C, k); bias: (F,). Returns (n, F, W - k + 1).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 3 or x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {kernel.shape}")
    n, c, w = x.shape
    f, _, k = kernel.shape
    wo = w - k + 1
    if wo < 1:
        raise ShapeError(f"conv1d: kernel width {k} exceeds input width {w}")
    cols = sliding_window_view(x.data, k, axis=2)              # n, C, Wo, k
    cols = cols.transpose(0, 2, 1, 3).reshape(n * wo, c * k)
    kmat = kernel.data.reshape(f, c * k)
    out = (cols @ kmat.T).reshape(n, wo, f)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    out = out.transpose(0, 2, 1)

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(n * wo, f)
        gk = (g2.T @ cols).reshape(f, c, k)
        gx = None
        if x.requires_grad:
            dcols = (g2 @ kmat).reshape(n, wo, c, k)
            gx = np.zeros((n, c, w))
            for j in range(k):
                gx[:, :, j:j + wo] += dcols[:, :, :, j].transpose(0, 2, 1)
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2))

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _make(np.ascontiguousarray(out), inputs, backward)


def conv2d(x, kernel, bias=None):
    """Valid, stride-1 2-D cross-correlation.

    x: (n, C, H, W); kernel: (F, C, kh, kw); bias: (F,).
    Returns (n, F, H - kh + 1, W - kw + 1).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {kernel.shape}")
    n, c, h, w = x.shape
    f, _, kh, kw = kernel.shape
    ho, wo = h - kh + 1, w - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {(kh, kw)} larger than input {(h, w)}")
    cols = sliding_window_view(x.data, (kh, kw), axis=(2, 3))  # n, C, Ho, Wo, kh, kw
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    kmat = kernel.data.reshape(f, c * kh * kw)
    out = (cols @ kmat.T).reshape(n, ho, wo, f)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    out = out.transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        gk = (g2.T @ cols).reshape(f, c, kh, kw)
        gx = None
        if x.requires_grad:
            dcols = (g2 @ kmat).reshape(n, ho, wo, c, kh, kw)
            gx = np.zeros((n, c, h, w))
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i:i + ho, j:j + wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3))

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _make(np.ascontiguousarray(out), inputs, backward)


def maxpool1d(x, size=2):
    """Non-overlapping max pooling along the last axis; a ragged tail is dropped."""
    x = as_tensor(x)
    shape = x.shape
    w = shape[-1]
    wo = w // size
    if wo < 1:
        raise ShapeError(f"maxpool1d: width {w} smaller than pool size {size}")
    blocks = x.data[..., :wo * size].reshape(shape[:-1] + (wo, size))
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gx = np.zeros(shape)
        gx[..., :wo * size] = gb.reshape(shape[:-1] + (wo * size,))
        return (gx,)

    return _make(out, (x,), backward)
