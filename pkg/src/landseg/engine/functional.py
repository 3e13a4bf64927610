"""Differentiable primitives over :class:`Tensor`.

Every op computes its forward result with numpy and, when any input requires a
gradient, registers a closure returning one gradient per input (``None`` for
inputs that need none).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DimensionError, ParameterError, Tensor


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add: cannot broadcast {a.shape} with {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"mul: cannot broadcast {a.shape} with {b.shape}") from exc

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(out, (a, b), backward, "mul")


def neg(x: Tensor) -> Tensor:
    return Tensor.from_op(-x.data, (x,), lambda g: (-g,), "neg")


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(g, shape).astype(g.dtype, copy=True),)

    return Tensor.from_op(np.asarray(x.data.sum(), dtype=x.dtype), (x,), backward, "sum")


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    shape = x.shape

    def backward(g):
        return (np.full(shape, g / n, dtype=g.dtype),)

    return Tensor.from_op(np.asarray(x.data.mean(), dtype=x.dtype), (x,), backward, "mean")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


def stable_sigmoid(v: np.ndarray) -> np.ndarray:
    """Logistic function without overflow for large |v|."""
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(v.dtype)


def sigmoid(x: Tensor) -> Tensor:
    s = stable_sigmoid(x.data)
    return Tensor.from_op(s, (x,), lambda g: (g * s * (1 - s),), "sigmoid")


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout. Identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("training-mode dropout needs an explicit generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return Tensor.from_op(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- layout ops

def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise DimensionError("concat_channels expects NCHW tensors")
    for axis, label in ((0, "N"), (2, "H"), (3, "W")):
        if a.shape[axis] != b.shape[axis]:
            raise DimensionError(f"concat_channels: axis {label} differs ({a.shape[axis]} vs {b.shape[axis]})")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return Tensor.from_op(out, (a, b), lambda g: (g[:, :ca], g[:, ca:]), "concat")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour doubling of H and W."""
    if x.data.ndim != 4:
        raise DimensionError("upsample2x expects an NCHW tensor")
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    n, c, h, w = x.shape

    def backward(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return Tensor.from_op(out, (x,), backward, "upsample2x")


def avgpool2d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping k×k mean pooling (stride k)."""
    n, c, h, w = x.shape
    if h % k or w % k:
        raise DimensionError(f"avgpool2d: H={h}, W={w} not divisible by {k}")
    out = x.data.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))
    scale = x.dtype.type(1.0 / (k * k))

    def backward(g):
        return ((g * scale).repeat(k, axis=2).repeat(k, axis=3),)

    return Tensor.from_op(out.astype(x.dtype), (x,), backward, "avgpool2d")


# ---------------------------------------------------------------- convolution

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d: input must be NCHW, got {x.data.ndim} axes")
    if weight.data.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv2d: weight must be O×I×k×k, got {weight.shape}")
    n, c, h, w = x.shape
    o, i, k, _ = weight.shape
    if i != c:
        raise DimensionError(f"conv2d: channel axis mismatch, input has {c}, weight expects {i}")
    if bias is not None and bias.shape != (o,):
        raise DimensionError(f"conv2d: bias axis 0 is {bias.shape}, expected ({o},)")
    if stride < 1 or k < 1 or padding < 0:
        raise ParameterError("conv2d: need k >= 1, stride >= 1, padding >= 0")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: kernel {k} larger than padded input {h}x{w}")

    w2 = weight.data.reshape(o, c * k * k)
    fast = k == 1 and stride == 1 and padding == 0
    npix = n * ho * wo

    def im2col(xd: np.ndarray) -> np.ndarray:
        # rows C*k*k, columns N*Ho*Wo
        if fast:
            return np.ascontiguousarray(xd.transpose(1, 0, 2, 3)).reshape(c, npix)
        if padding:
            xd = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        win = sliding_window_view(xd, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]  # N C Ho Wo k k
        return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(c * k * k, npix)

    out = w2 @ im2col(x.data)
    if bias is not None:
        out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))

    need_x = x.requires_grad
    need_w = weight.requires_grad
    # the columns are rebuilt in backward rather than kept: k*k times smaller graph
    x_saved = x.data if need_w else None

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, npix)
        gw = (g2 @ im2col(x_saved).T).reshape(weight.shape) if need_w else None
        gb = g2.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if need_x:
            gcols = w2.T @ g2
            if fast:
                gx = np.ascontiguousarray(gcols.reshape(c, n, h, w).transpose(1, 0, 2, 3))
            else:
                gcols = gcols.reshape(c, k, k, n, ho, wo)
                gxp = np.zeros((c, n, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
                for di in range(k):
                    for dj in range(k):
                        gxp[:, :, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += gcols[:, di, dj]
                gx = np.ascontiguousarray(gxp[:, :, padding:padding + h, padding:padding + w].transpose(1, 0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "conv2d")


# ---------------------------------------------------------------- pooling

def maxpool2d(x: Tensor, k: int = 2, stride: int = 2, padding: int = 0) -> Tensor:
    """Max pooling; the gradient goes to the first maximum in row-major window order."""
    if x.data.ndim != 4:
        raise DimensionError("maxpool2d expects an NCHW tensor")
    n, c, h, w = x.shape
    if padding == 0 and (h % stride or w % stride):
        raise DimensionError(f"maxpool2d: H={h}, W={w} not divisible by stride {stride}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                constant_values=-np.inf) if padding else x.data
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if k == stride and padding == 0:
        flat = x.data.reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)
    else:
        flat = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride].reshape(n, c, ho, wo, k * k)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    out = np.ascontiguousarray(out)

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for di in range(k):
            for dj in range(k):
                hit = arg == di * k + dj
                gxp[:, :, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += np.where(hit, g, 0)
        return (gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp,)

    return Tensor.from_op(out, (x,), backward, "maxpool2d")


# ---------------------------------------------------------------- normalization

def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    In training mode the running buffers are updated in place (unbiased batch
    variance, as is conventional); eval mode reads them and mutates nothing.
    """
    if x.data.ndim != 4:
        raise DimensionError("batchnorm2d expects an NCHW tensor")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm2d: channel axis is {c}, gamma/beta have {gamma.shape}/{beta.shape}")
    dt = x.dtype.type
    if training:
        m = x.data.size // c
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
    inv = (1.0 / np.sqrt(var + dt(eps))).astype(x.dtype)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g):
        gg = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data[None, :, None, None]
            if training:
                mean_g = gxhat.mean(axis=(0, 2, 3), keepdims=True)
                mean_gx = (gxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
                gx = (gxhat - mean_g - xhat * mean_gx) * inv[None, :, None, None]
            else:
                gx = gxhat * inv[None, :, None, None]
        return gx, gg, gbeta

    return Tensor.from_op(out.astype(x.dtype), (x, gamma, beta), backward, "batchnorm2d")
