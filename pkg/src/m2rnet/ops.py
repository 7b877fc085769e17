"""Differentiable array operations used by the network layers.

Feature maps are laid out ``[N, C, H, W]``; most operations also accept an
unbatched ``[C, H, W]`` map.  All gradients are exact (no approximations),
and max-type reductions route their gradient to the first maximal element
in row-major scan order.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import DimensionError
from .tensor import Tensor, as_tensor, broadcast_shape, clip, exp, log, note_kink, unbroadcast

__all__ = [
    "matmul", "relu", "sigmoid", "softmax", "conv2d", "max_pool2d",
    "global_max_pool", "channel_max_pool", "resample", "interpolation_matrix",
    "concat", "batchnorm2d", "clip", "exp", "log",
]


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} (axis -1 = {a.shape[-1]}) vs "
            f"{b.shape} (axis -2 = {b.shape[-2]})")
    broadcast_shape(a.shape[:-2], b.shape[:-2])

    def backward(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data @ b.data, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    note_kink(mask)
    return Tensor._from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    return Tensor._from_op(s, (x,), lambda g: (g * s * (1.0 - s),))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return Tensor._from_op(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


# -- convolution --------------------------------------------------------------

def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (C*k*k, N*ho*wo) patch matrix."""
    n, c = xp.shape[:2]
    xt = xp.transpose(1, 0, 2, 3)
    cols = np.empty((c, k, k, n, ho, wo))
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xt[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]
    return cols.reshape(c * k * k, n * ho * wo)


def _col2im(cols: np.ndarray, shape, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patches back to (N, C, Hp, Wp)."""
    n, c, hp, wp = shape
    cols = cols.reshape(c, k, k, n, ho, wo)
    out = np.zeros((c, n, hp, wp))
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += cols[:, i, j]
    return out.transpose(1, 0, 2, 3)


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation of ``x`` ([N,]C_in,H,W) with ``weight`` (C_out,C_in,k,k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    unbatched = x.ndim == 3
    if x.ndim not in (3, 4):
        raise DimensionError(f"conv2d input must be [C,H,W] or [N,C,H,W], got {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3] or weight.shape[2] % 2 == 0:
        raise DimensionError(f"conv2d weight must be [C_out,C_in,k,k] with odd k, got {weight.shape}")
    xd = x.data[None] if unbatched else x.data
    n, c, h, w = xd.shape
    c_out, c_in, k, _ = weight.shape
    if c != c_in:
        raise DimensionError(f"conv2d channel axis: input has {c}, weight expects {c_in}")
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d bias must be ({c_out},), got {bias.shape}")
    if stride < 1 or pad < 0:
        raise DimensionError(f"conv2d needs stride >= 1 and pad >= 0, got {stride}, {pad}")
    hp, wp = h + 2 * pad, w + 2 * pad
    if hp < k or wp < k or (hp - k) % stride or (wp - k) % stride:
        raise DimensionError(
            f"conv2d spatial axes ({h},{w}) with k={k}, pad={pad}, stride={stride} "
            "do not give an integral output size")
    ho, wo = (hp - k) // stride + 1, (wp - k) // stride + 1

    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    cols = _im2col(xp, k, stride, ho, wo)
    wmat = weight.data.reshape(c_out, -1)
    out = (wmat @ cols).reshape(c_out, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[:, None, None]

    def backward(g):
        if unbatched:
            g = g[None]
        gmat = g.transpose(1, 0, 2, 3).reshape(c_out, -1)
        gx = gw = gb = None
        if x.requires_grad:
            gxp = _col2im(wmat.T @ gmat, (n, c, hp, wp), k, stride, ho, wo)
            gx = gxp[:, :, pad:pad + h, pad:pad + w]
            if unbatched:
                gx = gx[0]
        if weight.requires_grad:
            gw = (gmat @ cols.T).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = gmat.sum(axis=1)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return Tensor._from_op(out[0] if unbatched else out, parents, backward)


# -- pooling ------------------------------------------------------------------

def _one_hot_argmax(flat: np.ndarray) -> np.ndarray:
    """One-hot of the first maximum along the last axis."""
    idx = flat.argmax(axis=-1)
    note_kink(idx)
    mask = np.zeros_like(flat)
    np.put_along_axis(mask, idx[..., None], 1.0, axis=-1)
    return mask


def max_pool2d(x, size: int = 2) -> Tensor:
    """Non-overlapping ``size``x``size`` max pooling over the last two axes."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    if h % size or w % size or h == 0 or w == 0:
        raise DimensionError(f"max_pool2d: spatial axes {h}x{w} not divisible by {size}")
    lead = x.shape[:-2]
    blocks = x.data.reshape(*lead, h // size, size, w // size, size)
    nd = len(lead)
    blocks = np.moveaxis(blocks, nd + 1, nd + 2).reshape(*lead, h // size, w // size, size * size)
    mask = _one_hot_argmax(blocks)
    out = blocks.max(axis=-1)

    def backward(g):
        gb = (mask * g[..., None]).reshape(*lead, h // size, w // size, size, size)
        return (np.moveaxis(gb, nd + 2, nd + 1).reshape(x.shape),)

    return Tensor._from_op(out, (x,), backward)


def global_max_pool(x) -> Tensor:
    """Per-channel spatial maximum: [..., C, H, W] -> [..., C, 1, 1]."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-1] * x.shape[-2] == 0:
        raise DimensionError(f"global_max_pool needs a non-empty spatial extent, got {x.shape}")
    flat = x.data.reshape(*x.shape[:-2], -1)
    mask = _one_hot_argmax(flat).reshape(x.shape)
    out = flat.max(axis=-1)[..., None, None]
    return Tensor._from_op(out, (x,), lambda g: (mask * g,))


def channel_max_pool(x) -> Tensor:
    """Per-position maximum over channels: [..., C, H, W] -> [..., 1, H, W]."""
    x = as_tensor(x)
    if x.ndim < 3 or x.shape[-3] == 0 or x.size == 0:
        raise DimensionError(f"channel_max_pool needs a non-empty channel axis, got {x.shape}")
    moved = np.moveaxis(x.data, -3, -1)
    mask = np.moveaxis(_one_hot_argmax(moved), -1, -3)
    out = x.data.max(axis=-3, keepdims=True)
    return Tensor._from_op(out, (x,), lambda g: (mask * g,))


# -- resampling ---------------------------------------------------------------

def interpolation_matrix(n_in: int, n_out: int, mode: str = "bilinear") -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix for 1-D half-pixel resampling."""
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    scale = n_in / n_out
    if mode == "nearest":
        src = np.minimum(np.floor(rows * scale).astype(int), n_in - 1)
        m[rows, src] = 1.0
    elif mode == "bilinear":
        src = np.clip((rows + 0.5) * scale - 0.5, 0.0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        np.add.at(m, (rows, lo), 1.0 - frac)
        np.add.at(m, (rows, hi), frac)
    else:
        raise ValueError(f"unknown resample mode {mode!r}")
    return m


def resample(x, size, mode: str = "bilinear") -> Tensor:
    """Resize the last two axes to ``size = (H', W')``."""
    x = as_tensor(x)
    ho, wo = size
    if ho < 1 or wo < 1:
        raise DimensionError(f"resample target must be >= 1x1, got {size}")
    h, w = x.shape[-2:]
    if (h, w) == (ho, wo):
        return x
    rh = interpolation_matrix(h, ho, mode)
    rw = interpolation_matrix(w, wo, mode)
    out = rh @ x.data @ rw.T
    return Tensor._from_op(out, (x,), lambda g: (rh.T @ g @ rw,))


def concat(tensors, axis: int = -3) -> Tensor:
    """Stack along ``axis`` (the channel axis by default)."""
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or t.shape[:ax] + t.shape[ax + 1:] != ref.shape[:ax] + ref.shape[ax + 1:]:
            raise DimensionError(f"concat along axis {axis}: shapes {ref.shape} and {t.shape} differ off-axis")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward)


# -- normalization ------------------------------------------------------------

def batchnorm2d(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalization over (N, H, W) per channel.

    In training mode the running statistics arrays are updated in place
    (variance with Bessel's correction); in eval mode they are used as is.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 4:
        raise DimensionError(f"batchnorm2d expects [N,C,H,W], got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm2d channel axis: input has {c}, gamma/beta are {gamma.shape}/{beta.shape}")
    count = x.shape[0] * x.shape[2] * x.shape[3]
    if count < 1:
        raise DimensionError("batchnorm2d needs N*H*W >= 1")

    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        unbiased = var * count / (count - 1) if count > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mean, var = running_mean.copy(), running_var.copy()
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[:, None, None]) * inv_std[:, None, None]
    g4, b4 = gamma.data[:, None, None], beta.data[:, None, None]

    def backward(g):
        gx = None
        if x.requires_grad:
            dxhat = g * g4
            if training:
                s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = inv_std[:, None, None] / count * (count * dxhat - s1 - xhat * s2)
            else:
                gx = dxhat * inv_std[:, None, None]
        gg = (g * xhat).sum(axis=(0, 2, 3)) if gamma.requires_grad else None
        gbeta = g.sum(axis=(0, 2, 3)) if beta.requires_grad else None
        return gx, gg, gbeta

    return Tensor._from_op(xhat * g4 + b4, (x, gamma, beta), backward)
