"""Registered finite-difference cases: ``(name, case(rng) -> (fn, inputs, max_entries), n_trials)``.

Inputs of kinked ops (relu, max pools) are drawn away from the kinks so
central differences stay on one linear piece.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .aiam import AIAM, DecoderFuse
from .config import EncoderConfig
from .losses import LossConfig, bce_loss, jhol_loss, total_loss
from .ndam import NDAM
from .network import build
from .tensor import Tensor


def _t(a):
    return Tensor(a, requires_grad=True)


def _proj(rng, shape):
    # fixed per case so every fn() call sees the same projection
    return Tensor(rng.standard_normal(shape))


def _spread(rng, shape, gap=0.05):
    """Distinct values at least ``gap`` apart, randomly placed."""
    n = int(np.prod(shape))
    return (rng.permutation(n) * gap + rng.uniform(0, gap / 10, n)).reshape(shape) - n * gap / 2


def _unary(op, low=-2.0, high=2.0, away=0.0):
    def case(rng):
        data = rng.uniform(low, high, (2, 3, 4))
        if away:
            data = np.where(np.abs(data) < away, np.sign(data + 1e-12) * away, data)
        x = _t(data)
        w = _proj(rng, x.shape)
        return (lambda: (op(x) * w).sum()), [x], None
    return case


def _clip(rng):
    data = rng.uniform(-2.0, 2.0, (2, 3, 4))
    near = np.abs(np.abs(data) - 1.0) < 0.01
    data[near] *= 1.05
    x = _t(data)
    w = _proj(rng, x.shape)
    return (lambda: (ops.clip(x, -1.0, 1.0) * w).sum()), [x], None


def _binary(op, positive_rhs=False):
    def case(rng):
        a = _t(rng.standard_normal((2, 3, 4)))
        b = _t(rng.uniform(0.5, 2.0, (3, 1)) if positive_rhs else rng.standard_normal((3, 1)))
        w = _proj(rng, (2, 3, 4))
        return (lambda: (op(a, b) * w).sum()), [a, b], None
    return case


def _matmul(rng):
    a, b = _t(rng.standard_normal((2, 3, 4))), _t(rng.standard_normal((4, 5)))
    w = _proj(rng, (2, 3, 5))
    return (lambda: (ops.matmul(a, b) * w).sum()), [a, b], None


def _softmax(rng):
    x = _t(rng.standard_normal((3, 4, 5)) * 2)
    axis = int(rng.integers(-3, 3))
    w = _proj(rng, x.shape)
    return (lambda: (ops.softmax(x, axis) * w).sum()), [x], None


def _conv(rng):
    k = int(rng.choice([1, 3, 5, 7]))
    stride = int(rng.integers(1, 3))
    size = 2 * int(rng.integers(2, 5)) + 1
    pad = k // 2
    x = _t(rng.standard_normal((2, 2, size, size)))
    wt = _t(rng.standard_normal((3, 2, k, k)))
    b = _t(rng.standard_normal(3))
    out = ops.conv2d(x, wt, b, stride, pad)
    w = _proj(rng, out.shape)
    return (lambda: (ops.conv2d(x, wt, b, stride, pad) * w).sum()), [x, wt, b], None


def _pool(op, shape):
    def case(rng):
        x = _t(_spread(rng, shape))
        w = _proj(rng, op(x).shape)
        return (lambda: (op(x) * w).sum()), [x], None
    return case


def _resample(rng):
    mode = str(rng.choice(["bilinear", "nearest"]))
    h, w_ = (int(v) for v in rng.integers(1, 6, 2))
    size = tuple(int(v) for v in rng.integers(1, 9, 2))
    x = _t(rng.standard_normal((2, 2, h, w_)))
    w = _proj(rng, (2, 2) + size)
    return (lambda: (ops.resample(x, size, mode) * w).sum()), [x], None


def _concat(rng):
    a, b = _t(rng.standard_normal((2, 2, 3, 3))), _t(rng.standard_normal((2, 3, 3, 3)))
    w = _proj(rng, (2, 5, 3, 3))
    return (lambda: (ops.concat([a, b]) * w).sum()), [a, b], None


def _batchnorm(rng):
    training = bool(rng.integers(2))
    x = _t(rng.standard_normal((3, 2, 3, 3)))
    g, b = _t(rng.uniform(0.5, 2.0, 2)), _t(rng.standard_normal(2))
    rm, rv = rng.standard_normal(2), rng.uniform(0.5, 2.0, 2)
    w = _proj(rng, x.shape)
    return (lambda: (ops.batchnorm2d(x, g, b, rm.copy(), rv.copy(), training) * w).sum()), [x, g, b], None


def _reductions(rng):
    x = _t(rng.standard_normal((2, 3, 4)))
    w = _proj(rng, (2, 4))
    return (lambda: (x.sum(axis=1) * w).sum() + x.mean() * 3.0
            + (x.reshape(6, 4).T * _proj(np.random.default_rng(0), (4, 6))).sum()), [x], None


def _module_inputs(module):
    return [p for p in module.parameters()]


def _ndam(rng):
    c = int(rng.choice([4, 8, 16]))
    h = int(rng.integers(2, 6))
    block = NDAM(3, c, rng, phase1=True, phase2=True)
    # unit-scale features give attention logits large enough that the h**2
    # truncation term of a central difference dominates
    f_rgb, f_d = (_t(0.5 * rng.standard_normal((2, c, h, h))) for _ in range(2))
    w = _proj(rng, f_rgb.shape)
    inputs = [f_rgb, f_d] + _module_inputs(block)
    return (lambda: (block(f_rgb, f_d) * w).sum()), inputs, 6


def _aiam(rng):
    c_low, c_mid, c_high = (int(v) for v in rng.integers(2, 6, 3))
    h = 2 * int(rng.integers(1, 4))
    block = AIAM(3, c_low, c_mid, c_high, rng)
    block.eval()  # fixed BN statistics keep the map smooth in every input
    for m in block.modules():
        if hasattr(m, "running_var"):
            m.running_mean[:] = rng.standard_normal(m.running_mean.shape) * 0.1
            m.running_var[:] = rng.uniform(0.5, 2.0, m.running_var.shape)
    low = _t(rng.standard_normal((2, c_low, 2 * h, 2 * h)))
    mid = _t(rng.standard_normal((2, c_mid, h, h)))
    high = _t(rng.standard_normal((2, c_high, h // 2, h // 2)))
    w = _proj(rng, mid.shape)
    inputs = [low, mid, high] + _module_inputs(block)
    return (lambda: (block(low, mid, high) * w).sum()), inputs, 6


def _decoder_fuse(rng):
    c, h = int(rng.integers(1, 5)), int(rng.integers(2, 6))
    block = DecoderFuse(c, rng)
    a, b = _t(rng.standard_normal((2, c, h, h))), _t(rng.standard_normal((2, c, h, h)))
    w = _proj(rng, a.shape)
    return (lambda: (block(a, b) * w).sum()), [a, b] + _module_inputs(block), None


def _maps(rng, shape):
    pred = _t(rng.uniform(0.05, 0.95, shape))
    gt = Tensor((rng.random(shape) < 0.4).astype(float))
    gt.data.reshape(-1)[0] = 1.0  # at least one foreground pixel
    return pred, gt


def _bce(rng):
    pred, gt = _maps(rng, (2, 4, 4))
    reduction = str(rng.choice(["mean", "sum"]))
    return (lambda: bce_loss(pred, gt, reduction)), [pred], None


def _jhol(rng):
    pred, gt = _maps(rng, (2, 1, 5, 5))
    cfg = LossConfig(lambdas=tuple(rng.uniform(0.2, 1.5, 4)), l4_complement=bool(rng.integers(2)))
    return (lambda: jhol_loss(pred, gt, cfg)), [pred], None


def _total(rng):
    pred, gt = _maps(rng, (2, 1, 4, 4))
    side = _t(rng.uniform(0.05, 0.95, (2, 1, 2, 2)))
    return (lambda: total_loss(pred, gt, LossConfig(), [side])), [pred, side], None


NETWORK_CONFIG = EncoderConfig(channels=(4, 4, 8, 8, 8), resolution=16, decoder_channels=4,
                               deep_supervision=True)


NETWORK_BATCH = 4  # batch statistics of 2 samples at the 1x1 top level are too curved


def _network(rng):
    model = build(NETWORK_CONFIG, seed=int(rng.integers(2**31)))
    n = NETWORK_BATCH
    rgb = _t(rng.uniform(0, 1, (n, 3, 16, 16)))
    depth = _t(rng.uniform(0, 1, (n, 1, 16, 16)))
    gt = Tensor((rng.random((n, 1, 16, 16)) < 0.4).astype(float))

    def fn():
        out = model(rgb, depth)
        return total_loss(out.saliency, gt, LossConfig(), out.sides)

    params = model.parameters()
    picked = [params[i] for i in rng.choice(len(params), 8, replace=False)]
    return fn, [rgb, depth] + picked, 3


CASES = [
    ("add", _binary(lambda a, b: a + b), 100),
    ("sub", _binary(lambda a, b: a - b), 100),
    ("mul", _binary(lambda a, b: a * b), 100),
    ("div", _binary(lambda a, b: a / b, positive_rhs=True), 100),
    ("neg", _unary(lambda x: -x), 100),
    ("exp", _unary(ops.exp), 100),
    ("log", _unary(ops.log, 0.2, 3.0), 100),
    ("clip", _clip, 100),
    ("relu", _unary(ops.relu, away=0.01), 100),
    ("sigmoid", _unary(ops.sigmoid), 100),
    ("reductions/reshape/transpose", _reductions, 100),
    ("matmul", _matmul, 100),
    ("softmax", _softmax, 100),
    ("conv2d", _conv, 100),
    ("max_pool2d", _pool(ops.max_pool2d, (2, 2, 4, 6)), 100),
    ("global_max_pool", _pool(ops.global_max_pool, (2, 3, 3, 4)), 100),
    ("channel_max_pool", _pool(ops.channel_max_pool, (2, 4, 3, 3)), 100),
    ("resample", _resample, 100),
    ("concat", _concat, 100),
    ("batchnorm2d", _batchnorm, 100),
    ("bce", _bce, 100),
    ("jhol", _jhol, 100),
    ("total_loss", _total, 100),
    ("ndam", _ndam, 100),
    ("aiam", _aiam, 100),
    ("decoder_fuse", _decoder_fuse, 100),
    ("network16", _network, 100),
]
