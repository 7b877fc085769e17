"""Nested dual attention over fused RGB + depth features.

The block sums the two modalities and refines the result with two phases
of attention, each a channel stage followed by a spatial stage:

* phase one: self-attention across channels (C x C affinity) and across
  positions (X x X affinity, X = H * W) with residual connections;
* phase two: sigmoid gates from global max pooling, one per channel and
  one per position, multiplied into the features.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import DimensionError
from .nn import Conv2d, Linear, Module
from .tensor import Tensor, as_tensor


def fuse_modalities(f_rgb, f_d) -> Tensor:
    f_rgb, f_d = as_tensor(f_rgb), as_tensor(f_d)
    if f_rgb.shape != f_d.shape:
        raise DimensionError(f"RGB features {f_rgb.shape} and depth features {f_d.shape} differ")
    return f_rgb + f_d


def reduced_channels(c: int) -> int:
    return max(1, c // 8)


def _flatten(x: Tensor) -> Tensor:
    return x.reshape(*x.shape[:-2], x.shape[-2] * x.shape[-1])


def _swap(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return x.transpose(axes)


class ChannelSelfAttention(Module):
    """Residual attention where each channel attends over all channels."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.query = Conv2d(channels, channels, 1, rng)
        self.key = Conv2d(channels, channels, 1, rng)
        self.value = Conv2d(channels, channels, 1, rng)

    def attention(self, x) -> Tensor:
        """Row-stochastic [.., C, C] matrix applied to the value projection."""
        q, k = _flatten(self.query(x)), _flatten(self.key(x))
        affinity = ops.matmul(q, _swap(k))
        return _swap(ops.softmax(affinity, axis=-2))

    def forward(self, x):
        v = _flatten(self.value(x))
        out = ops.matmul(self.attention(x), v)
        return out.reshape(x.shape) + x


class PositionSelfAttention(Module):
    """Residual attention where each position attends over all positions.

    Query, key and value use C/8 channels; a trailing 1x1 conv maps the
    attended values back to C channels.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        r = reduced_channels(channels)
        self.query = Conv2d(channels, r, 1, rng)
        self.key = Conv2d(channels, r, 1, rng)
        self.value = Conv2d(channels, r, 1, rng)
        self.project = Conv2d(r, channels, 1, rng)

    def attention(self, x) -> Tensor:
        """Row-stochastic [.., X, X] matrix; row i weights the positions seen by i."""
        q, k = _flatten(self.query(x)), _flatten(self.key(x))
        return ops.softmax(ops.matmul(_swap(q), k), axis=-1)

    def forward(self, x):
        v = _flatten(self.value(x))
        out = ops.matmul(v, _swap(self.attention(x)))
        out = out.reshape(*x.shape[:-3], v.shape[-2], *x.shape[-2:])
        return self.project(out) + x


class ChannelGate(Module):
    """Channel gate from global max pooling through a C -> C/r -> C MLP."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 8):
        hidden = max(1, channels // reduction)
        self.fc1 = Linear(channels, hidden, rng)
        self.fc2 = Linear(hidden, channels, rng)

    def gate(self, x) -> Tensor:
        pooled = ops.global_max_pool(x)
        flat = pooled.reshape(-1, pooled.shape[-3])
        logits = self.fc2(ops.relu(self.fc1(flat)))
        return ops.sigmoid(logits).reshape(pooled.shape)

    def forward(self, x):
        return x * self.gate(x)


class SpatialGate(Module):
    """Spatial gate from channel-wise max pooling through a 7x7 conv."""

    def __init__(self, rng: np.random.Generator, kernel: int = 7):
        self.conv = Conv2d(1, 1, kernel, rng)

    def gate(self, x) -> Tensor:
        return ops.sigmoid(self.conv(ops.channel_max_pool(x)))

    def forward(self, x):
        return x * self.gate(x)


class NDAM(Module):
    """Fusion plus nested attention at one encoder level.

    ``phase1``/``phase2`` switch the two attention phases on or off; with
    both off the block reduces to the plain modality sum.
    """

    def __init__(self, level: int, channels: int, rng: np.random.Generator,
                 phase1: bool = True, phase2: bool = True):
        self.level = level
        self.channels = channels
        self.phase1 = phase1
        self.phase2 = phase2
        if phase1:
            self.c1 = ChannelSelfAttention(channels, rng)
            self.s1 = PositionSelfAttention(channels, rng)
        if phase2:
            self.c2 = ChannelGate(channels, rng)
            self.s2 = SpatialGate(rng)

    def refine(self, f_cm) -> Tensor:
        x = as_tensor(f_cm)
        if x.shape[-3] != self.channels:
            raise DimensionError(f"NDAM level {self.level}: expected {self.channels} channels, got {x.shape}")
        if self.phase1:
            x = self.s1(self.c1(x))
        if self.phase2:
            x = self.s2(self.c2(x))
        return x

    def forward(self, f_rgb, f_d):
        return self.refine(fuse_modalities(f_rgb, f_d))
