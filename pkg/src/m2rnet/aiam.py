"""Adjacent interactive aggregation of three neighbouring encoder levels.

Given features at levels i-1 (finer), i and i+1 (coarser), two interaction
paths produce level-i features:

* progressive: fine+mid are fused first, the coarse level joins after;
* jumping: fine+coarse are fused first (skipping mid), mid joins after.

Each fusion step is channel concat followed by 3x3 conv-BN-ReLU.  The path
outputs are summed and passed through a residual block.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .nn import Conv2d, ConvBNReLU, Module
from .tensor import Tensor, as_tensor


def downsample(x) -> Tensor:
    return ops.max_pool2d(x, 2)


def upsample(x) -> Tensor:
    h, w = x.shape[-2:]
    return ops.resample(x, (2 * h, 2 * w), "bilinear")


def check_adjacent(f_low, f_mid, f_high):
    lo, mid, hi = f_low.shape[-2:], f_mid.shape[-2:], f_high.shape[-2:]
    if lo != (2 * mid[0], 2 * mid[1]) or mid != (2 * hi[0], 2 * hi[1]):
        raise DimensionError(f"AIAM needs 2x resolution steps, got {lo}, {mid}, {hi}")


class ProgressiveInteraction(Module):
    def __init__(self, c_low: int, c_mid: int, c_high: int, rng: np.random.Generator):
        self.fuse_low = ConvBNReLU(c_low + c_mid, c_mid, rng)
        self.fuse_high = ConvBNReLU(c_mid + c_high, c_mid, rng)

    def forward(self, f_low, f_mid, f_high):
        check_adjacent(f_low, f_mid, f_high)
        x = self.fuse_low(ops.concat([downsample(f_low), f_mid]))
        return self.fuse_high(ops.concat([x, upsample(f_high)]))


class JumpingInteraction(Module):
    def __init__(self, c_low: int, c_mid: int, c_high: int, rng: np.random.Generator):
        self.fuse_outer = ConvBNReLU(c_low + c_high, c_mid, rng)
        self.fuse_mid = ConvBNReLU(c_mid + c_mid, c_mid, rng)

    def forward(self, f_low, f_mid, f_high):
        check_adjacent(f_low, f_mid, f_high)
        x = self.fuse_outer(ops.concat([downsample(f_low), upsample(f_high)]))
        return self.fuse_mid(ops.concat([x, f_mid]))


class ResidualBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator):
        self.body = [ConvBNReLU(channels, channels, rng), ConvBNReLU(channels, channels, rng)]

    def forward(self, x):
        y = x
        for layer in self.body:
            y = layer(y)
        return x + y


class AIAM(Module):
    """Aggregates levels (i-1, i, i+1) into refined level-i features."""

    def __init__(self, level: int, c_low: int, c_mid: int, c_high: int, rng: np.random.Generator,
                 progressive: bool = True, jumping: bool = True):
        if not (progressive or jumping):
            raise ConfigError("AIAM needs at least one interaction path")
        self.level = level
        self.progressive = progressive
        self.jumping = jumping
        if progressive:
            self.i1 = ProgressiveInteraction(c_low, c_mid, c_high, rng)
        if jumping:
            self.i2 = JumpingInteraction(c_low, c_mid, c_high, rng)
        self.residual = ResidualBlock(c_mid, rng)

    def interactions(self, f_low, f_mid, f_high) -> Tensor:
        paths = []
        if self.progressive:
            paths.append(self.i1(f_low, f_mid, f_high))
        if self.jumping:
            paths.append(self.i2(f_low, f_mid, f_high))
        return paths[0] if len(paths) == 1 else paths[0] + paths[1]

    def forward(self, f_low, f_mid, f_high):
        return self.residual(self.interactions(f_low, f_mid, f_high))


class DecoderFuse(Module):
    """3x3 conv over the concat of decoder and aggregated encoder features."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.channels = channels
        self.conv = Conv2d(2 * channels, channels, 3, rng)

    def forward(self, f_rgbd, f_agg):
        f_rgbd, f_agg = as_tensor(f_rgbd), as_tensor(f_agg)
        if f_rgbd.shape[-2:] != f_agg.shape[-2:]:
            f_rgbd = ops.resample(f_rgbd, f_agg.shape[-2:], "bilinear")
        return self.conv(ops.concat([f_rgbd, f_agg]))
