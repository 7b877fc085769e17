"""Two-stream RGB-D encoder-decoder with nested attention and adjacent
aggregation.

Wiring (levels 1..5, level i at ``resolution / 2**(i-1)``):

* RGB and depth encoders, 5 conv-BN-ReLU stages each, 2x2 max pooling
  between stages, no weight sharing;
* NDAM at levels 3, 4, 5 on the modality sum ``f_rgb + f_d``;
* AIAM at levels 2, 3, 4 on RGB triples ``(f_rgb[i-1], f_rgb[i], f_rgb[i+1])``;
* decoder seeded by the level-5 NDAM output; at levels 4 and 3 the NDAM
  output is added to the upsampled decoder feature, then every level 4..2
  fuses with its AIAM output by concat + 3x3 conv; level-1 RGB features
  join the last fusion; a 1x1 head and sigmoid give the saliency map.

With all attention/aggregation flags off this is a plain FPN-style
encoder-decoder (NDAM becomes the sum, AIAM the identity).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .aiam import AIAM, DecoderFuse
from .config import AblationScheme, EncoderConfig
from .errors import CodecError, DimensionError
from .nn import BatchNorm2d, Conv2d, ConvBNReLU, Module
from .ndam import NDAM
from .tensor import Tensor, as_tensor, no_grad

NDAM_LEVELS = (3, 4, 5)
AIAM_LEVELS = (2, 3, 4)
OUTPUT_EPS = 1e-8


def component_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per named component, so ablations share inits."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


class Encoder(Module):
    def __init__(self, c_in: int, channels, rng: np.random.Generator):
        widths = (c_in, *channels)
        self.stages = [ConvBNReLU(widths[i], widths[i + 1], rng) for i in range(5)]

    def forward(self, x) -> list:
        feats = []
        for i, stage in enumerate(self.stages):
            if i:
                x = ops.max_pool2d(x, 2)
            x = stage(x)
            feats.append(x)
        return feats


@dataclass
class ModelOutput:
    saliency: Tensor
    logits: Tensor
    sides: list = field(default_factory=list)


class DecoderStage(Module):
    """Upsample, optionally add an NDAM lateral, then fuse with encoder features."""

    def __init__(self, level: int, c_enc: int, width: int, rng, c_lateral=None):
        self.level = level
        self.lateral = ConvBNReLU(c_lateral, width, rng, k=1) if c_lateral else None
        self.align = Conv2d(c_enc, width, 1, rng)
        self.fuse = DecoderFuse(width, rng)
        self.bn = BatchNorm2d(width)

    def forward(self, x, f_enc, f_lateral=None):
        x = ops.resample(x, f_enc.shape[-2:], "bilinear")
        if self.lateral is not None:
            x = x + self.lateral(f_lateral)
        return ops.relu(self.bn(self.fuse(x, self.align(f_enc))))


class M2RNet(Module):
    def __init__(self, config: EncoderConfig = EncoderConfig(), seed: int = 0,
                 scheme: AblationScheme = AblationScheme()):
        self.config = config
        self.scheme = scheme
        self.seed = seed
        ch = dict(enumerate(config.channels, 1))
        width = config.decoder_channels

        self.rgb_encoder = Encoder(3, config.channels, component_rng(seed, "rgb_encoder"))
        self.depth_encoder = Encoder(config.depth_channels, config.channels, component_rng(seed, "depth_encoder"))
        self.ndam = {}
        if scheme.ndam:
            self.ndam = {i: NDAM(i, ch[i], component_rng(seed, f"ndam{i}"), scheme.p1, scheme.p2)
                         for i in NDAM_LEVELS}
        self.aiam = {}
        if scheme.aiam:
            self.aiam = {i: AIAM(i, ch[i - 1], ch[i], ch[i + 1], component_rng(seed, f"aiam{i}"),
                                 scheme.i1, scheme.i2) for i in AIAM_LEVELS}
        rng = component_rng(seed, "decoder")
        self.top = ConvBNReLU(ch[5], width, rng, k=1)
        self.decoder = {i: DecoderStage(i, ch[i], width, rng, ch[i] if i in (3, 4) else None)
                        for i in (4, 3, 2, 1)}
        self.head = Conv2d(width, 1, 1, rng)
        self.side_heads = {}
        if config.deep_supervision:
            self.side_heads = {i: Conv2d(width, 1, 1, rng) for i in (5, 4, 3, 2)}
        self.trace = {}

    def forward(self, rgb, depth) -> ModelOutput:
        rgb, depth = as_tensor(rgb), as_tensor(depth)
        unbatched = rgb.ndim == 3
        if unbatched:
            rgb, depth = rgb.reshape(1, *rgb.shape), depth.reshape(1, *depth.shape)
        size = self.config.resolution
        if rgb.shape[1:] != (3, size, size):
            raise DimensionError(f"RGB input must be [N,3,{size},{size}], got {rgb.shape}")
        if depth.shape[1:] != (self.config.depth_channels, size, size) or depth.shape[0] != rgb.shape[0]:
            raise DimensionError(f"depth input must be [N,{self.config.depth_channels},{size},{size}], "
                                 f"got {depth.shape}")

        f_rgb = dict(enumerate(self.rgb_encoder(rgb), 1))
        f_d = dict(enumerate(self.depth_encoder(depth), 1))
        trace = {"ndam": {}, "aiam": {}}

        f_cm = {}
        for i in NDAM_LEVELS:
            if self.ndam:
                f_cm[i] = self.ndam[i](f_rgb[i], f_d[i])
                trace["ndam"][self.ndam[i].level] = (i, i)
            else:
                f_cm[i] = f_rgb[i] + f_d[i]
        f_agg = {}
        for i in AIAM_LEVELS:
            if self.aiam:
                f_agg[i] = self.aiam[i](f_rgb[i - 1], f_rgb[i], f_rgb[i + 1])
                trace["aiam"][self.aiam[i].level] = (i - 1, i, i + 1)
            else:
                f_agg[i] = f_rgb[i]
        f_agg[1] = f_rgb[1]
        self.trace = trace

        x = self.top(f_cm[5])
        sides = []
        if 5 in self.side_heads:
            sides.append(self.side_heads[5](x))
        for i in (4, 3, 2, 1):
            x = self.decoder[i](x, f_agg[i], f_cm.get(i) if i in (3, 4) else None)
            if i in self.side_heads:
                sides.append(self.side_heads[i](x))

        logits = ops.resample(self.head(x), rgb.shape[-2:], "bilinear")
        saliency = ops.clip(ops.sigmoid(logits), OUTPUT_EPS, 1.0 - OUTPUT_EPS)
        side_maps = [ops.clip(ops.sigmoid(s), OUTPUT_EPS, 1.0 - OUTPUT_EPS) for s in sides]
        if unbatched:
            saliency, logits = saliency.reshape(saliency.shape[1:]), logits.reshape(logits.shape[1:])
            side_maps = [s.reshape(s.shape[1:]) for s in side_maps]
        return ModelOutput(saliency, logits, side_maps)

    def audit(self, loss_terms=None) -> dict:
        """Static description of enabled components plus the last forward's wiring."""
        report = {
            "ndam": {i: {"p1": m.phase1, "p2": m.phase2} for i, m in self.ndam.items()},
            "aiam": {i: {"i1": m.progressive, "i2": m.jumping} for i, m in self.aiam.items()},
            "wiring": self.trace,
            "parameters": self.num_parameters(),
        }
        if loss_terms is not None:
            report["loss_terms"] = {f"l{k + 1}": bool(on) for k, on in enumerate(loss_terms)}
        return report

    def verify_wiring(self):
        """Raise unless the last forward fed NDAM levels 3-5 and AIAM triples around 2-4."""
        want_ndam = {i: (i, i) for i in NDAM_LEVELS} if self.ndam else {}
        want_aiam = {i: (i - 1, i, i + 1) for i in AIAM_LEVELS} if self.aiam else {}
        got = self.trace
        if got.get("ndam") != want_ndam or got.get("aiam") != want_aiam:
            raise AssertionError(f"unexpected wiring {got}, want ndam={want_ndam} aiam={want_aiam}")
        return True


def build(config: EncoderConfig = EncoderConfig(), seed: int = 0,
          scheme: AblationScheme = AblationScheme()) -> M2RNet:
    return M2RNet(config, seed, scheme)


def forward(model: M2RNet, rgb, depth) -> ModelOutput:
    return model(rgb, depth)


def predict(model: M2RNet, rgb, depth) -> np.ndarray:
    """8-bit saliency map at the input's resolution.

    ``rgb`` is [3, H, W] (or [H, W, 3]) and ``depth`` [H, W] or [1, H, W],
    values in [0, 1]; inputs are resized to the model resolution.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if rgb.ndim == 3 and rgb.shape[-1] == 3 and rgb.shape[0] != 3:
        rgb = rgb.transpose(2, 0, 1)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise CodecError(f"expected a 3-channel RGB image, got shape {rgb.shape}")
    if depth.ndim == 2:
        depth = depth[None]
    h, w = rgb.shape[1:]
    if depth.shape[1:] != (h, w):
        raise DimensionError(f"depth {depth.shape} does not match RGB {rgb.shape}")
    size = (model.config.resolution,) * 2
    x_rgb = ops.resample(Tensor(rgb), size, "bilinear")
    x_d = ops.resample(Tensor(depth), size, "bilinear")
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            sal = model(x_rgb, x_d).saliency
            sal = ops.resample(sal, (h, w), "bilinear").data[0]
    finally:
        model.train(was_training)
    return np.rint(np.clip(sal, 0.0, 1.0) * 255.0).astype(np.uint8)
