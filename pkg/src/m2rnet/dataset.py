"""Synthetic RGB-D saliency samples, augmentation, and the on-disk layout.

Each synthetic sample places one to three random shapes as the salient
foreground.  The foreground sits at a distinct depth on top of a smooth
background depth ramp, and is drawn in a colour that differs from the
textured background by an amount set by ``contrast``.

Disk layout::

    root/rgb/0000.ppm   root/depth/0000.pgm   root/gt/0000.pgm   ...
    root/manifest.txt   one "<index> <split>" line per sample
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import netpbm
from .errors import ContractError

FG_FRACTION = (0.05, 0.6)


@dataclass(frozen=True)
class Sample:
    rgb: np.ndarray    # [3, H, W] in [0, 1]
    depth: np.ndarray  # [1, H, W] in [0, 1]
    gt: np.ndarray     # [1, H, W] in {0, 1}

    def __post_init__(self):
        hw = self.rgb.shape[1:]
        if self.rgb.shape[0] != 3 or self.depth.shape != (1, *hw) or self.gt.shape != (1, *hw):
            raise ContractError(f"misaligned sample: rgb {self.rgb.shape}, depth {self.depth.shape}, "
                                f"gt {self.gt.shape}")


# -- generation ---------------------------------------------------------------

def _shape_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    kind = rng.integers(3)
    cx, cy = rng.uniform(0.2, 0.8, 2) * size
    rx, ry = rng.uniform(0.08, 0.25, 2) * size
    if kind == 0:
        return (np.abs(xx - cx) <= rx) & (np.abs(yy - cy) <= ry)
    if kind == 1:
        return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    angles = rng.uniform(0, 2 * np.pi) + np.array([0.0, 2.1, 4.2]) + rng.uniform(-0.3, 0.3, 3)
    r = max(rx, ry) * 1.3
    px, py = cx + r * np.cos(angles), cy + r * np.sin(angles)
    inside = np.ones((size, size), bool)
    sign = None
    for k in range(3):
        x0, y0, x1, y1 = px[k], py[k], px[(k + 1) % 3], py[(k + 1) % 3]
        cross = (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0)
        sign = np.sign((x1 - x0) * (py[(k + 2) % 3] - y0) - (y1 - y0) * (px[(k + 2) % 3] - x0))
        inside &= cross * sign >= 0
    return inside


def _foreground(rng: np.random.Generator, size: int) -> np.ndarray:
    while True:
        mask = np.zeros((size, size), bool)
        for _ in range(rng.integers(1, 4)):
            mask |= _shape_mask(rng, size)
        if FG_FRACTION[0] <= mask.mean() <= FG_FRACTION[1]:
            return mask


def _smooth_noise(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    return field / (field.std() + 1e-12)


def make_sample(rng: np.random.Generator, size: int, contrast: float = 0.8) -> Sample:
    mask = _foreground(rng, size)
    fg = mask.astype(np.float64)

    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = 0.5 + 0.5 * (np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5))
    bg_depth = 0.05 + 0.35 * ramp
    fg_depth = 0.45 + 0.5 * contrast
    depth = np.where(mask, fg_depth, bg_depth) + 0.03 * rng.standard_normal((size, size))

    bg_color = rng.uniform(0.2, 0.8, 3)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    fg_color = np.clip(bg_color + 0.6 * contrast * direction, 0.0, 1.0)
    texture = 0.08 * _smooth_noise(rng, size, 2.0) + 0.04 * rng.standard_normal((size, size))
    rgb = (bg_color[:, None, None] * (1 - fg) + fg_color[:, None, None] * fg) + texture[None]

    return Sample(np.clip(rgb, 0.0, 1.0), np.clip(depth, 0.0, 1.0)[None], fg[None])


def synth_dataset(n: int, resolution: int = 64, seed: int = 0, contrast: float = 0.8) -> list:
    """``n`` samples; sample ``i`` depends only on ``(seed, i)``."""
    if n < 1:
        raise ContractError(f"need n >= 1 samples, got {n}")
    streams = np.random.SeedSequence(seed).spawn(n)
    return [make_sample(np.random.default_rng(s), resolution, contrast) for s in streams]


def split_dataset(n_train: int, n_test: int, resolution: int = 64, seed: int = 0, contrast: float = 0.8):
    samples = synth_dataset(n_train + n_test, resolution, seed, contrast)
    return samples[:n_train], samples[n_train:]


# -- augmentation -------------------------------------------------------------

def hflip(sample: Sample) -> Sample:
    return Sample(sample.rgb[..., ::-1].copy(), sample.depth[..., ::-1].copy(), sample.gt[..., ::-1].copy())


def _warp(sample: Sample, matrix: np.ndarray, offset: np.ndarray) -> Sample:
    """Resample every field through output->input coordinate map ``matrix @ o + offset``."""
    def smooth(img):
        return np.stack([ndimage.affine_transform(ch, matrix, offset, order=1, mode="nearest")
                         for ch in img])

    gt = np.stack([ndimage.affine_transform(ch, matrix, offset, order=0, mode="constant", cval=0.0)
                   for ch in sample.gt])
    return Sample(np.clip(smooth(sample.rgb), 0, 1), np.clip(smooth(sample.depth), 0, 1), gt)


def crop_resize(sample: Sample, top: float, left: float, scale: float) -> Sample:
    """Crop a ``scale``-sized window at (top, left) and stretch it back to full size."""
    return _warp(sample, np.diag([scale, scale]), np.array([top, left]))


def rotate(sample: Sample, degrees: float) -> Sample:
    h, w = sample.gt.shape[1:]
    t = np.deg2rad(degrees)
    rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    centre = np.array([(h - 1) / 2, (w - 1) / 2])
    return _warp(sample, rot, centre - rot @ centre)


def augment(sample: Sample, rng: np.random.Generator, crop: float = 0.9, max_angle: float = 10.0) -> Sample:
    """Random flip (p=0.5), crop to ``crop`` of the side and resize back, small rotation."""
    if rng.random() < 0.5:
        sample = hflip(sample)
    h, w = sample.gt.shape[1:]
    top = rng.uniform(0, (1 - crop) * (h - 1))
    left = rng.uniform(0, (1 - crop) * (w - 1))
    sample = crop_resize(sample, top, left, crop)
    return rotate(sample, rng.uniform(-max_angle, max_angle))


def with_field(sample: Sample, **fields) -> Sample:
    return dataclasses.replace(sample, **fields)


# -- disk layout --------------------------------------------------------------

def save_dataset(root, samples, splits=None):
    """Write samples under ``root``; ``splits`` gives one split name per sample."""
    splits = splits or ["train"] * len(samples)
    for sub in ("rgb", "depth", "gt"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    lines = []
    for i, (sample, split) in enumerate(zip(samples, splits)):
        name = f"{i:04d}"
        netpbm.save(os.path.join(root, "rgb", name + ".ppm"), sample.rgb)
        netpbm.save(os.path.join(root, "depth", name + ".pgm"), sample.depth)
        netpbm.save(os.path.join(root, "gt", name + ".pgm"), sample.gt)
        lines.append(f"{name} {split}")
    with open(os.path.join(root, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(root) -> list:
    entries = []
    with open(os.path.join(root, "manifest.txt")) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                entries.append((parts[0], parts[1] if len(parts) > 1 else "train"))
    return entries


def load_dataset(root, split=None) -> list:
    """Samples listed in the manifest, optionally only one split."""
    out = []
    for name, sp in read_manifest(root):
        if split is not None and sp != split:
            continue
        rgb = netpbm.load(os.path.join(root, "rgb", name + ".ppm"))
        depth = netpbm.load(os.path.join(root, "depth", name + ".pgm"))[None]
        gt = (netpbm.load(os.path.join(root, "gt", name + ".pgm")) > 0.5).astype(np.float64)[None]
        out.append(Sample(rgb, depth, gt))
    return out
