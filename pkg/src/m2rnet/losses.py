"""Binary cross entropy and the four ratio losses added to it.

Maps are either a single ``[H, W]`` map or a batch whose first axis indexes
samples (``[N, H, W]`` / ``[N, 1, H, W]``).  Sums run over each sample's
pixels; batch results are averaged over samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor, clip, log

DEFAULT_EPS = 1e-8


@dataclass(frozen=True)
class LossConfig:
    """Weights of the four ratio terms (``lambdas``) and of their sum (``mu``)."""

    lambdas: tuple = (1.0, 1.0, 1.0, 1.0)
    mu: float = 1.0
    eps: float = DEFAULT_EPS
    bce_reduction: str = "mean"
    l4_complement: bool = False

    def __post_init__(self):
        if len(self.lambdas) != 4 or any(lam < 0 for lam in self.lambdas):
            raise ConfigError(f"lambdas must be four nonnegative weights, got {self.lambdas}")
        if self.mu < 0:
            raise ConfigError(f"mu must be nonnegative, got {self.mu}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.bce_reduction not in ("mean", "sum"):
            raise ConfigError(f"bce_reduction must be 'mean' or 'sum', got {self.bce_reduction!r}")

    def masked(self, active) -> "LossConfig":
        """Zero the weights of inactive terms (``active`` = four booleans)."""
        lambdas = tuple(lam if on else 0.0 for lam, on in zip(self.lambdas, active))
        return LossConfig(lambdas, self.mu, self.eps, self.bce_reduction, self.l4_complement)


class JholTerms(NamedTuple):
    l1: Tensor
    l2: Tensor
    l3: Tensor
    l4: Tensor
    degenerate: bool  # some ground truth had no foreground


def _pair(pred, gt):
    pred, gt = as_tensor(pred), as_tensor(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    axes = tuple(range(pred.ndim)) if pred.ndim <= 2 else tuple(range(1, pred.ndim))
    return pred, gt, axes


def bce_loss(pred, gt, reduction: str = "mean", eps: float = DEFAULT_EPS) -> Tensor:
    """Pixelwise binary cross entropy; ``reduction='sum'`` sums each map."""
    pred, gt, axes = _pair(pred, gt)
    p = clip(pred, eps, 1.0 - eps)
    per_pixel = -(gt * log(p) + (1.0 - gt) * log(1.0 - p))
    if reduction == "mean":
        return per_pixel.mean()
    if reduction == "sum":
        return per_pixel.sum(axis=axes).mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def _ratio(num: Tensor, den: Tensor, eps: float, per_sample: bool = False) -> Tensor:
    # only exactly-empty denominators are guarded; their numerators are 0 too
    guard = np.where(den.data == 0.0, eps, 0.0)
    ratio = num / (den + guard)
    return ratio if per_sample else ratio.mean()


def jhol_terms(pred, gt, eps: float = DEFAULT_EPS, l4_complement: bool = False,
               per_sample: bool = False) -> JholTerms:
    """False-positive, false-negative, error-over-union and negative-agreement ratios.

    With ``per_sample`` each term is a vector over the batch instead of its mean.
    """
    pred, gt, axes = _pair(pred, gt)
    fp = pred * (1.0 - gt)
    fn = gt * (1.0 - pred)
    tn = (1.0 - pred) * (1.0 - gt)

    def ratio(num, den):
        return _ratio(num.sum(axis=axes), den.sum(axis=axes), eps, per_sample)

    l1 = ratio(fp, pred)
    l2 = ratio(fn, gt)
    l3 = ratio(fp + fn, pred + gt - pred * gt)
    l4 = ratio(pred * gt if l4_complement else tn, 1.0 - fp - fn)
    degenerate = bool(np.any(gt.data.sum(axis=axes) == 0))
    return JholTerms(l1, l2, l3, l4, degenerate)


def jhol_loss(pred, gt, cfg: LossConfig) -> Tensor:
    terms = jhol_terms(pred, gt, cfg.eps, cfg.l4_complement)
    total = None
    for lam, term in zip(cfg.lambdas, terms[:4]):
        if lam == 0:
            continue
        piece = term * lam
        total = piece if total is None else total + piece
    return total if total is not None else Tensor(0.0)


def single_output_loss(pred, gt, cfg: LossConfig) -> Tensor:
    loss = bce_loss(pred, gt, cfg.bce_reduction, cfg.eps)
    if cfg.mu == 0 or not any(cfg.lambdas):
        return loss
    return loss + jhol_loss(pred, gt, cfg) * cfg.mu


def total_loss(pred, gt, cfg: LossConfig = LossConfig(), side_preds=()) -> Tensor:
    """BCE plus ``mu`` times the weighted ratio terms, summed over outputs.

    Side predictions at lower resolution are scored against a
    nearest-resampled ground truth.
    """
    from .ops import resample

    gt = as_tensor(gt)
    loss = single_output_loss(pred, gt, cfg)
    for side in side_preds:
        side_gt = gt if side.shape == gt.shape else Tensor(resample(gt, side.shape[-2:], "nearest").data)
        loss = loss + single_output_loss(side, side_gt, cfg)
    return loss
