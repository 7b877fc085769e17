"""Saliency evaluation: S-measure, max/adaptive F-measure, weighted F-measure,
E-measure, MAE, and the PR / F-measure curves over 255 thresholds.

All per-image functions take a float prediction in [0, 1] and a ground truth
map of the same shape; the ground truth is binarized at 0.5 wherever a
binary mask is needed.  Threshold-based measures compare the 8-bit
quantized prediction against ``t / 255`` for ``t = 1..255``.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ContractError, DimensionError

EPS = np.finfo(np.float64).eps
THRESHOLDS = np.arange(1, 256) / 255.0
BETA2_F = 0.3
BETA2_WEIGHTED = 1.0
METRIC_NAMES = ("s_alpha", "f_max", "f_avg", "f_weighted", "e_xi", "mae")
CSV_SCHEMA = "m2rnet-metrics/1"


def _check(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    return pred, gt


def binarize_gt(gt) -> np.ndarray:
    return np.asarray(gt) > 0.5


def quantize(pred) -> np.ndarray:
    """Map [0, 1] floats to integer levels 0..255."""
    return np.rint(np.clip(pred, 0.0, 1.0) * 255.0).astype(np.int64)


def adaptive_threshold(pred) -> float:
    """``min(2 * mean(pred), 1)``, floored at the first nonzero level 1/255."""
    return float(max(min(2.0 * np.mean(pred), 1.0), THRESHOLDS[0]))


def adaptive_binarize(pred) -> np.ndarray:
    return quantize(pred) / 255.0 >= adaptive_threshold(pred)


def mae(pred, gt) -> float:
    pred, gt = _check(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


def f_beta(precision, recall, beta2: float = BETA2_F):
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    num = (1.0 + beta2) * precision * recall
    den = beta2 * precision + recall
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def pr_curve(pred, gt):
    """Precision and recall at thresholds 1/255 .. 255/255 (arrays of 255).

    A threshold with no predicted positives has precision 0; an empty ground
    truth gives recall 0 everywhere.
    """
    pred, gt = _check(pred, gt)
    q = quantize(pred)
    fg = binarize_gt(gt)
    fg_hist = np.bincount(q[fg], minlength=256)
    bg_hist = np.bincount(q[~fg], minlength=256)
    # positives at threshold t are pixels with level >= t
    tp = np.cumsum(fg_hist[::-1])[::-1][1:]
    fp = np.cumsum(bg_hist[::-1])[::-1][1:]
    predicted = tp + fp
    precision = np.divide(tp, predicted, out=np.zeros(255), where=predicted > 0)
    n_fg = fg.sum()
    recall = tp / n_fg if n_fg else np.zeros(255)
    return precision, recall


def _binary_f(binary, fg, beta2=BETA2_F) -> float:
    tp = np.count_nonzero(binary & fg)
    predicted = np.count_nonzero(binary)
    n_fg = np.count_nonzero(fg)
    precision = tp / predicted if predicted else 0.0
    recall = tp / n_fg if n_fg else 0.0
    return float(f_beta(precision, recall, beta2))


def f_measures(pred, gt):
    """Returns ``(f_max, f_avg, f_curve)`` with beta^2 = 0.3.

    ``f_avg`` is the F-measure at the adaptive threshold; since that
    threshold lands on one of the 255 quantized levels, ``f_max >= f_avg``.
    """
    pred, gt = _check(pred, gt)
    precision, recall = pr_curve(pred, gt)
    curve = f_beta(precision, recall)
    f_avg = _binary_f(adaptive_binarize(pred), binarize_gt(gt))
    return float(curve.max()), f_avg, curve


def _gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    k = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def nearest_foreground(fg):
    """Distance to and index of the nearest foreground pixel for every pixel.

    Ties go to the first candidate in raster order, so the result does not
    depend on the distance-transform implementation.
    """
    fg = np.asarray(fg, dtype=bool)
    h, w = fg.shape
    dist = ndimage.distance_transform_edt(~fg)
    iy, ix = np.indices((h, w))
    ys, xs = np.nonzero(~fg)
    if ys.size == 0:
        return dist, iy, ix
    d2 = np.rint(dist[ys, xs] ** 2).astype(np.int64)

    # every offset within the largest distance, sorted by (d2, dy, dx)
    r = math.isqrt(int(d2.max())) + 1
    dy, dx = (a.ravel() for a in np.mgrid[-r:r + 1, -r:r + 1])
    od2 = dy * dy + dx * dx
    order = np.lexsort((dx, dy, od2))
    dy, dx, od2 = dy[order], dx[order], od2[order]
    first = np.searchsorted(od2, d2, "left")
    count = np.searchsorted(od2, d2, "right") - first

    todo = np.ones(ys.size, bool)
    for k in range(int(count.max())):
        cand = np.nonzero(todo & (k < count))[0]
        ty, tx = ys[cand] + dy[first[cand] + k], xs[cand] + dx[first[cand] + k]
        inside = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
        cand, ty, tx = cand[inside], ty[inside], tx[inside]
        hit = fg[ty, tx]
        cand, ty, tx = cand[hit], ty[hit], tx[hit]
        iy[ys[cand], xs[cand]], ix[ys[cand], xs[cand]] = ty, tx
        todo[cand] = False
    if todo.any():
        raise AssertionError("distance transform and offset enumeration disagree")
    return dist, iy, ix


def weighted_f(pred, gt) -> float:
    """Weighted F-measure (beta^2 = 1); 0 for a ground truth with no foreground.

    Errors on the foreground are smoothed by a 7x7 Gaussian (sigma 5) after
    filling background pixels with the error of their nearest foreground
    pixel; background errors grow with distance to the foreground.
    """
    pred, gt = _check(pred, gt)
    fg = binarize_gt(gt)
    if not fg.any():
        return 0.0
    err = np.abs(pred - fg)
    dist, iy, ix = nearest_foreground(fg)
    filled = err[iy, ix]
    smoothed = ndimage.correlate(filled, _gaussian_kernel(), mode="constant", cval=0.0)
    err_w = np.where(fg & (smoothed < err), smoothed, err)
    importance = np.where(fg, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    err_w = err_w * importance
    tp_w = np.sum(fg) - np.sum(err_w[fg])
    fp_w = np.sum(err_w[~fg])
    recall = 1.0 - np.mean(err_w[fg])
    precision = tp_w / (tp_w + fp_w + EPS)
    return float((1.0 + BETA2_WEIGHTED) * recall * precision / (recall + BETA2_WEIGHTED * precision + EPS))


# -- S-measure ----------------------------------------------------------------

def _object_score(values) -> float:
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def _centroid(fg):
    """1-based (x, y) foreground centroid, rounded half up."""
    ys, xs = np.nonzero(fg)
    return int(np.floor(xs.mean() + 1.5)), int(np.floor(ys.mean() + 1.5))


def _ssim(pred, gt) -> float:
    n = pred.size
    x, y = pred.mean(), gt.mean()
    denom = max(n - 1, 1)
    sx = np.sum((pred - x) ** 2) / denom
    sy = np.sum((gt - y) ** 2) / denom
    sxy = np.sum((pred - x) * (gt - y)) / denom
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return float(alpha / (beta + EPS))
    return 1.0 if beta == 0 else 0.0


def s_measure(pred, gt, alpha: float = 0.5) -> float:
    """Structure measure: object-aware plus region-aware similarity.

    All-background ground truth gives ``1 - mean(pred)``; all-foreground
    gives ``mean(pred)``.
    """
    pred, gt = _check(pred, gt)
    fg = binarize_gt(gt)
    y = fg.mean()
    if y == 0:
        return float(1.0 - pred.mean())
    if y == 1:
        return float(pred.mean())
    obj = y * _object_score(pred[fg]) + (1 - y) * _object_score(1.0 - pred[~fg])

    g = fg.astype(np.float64)
    h, w = g.shape
    cx, cy = _centroid(fg)
    region = 0.0
    for rows, cols in ((slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, w)),
                       (slice(cy, h), slice(0, cx)), (slice(cy, h), slice(cx, w))):
        block_p, block_g = pred[rows, cols], g[rows, cols]
        if block_p.size:
            region += block_p.size / (h * w) * _ssim(block_p, block_g)
    return float(max(alpha * obj + (1 - alpha) * region, 0.0))


def e_measure(pred, gt) -> float:
    """Enhanced alignment between the adaptively binarized prediction and gt."""
    pred, gt = _check(pred, gt)
    b = adaptive_binarize(pred).astype(np.float64)
    g = binarize_gt(gt).astype(np.float64)
    if g.sum() == 0:
        return float(np.mean(1.0 - b))
    if g.sum() == g.size:
        return float(np.mean(b))
    phi_b = b - b.mean()
    phi_g = g - g.mean()
    align = 2.0 * phi_b * phi_g / (phi_b ** 2 + phi_g ** 2 + EPS)
    return float(np.mean((align + 1.0) ** 2 / 4.0))


# -- aggregation --------------------------------------------------------------

@dataclass
class MetricsReport:
    s_alpha: float
    f_max: float
    f_avg: float
    f_weighted: float
    e_xi: float
    mae: float
    precision: np.ndarray = field(repr=False)
    recall: np.ndarray = field(repr=False)
    f_curve: np.ndarray = field(repr=False)
    n_images: int = 1
    n_degenerate: int = 0

    @property
    def pr_curve(self) -> np.ndarray:
        return np.stack([self.precision, self.recall], axis=1)

    def scores(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def evaluate_image(pred, gt) -> MetricsReport:
    """All metrics for one image; ``pred`` is resampled to gt size if needed."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    pred, gt = np.squeeze(pred), np.squeeze(gt)
    if pred.ndim != 2 or gt.ndim != 2:
        raise DimensionError(f"expected 2-d maps, got {pred.shape} and {gt.shape}")
    if pred.shape != gt.shape:
        from .ops import interpolation_matrix
        rh = interpolation_matrix(pred.shape[0], gt.shape[0])
        rw = interpolation_matrix(pred.shape[1], gt.shape[1])
        pred = rh @ pred @ rw.T
    precision, recall = pr_curve(pred, gt)
    f_max, f_avg, curve = f_measures(pred, gt)
    fg = binarize_gt(gt)
    return MetricsReport(
        s_alpha=s_measure(pred, gt), f_max=f_max, f_avg=f_avg, f_weighted=weighted_f(pred, gt),
        e_xi=e_measure(pred, gt), mae=mae(pred, gt), precision=precision, recall=recall,
        f_curve=curve, n_degenerate=int(not fg.any()))


def evaluate_dataset(pairs, workers: int | None = None) -> MetricsReport:
    """Average per-image metrics over ``(pred, gt)`` pairs; curves pointwise."""
    pairs = list(pairs)
    if not pairs:
        raise ContractError("evaluate_dataset needs at least one (pred, gt) pair")
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            reports = list(pool.map(lambda pg: evaluate_image(*pg), pairs))
    else:
        reports = [evaluate_image(p, g) for p, g in pairs]
    return mean_report(reports)


def mean_report(reports, weights=None) -> MetricsReport:
    weights = np.ones(len(reports)) if weights is None else np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()

    def avg(attr):
        return sum(w * np.asarray(getattr(r, attr)) for w, r in zip(weights, reports))

    return MetricsReport(
        **{name: float(avg(name)) for name in METRIC_NAMES},
        precision=avg("precision"), recall=avg("recall"), f_curve=avg("f_curve"),
        n_images=sum(r.n_images for r in reports), n_degenerate=sum(r.n_degenerate for r in reports))


def weighted_by_dataset_size(reports: dict, sizes: dict) -> MetricsReport:
    """Combine per-dataset reports weighted by each dataset's share of images."""
    names = list(reports)
    return mean_report([reports[n] for n in names], [sizes[n] for n in names])


# -- CSV ----------------------------------------------------------------------

def write_report(report: MetricsReport, out_dir) -> dict:
    """Write metrics.csv, pr_curve.csv and f_curve.csv; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.csv") for name in ("metrics", "pr_curve", "f_curve")}
    with open(paths["metrics"], "w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in report.scores().items():
            writer.writerow([name, repr(float(value))])
        writer.writerow(["n_images", report.n_images])
        writer.writerow(["n_degenerate", report.n_degenerate])
    for key in ("pr_curve", "f_curve"):
        with open(paths[key], "w", newline="") as fh:
            fh.write(f"# {CSV_SCHEMA}\n")
            writer = csv.writer(fh)
            writer.writerow(["threshold", "precision", "recall", "f"])
            for t, p, r, f in zip(THRESHOLDS, report.precision, report.recall, report.f_curve):
                writer.writerow([repr(float(t)), repr(float(p)), repr(float(r)), repr(float(f))])
    return paths


def read_csv(path) -> list:
    """Rows of a CSV written by this package, as dicts (comment lines skipped)."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))
