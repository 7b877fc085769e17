"""
Scoring saliency maps
=====================

Builds a few predictions of one synthetic ground truth, from perfect to
inverted, and scores them with the six saliency metrics.  The last section
writes the CSV files that ``m2rnet eval`` produces.
"""

import tempfile

import numpy as np
from scipy import ndimage

from m2rnet.dataset import synth_dataset
from m2rnet.metrics import evaluate_dataset, evaluate_image, write_report

gt = synth_dataset(1, resolution=64, seed=7)[0].gt[0]
rng = np.random.default_rng(0)

candidates = {
    "perfect": gt,
    "blurred": ndimage.gaussian_filter(gt, 2.0),
    "noisy": np.clip(0.7 * gt + 0.3 * rng.random(gt.shape), 0, 1),
    "shifted": np.roll(gt, 6, axis=1),
    "constant 0.5": np.full_like(gt, 0.5),
    "inverted": 1 - gt,
}

print(f"{'prediction':14s}" + "".join(f"{k:>11s}" for k in ("S", "F_max", "F_avg", "F_w", "E", "MAE")))
for name, pred in candidates.items():
    r = evaluate_image(pred, gt)
    print(f"{name:14s}" + "".join(f"{v:11.4f}" for v in r.scores().values()))

# Dataset-level scores average the per-image values; curves are averaged
# pointwise over the 255 thresholds.
report = evaluate_dataset([(candidates["blurred"], gt), (candidates["noisy"], gt)])
best = int(np.argmax(report.f_curve))
print(f"\nmean of two: F_max {report.f_max:.4f}, curve peak at threshold {best + 1}/255")

with tempfile.TemporaryDirectory() as out:
    paths = write_report(report, out)
    with open(paths["metrics"]) as fh:
        print("\n" + fh.read())
