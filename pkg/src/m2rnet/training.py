"""Mini-batch SGD training and model evaluation on Sample lists."""

from __future__ import annotations

import csv
import math
import time

import numpy as np

from .config import TrainConfig
from .dataset import augment as augment_sample
from .errors import ContractError, TrainingDiverged
from .losses import total_loss
from .metrics import MetricsReport, evaluate_dataset
from .network import M2RNet, build
from .nn import sgd_step
from .tensor import Tensor, no_grad

LOG_FIELDS = ("epoch", "steps", "train_loss", "val_mae", "loss", "seconds")


def stack(samples):
    rgb = np.stack([s.rgb for s in samples])
    depth = np.stack([s.depth for s in samples])
    gt = np.stack([s.gt for s in samples])
    return Tensor(rgb), Tensor(depth), Tensor(gt)


def predict_maps(model: M2RNet, samples, batch_size: int = 8) -> list:
    """Float saliency maps [H, W] in eval mode."""
    was_training = model.training
    model.eval()
    maps = []
    try:
        with no_grad():
            for start in range(0, len(samples), batch_size):
                rgb, depth, _ = stack(samples[start:start + batch_size])
                maps.extend(model(rgb, depth).saliency.data[:, 0])
    finally:
        model.train(was_training)
    return maps


def evaluate_model(model: M2RNet, samples) -> MetricsReport:
    maps = predict_maps(model, samples)
    return evaluate_dataset([(m, s.gt[0]) for m, s in zip(maps, samples)])


def validation_mae(model: M2RNet, samples) -> float:
    maps = predict_maps(model, samples)
    return float(np.mean([np.abs(m - s.gt[0]).mean() for m, s in zip(maps, samples)]))


def train(config: TrainConfig, train_set, val_set=None, log_path=None, verbose: bool = False):
    """Train a freshly built model; returns ``(model, log)``.

    ``log`` holds one row per epoch plus an epoch-0 row whose ``train_loss``
    is the loss of the very first batch before any update.
    """
    if not train_set:
        raise ContractError("training set is empty")
    model = build(config.encoder, config.seed, config.scheme)
    model.train()
    loss_cfg = config.effective_loss()
    label = config.loss_label()
    rng = np.random.default_rng([config.seed, 1])
    params = model.parameters()
    log = []
    start = time.perf_counter()
    step = 0

    def record(epoch, loss_value):
        row = {"epoch": epoch, "steps": step, "train_loss": loss_value,
               "val_mae": validation_mae(model, val_set) if val_set else float("nan"),
               "loss": label, "seconds": round(time.perf_counter() - start, 3)}
        log.append(row)
        if verbose:
            print(f"epoch {epoch:3d}  loss {loss_value:.5f}  val_mae {row['val_mae']:.4f}  [{label}]")

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[lo:lo + config.batch_size]]
            if config.augment:
                batch = [augment_sample(s, rng) for s in batch]
            rgb, depth, gt = stack(batch)
            out = model(rgb, depth)
            loss = total_loss(out.saliency, gt, loss_cfg, out.sides)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(step, value)
            if step == 0:
                record(0, value)
            loss.backward()
            sgd_step(params, config.learning_rate, config.momentum, config.weight_decay)
            losses.append(value)
            step += 1
        record(epoch, float(np.mean(losses)))

    if log_path is not None:
        write_log(log, log_path)
    return model, log


def write_log(log, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for row in log:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
