"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import time

import numpy as np

from .tensor import Tensor, no_grad, record_kinks


# Derivatives smaller than RESOLUTION * |f| are below what a central
# difference at h = 1e-4 resolves in float64: cancellation in
# f(x+h) - f(x-h) costs ~eps * |f| * (sum of |terms| / |f|) / h.
RESOLUTION = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 0.0) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)``, 0 when all vanish."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def _evaluate(fn):
    with record_kinks() as kinks:
        value = fn().item()
    return value, kinks


def check_gradients(fn, inputs, h: float = 1e-4, max_entries=None, rng=None, stats=None) -> dict:
    """Compare backprop against central differences for a scalar ``fn``.

    ``inputs`` is a list of Tensors with ``requires_grad`` set (parameters
    count too).  ``fn()`` must rebuild the graph from those tensors each
    call.  When ``max_entries`` is given, only that many randomly chosen
    coordinates per tensor are compared.

    A coordinate whose stencil ``x +- h`` changes the branch taken by any
    relu, clamp or max is not differentiable there; it is skipped (and a
    replacement drawn when sampling).  ``stats``, if given, accumulates
    ``checked`` and ``skipped`` counts.  Returns the relative error per
    input index, with the denominator floored at ``RESOLUTION * max(1, |f|)``.
    """
    for t in inputs:
        t.grad = None
    loss = fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    errors = {}
    checked = skipped = 0
    with no_grad():
        f0, base = _evaluate(fn)
        floor = RESOLUTION * max(1.0, abs(f0))
        for i, t in enumerate(inputs):
            t.data = np.ascontiguousarray(t.data)
            flat = t.data.reshape(-1)
            order = np.arange(flat.size)
            want = flat.size
            if max_entries is not None and flat.size > max_entries:
                order = (rng or np.random.default_rng(0)).permutation(flat.size)
                want = max_entries
            idx, numeric = [], []
            for k in order:
                if len(idx) == want:
                    break
                orig = flat[k]
                flat[k] = orig + h
                up, kinks_up = _evaluate(fn)
                flat[k] = orig - h
                down, kinks_down = _evaluate(fn)
                flat[k] = orig
                if kinks_up != base or kinks_down != base:
                    skipped += 1
                    continue
                idx.append(k)
                numeric.append((up - down) / (2 * h))
            checked += len(idx)
            errors[i] = relative_error(analytic[i].reshape(-1)[idx], np.array(numeric), floor)
    for t in inputs:
        t.grad = None
    if stats is not None:
        stats["checked"] = stats.get("checked", 0) + checked
        stats["skipped"] = stats.get("skipped", 0) + skipped
    return errors


def projected(out: Tensor, rng: np.random.Generator) -> Tensor:
    """Reduce a tensor to a scalar via a fixed random projection."""
    weights = Tensor(rng.standard_normal(out.shape))
    return (out * weights).sum()


def run_suite(seed: int = 0, trials: int = 100, verbose: bool = False) -> dict:
    """Run every registered gradient check.

    Returns case name -> max relative error, plus ``_seconds`` and the
    ``_checked`` / ``_skipped`` coordinate counts.
    """
    from ._gradcases import CASES

    results = {}
    stats = {}
    start = time.perf_counter()
    for name, case, n_trials in CASES:
        worst = 0.0
        for trial in range(min(trials, n_trials) if n_trials else trials):
            rng = np.random.default_rng([seed, trial])
            fn, inputs, max_entries = case(rng)
            errs = check_gradients(fn, inputs, max_entries=max_entries, rng=rng, stats=stats)
            worst = max(worst, max(errs.values(), default=0.0))
        results[name] = worst
        if verbose:
            print(f"{name:28s} max rel err {worst:.3e}")
    results["_seconds"] = time.perf_counter() - start
    results["_checked"] = stats.get("checked", 0)
    results["_skipped"] = stats.get("skipped", 0)
    return results
