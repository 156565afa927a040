"""Central-difference gradient checking for layers and layer stacks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Layer


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_tensor: dict = field(default_factory=dict)
    checked: int = 0
    excluded: int = 0

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"grad_check {status}: max rel err {self.max_rel_error:.3e} "
                f"(tol {self.tolerance:.0e}, {self.checked} entries, {self.excluded} at kinks)")


# Gradients smaller than this are compared absolutely: a bias feeding a
# train-mode batchnorm has an exactly zero gradient, and a ratio of two
# round-off residues means nothing.
ABS_FLOOR = 1e-6


def _rel_error(a, n):
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(n).max(), ABS_FLOOR)
    return float(np.abs(a - n).max() / scale)


def grad_check(layer: Layer, x, tolerance=1e-4, step=1e-5, train=True, seed=0,
               max_entries=None, check_input=True):
    """Compare analytic and central-difference gradients of a random projection of ``layer(x)``.

    Must be run in float64: ``x`` and the layer parameters are expected to be
    float64 arrays. ``max_entries`` caps how many entries of each tensor are
    perturbed (sampled with ``seed``). Entries where the one-sided differences
    disagree sit on a kink (relu at 0, a max-pool tie) and are excluded.

    Batchnorm moving statistics are restored after every evaluation, so
    train-mode passes do not drift.
    """
    x = np.array(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    params = [(n, t) for n, t in layer.named_params() if t.trainable]
    buffers = [t for _, t in layer.named_params() if not t.trainable]
    saved = [b.data.copy() for b in buffers]

    def restore():
        for b, s in zip(buffers, saved):
            b.data[...] = s

    out, cache = layer.forward(x, train)
    restore()
    proj = rng.standard_normal(out.shape)
    dx, grads = layer.backward(proj, cache)

    def f():
        y, _ = layer.forward(x, train)
        restore()
        return float((y * proj).sum())

    targets = [(n, t.data, grads[n]) for n, t in params]
    if check_input:
        targets.append(("input", x, dx))

    report = GradCheckReport(0.0, tolerance)
    f0 = f()
    for name, arr, analytic in targets:
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        a_vals, n_vals = [], []
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = f()
            flat[i] = orig - step
            fm = f()
            flat[i] = orig
            d_plus, d_minus = (fp - f0) / step, (f0 - fm) / step
            if abs(d_plus - d_minus) > 1e-2 * (1.0 + max(abs(d_plus), abs(d_minus))):
                report.excluded += 1
                continue
            a_vals.append(analytic.reshape(-1)[i])
            n_vals.append((fp - fm) / (2 * step))
        err = _rel_error(np.array(a_vals), np.array(n_vals))
        report.per_tensor[name] = err
        report.checked += len(a_vals)
        report.max_rel_error = max(report.max_rel_error, err)
    return report


def loss_grad_check(loss, grad, pred, *args, step=1e-5):
    """Max relative error between ``grad(pred, *args)`` and central differences of ``loss``."""
    pred = np.array(pred, dtype=np.float64)
    analytic = grad(pred, *args)
    numeric = np.zeros_like(pred)
    flat, nflat = pred.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = loss(pred, *args)
        flat[i] = orig - step
        fm = loss(pred, *args)
        flat[i] = orig
        nflat[i] = (fp - fm) / (2 * step)
    return _rel_error(analytic, numeric)
