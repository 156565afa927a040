"""Single-network and ensemble prediction, plus latency/size profiling."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _batch(x):
    x = np.asarray(x)
    return x[None] if x.ndim == 3 else x


def predict_single(net, crop, batch_size=64):
    """Class probabilities for one normalized crop (H x W x 3) or a batch of them."""
    x = np.asarray(crop)
    if x.ndim not in (3, 4):
        raise ValueError(f"expected an H x W x 3 crop or N x H x W x 3 batch, got shape {x.shape}")
    probs = net.predict_proba(_batch(x), batch_size)
    return probs[0] if x.ndim == 3 else probs


def ensemble_scores(prob_list):
    """Element-wise sum of per-model probability vectors, accumulated in float64."""
    probs = [np.asarray(p, dtype=np.float64) for p in prob_list]
    if not probs:
        raise ValueError("ensemble needs at least one model")
    shape = probs[0].shape
    for p in probs[1:]:
        if p.shape != shape:
            raise ValueError(f"class-count mismatch across models: {shape} vs {p.shape}")
    total = np.zeros(shape, dtype=np.float64)
    for p in probs:
        total += p
    return total


def argmax_lowest(scores):
    """Argmax along the last axis; exact ties go to the lowest class index."""
    return np.argmax(scores, axis=-1)


def _check_compatible(nets):
    if not nets:
        raise ValueError("ensemble needs at least one model")
    counts = {n.spec.num_classes for n in nets}
    if len(counts) != 1:
        raise ValueError(f"class-count mismatch across models: {sorted(counts)}")


def predict_ensemble(nets, crop, batch_size=64):
    """Sum the models' softmax outputs and take the argmax.

    Returns ``(labels, scores, per_model)``; for a single crop ``labels`` is
    an int and ``scores`` a length-C vector.
    """
    _check_compatible(nets)
    per_model = [predict_single(n, crop, batch_size) for n in nets]
    scores = ensemble_scores(per_model)
    labels = argmax_lowest(scores)
    if scores.ndim == 1:
        labels = int(labels)
    return labels, scores, per_model


@dataclass
class Prediction:
    label: int
    name: str
    scores: list
    per_model: list = field(default_factory=list)
    models: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({
            "label": self.label, "name": self.name, "scores": self.scores,
            "per_model": self.per_model, "models": self.models,
        }, indent=2)


def prediction_record(nets, crop, classes):
    label, scores, per_model = predict_ensemble(nets, crop)
    return Prediction(
        label, classes[label], [float(v) for v in scores],
        [[float(v) for v in p] for p in per_model], [n.spec.label for n in nets],
    )


# --- profiling -------------------------------------------------------------

def _stats(times):
    t = np.asarray(times) * 1000.0
    return {"mean_ms": float(t.mean()), "median_ms": float(np.median(t)), "n": len(t)}


def profile_inference(nets, n_trials=100, warmup=10, input_size=None, paths=None, seed=0):
    """Wall-clock forward-pass latency for each model and for the serial ensemble.

    Only the network forward passes are timed; image loading and
    preprocessing are outside the measured region. ``paths`` (optional, one
    per model) adds checkpoint file sizes to the report.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    _check_compatible(nets)
    size = input_size or nets[0].spec.input_size
    x = np.random.default_rng(seed).uniform(-1, 1, (1, size, size, 3))
    for _ in range(warmup):
        for n in nets:
            n.predict_proba(x)
    per_model = [[] for _ in nets]
    serial = []
    for _ in range(n_trials):
        t_all = time.perf_counter()
        for i, n in enumerate(nets):
            t = time.perf_counter()
            n.predict_proba(x)
            per_model[i].append(time.perf_counter() - t)
        serial.append(time.perf_counter() - t_all)
    report = {
        "input_size": size,
        "models": [dict(label=n.spec.label, **_stats(ts)) for n, ts in zip(nets, per_model)],
        "serial_ensemble": _stats(serial),
    }
    if paths is not None:
        for m, p in zip(report["models"], paths):
            m["file_bytes"] = Path(p).stat().st_size
            m["path"] = str(p)
    return report


def format_profile(report):
    lines = [f"input {report['input_size']}x{report['input_size']}",
             f"{'model':<14}{'mean ms':>10}{'median ms':>11}{'bytes':>12}"]
    for m in report["models"]:
        size = m.get("file_bytes", "")
        lines.append(f"{m['label']:<14}{m['mean_ms']:>10.3f}{m['median_ms']:>11.3f}{size:>12}")
    s = report["serial_ensemble"]
    lines.append(f"{'serial total':<14}{s['mean_ms']:>10.3f}{s['median_ms']:>11.3f}")
    return "\n".join(lines)
