"""Baseline training and the two-phase landmark-to-expression transfer protocol."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import ops
from .augment import apply_affine, sample_spec
from .errors import MissingLandmarksError
from .layers import BatchNorm
from .network import FEATURES, Network, NetworkSpec
from .optim import AdamState, adam_step
from .preprocess import enhance, normalize_input, resize_to

log = logging.getLogger(__name__)

# (phase-1 epochs, phase-2 epochs, baseline epochs)
EPOCH_PROFILES = {
    "ckplus": (100, 300, 400),
    "jaffe": (100, 200, 300),
    "sfew": (200, 200, 400),
}

# seed offsets between members of one ensemble
MEMBER_SEED_STRIDE = 1009


@dataclass
class TrainConfig:
    phase1_lr: float = 0.01
    phase2_lr: float = 0.0001
    baseline_lr: float = 0.01
    batch: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    phase1_epochs: int = 100
    phase2_epochs: int = 300
    baseline_epochs: int = 400
    seed: int = 0
    input_size: int = 160
    enhance: str = "clahe"
    augment: bool = True
    augment_phases: tuple = ("phase1", "phase2", "baseline")
    augment_multiplier: int = 4
    rotation_max: float = 15.0
    shear_max: float = 10.0
    translate_max: float = 0.1
    flip_prob: float = 0.5
    early_stop_patience: int | None = None
    early_stop_min_delta: float = 1e-4
    recalibrate_bn: bool = True

    def __post_init__(self):
        if min(self.phase1_lr, self.phase2_lr, self.baseline_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch < 1:
            raise ValueError("batch size must be at least 1")

    @classmethod
    def for_profile(cls, name, **overrides):
        p1, p2, base = EPOCH_PROFILES[name]
        return cls(phase1_epochs=p1, phase2_epochs=p2, baseline_epochs=base, **overrides)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainingData:
    """Network-ready arrays: enhanced, resized gray crops and pixel landmarks at that size."""
    images: np.ndarray
    labels: np.ndarray | None
    landmarks: np.ndarray | None
    classes: tuple
    subjects: list = field(default_factory=list)
    ids: list = field(default_factory=list)

    def __len__(self):
        return len(self.images)

    @property
    def size(self):
        return self.images.shape[1]

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return TrainingData(
            self.images[idx],
            None if self.labels is None else self.labels[idx],
            None if self.landmarks is None else self.landmarks[idx],
            self.classes,
            [self.subjects[i] for i in idx] if self.subjects else [],
            [self.ids[i] for i in idx] if self.ids else [],
        )

    def by_subjects(self, subjects):
        keep = set(subjects)
        return self.take([i for i, s in enumerate(self.subjects) if s in keep])

    def inputs(self):
        """N x S x S x 3 normalized network input."""
        return normalize_input(np.repeat(self.images[..., None], 3, axis=-1))


def prepare_data(dataset, size=160, method="clahe", images=None):
    """Load, enhance and resize every sample of a :class:`~petl.io.Dataset`."""
    imgs, pts = [], []
    for i, s in enumerate(dataset.samples):
        raw = images[i] if images is not None else s.load_image(dataset.root)
        h, w = raw.shape
        imgs.append(resize_to(enhance(raw, method), size))
        lm = None if s.landmarks is None else np.asarray(s.landmarks, dtype=np.float64)
        pts.append(None if lm is None else lm * np.array([size / w, size / h]))
    landmarks = None if any(p is None for p in pts) else np.stack(pts)
    return TrainingData(
        np.stack(imgs), dataset.labels(), landmarks, tuple(dataset.classes),
        dataset.subjects(), [s.image_path for s in dataset.samples],
    )


# --- batching --------------------------------------------------------------

def _landmark_targets(points, indices, size):
    return (points[:, indices, :] / size).reshape(len(points), -1)


def _epoch_batches(data, config, rng, use_landmarks, augment):
    n = len(data)
    mult = config.augment_multiplier if augment else 1
    order = rng.permutation(n * mult) % n
    for start in range(0, len(order), config.batch):
        idx = order[start:start + config.batch]
        imgs = data.images[idx]
        pts = data.landmarks[idx] if use_landmarks else None
        if augment:
            imgs = imgs.copy()
            pts = None if pts is None else pts.copy()
            for k in range(len(idx)):
                spec = sample_spec(rng, config.rotation_max, config.shear_max,
                                   config.translate_max, config.flip_prob)
                img, p, _ = apply_affine(imgs[k], None if pts is None else pts[k], spec)
                imgs[k] = img
                if pts is not None:
                    pts[k] = p
        x = normalize_input(np.repeat(imgs[..., None], 3, axis=-1))
        yield idx, x, pts


# --- steps -----------------------------------------------------------------

def _adam(config, lr):
    return AdamState(alpha=lr, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon)


def landmark_step(net, x, targets, params, state):
    f, ec = net.extractor.forward(x, train=True)
    y, lc = net.localization.forward(f, train=True)
    loss = ops.l1_loss(y, targets)
    df, g_loc = net.localization.backward(ops.l1_loss_grad(y, targets).astype(y.dtype), lc)
    _, g_ext = net.extractor.backward(df, ec, need_dx=False)
    grads = {**g_ext, **g_loc}
    adam_step(params, {k: grads[k] for k in params}, state)
    return loss


def classify_step(net, x, labels, params, state):
    f, ec = net.extractor.forward(x, train=True)
    logits, cc = net.classifier.forward(f, train=True)
    probs = ops.softmax(logits)
    loss = ops.cross_entropy_loss(probs, labels)
    correct = int((probs.argmax(axis=1) == labels).sum())
    df, g_cls = net.classifier.backward(ops.softmax_cross_entropy_grad(probs, labels), cc)
    _, g_ext = net.extractor.backward(df, ec, need_dx=False)
    grads = {**g_ext, **g_cls}
    adam_step(params, {k: grads[k] for k in params}, state)
    return loss, correct


# --- batchnorm statistics --------------------------------------------------

def recalibrate_batchnorm(net, data, batch_size=64):
    """Set every extractor batchnorm's moving statistics to exact population statistics.

    Layers are processed in order with earlier ones already in inference
    mode, so the stored statistics match what inference will see. With only a
    few batches per epoch the exponential averages lag far behind the weights.
    """
    x_all = data.inputs()
    dtype = net.extractor.layers[0].kernel.data.dtype
    for i, layer in enumerate(net.extractor.layers):
        if not isinstance(layer, BatchNorm):
            continue
        n, s, ss = 0, 0.0, 0.0
        for start in range(0, len(x_all), batch_size):
            h, _ = net.extractor.forward(x_all[start:start + batch_size].astype(dtype), train=False, stop=i)
            h = h.reshape(-1, h.shape[-1]).astype(np.float64)
            n += len(h)
            s = s + h.sum(axis=0)
            ss = ss + (h * h).sum(axis=0)
        mean = s / n
        layer.moving_mean.data[...] = mean
        layer.moving_var.data[...] = np.maximum(ss / n - mean * mean, 0.0)
    return net


# --- evaluation helpers ----------------------------------------------------

def landmark_l1(net, data, batch_size=64):
    """Mean L1 (normalized coordinates) of the localization head on un-augmented data."""
    idx = net.spec.landmark_indices
    pred = net.predict_landmarks(data.inputs(), batch_size)
    return ops.l1_loss(pred.astype(np.float64), _landmark_targets(data.landmarks, idx, data.size))


def mean_predictor_l1(data, indices):
    """L1 of predicting every sample's landmarks as the per-coordinate training mean."""
    t = _landmark_targets(data.landmarks, indices, data.size)
    return ops.l1_loss(np.broadcast_to(t.mean(axis=0), t.shape), t)


def classification_loss(net, data, batch_size=64):
    probs = net.predict_proba(data.inputs(), batch_size)
    return ops.cross_entropy_loss(probs, data.labels), float((probs.argmax(1) == data.labels).mean())


# --- loops -----------------------------------------------------------------

class MetricsLog:
    """Per-epoch metrics, optionally mirrored to a comma-separated file."""

    header = "epoch,phase,loss,accuracy"

    def __init__(self, path=None):
        self.rows = []
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(self.header + "\n")

    def add(self, epoch, phase, loss, accuracy=None):
        row = (epoch, phase, float(loss), None if accuracy is None else float(accuracy))
        self.rows.append(row)
        if self.path:
            acc = "" if accuracy is None else f"{accuracy:.6f}"
            with self.path.open("a") as fh:
                fh.write(f"{epoch},{phase},{loss:.8f},{acc}\n")

    def losses(self, phase=None):
        return [r[2] for r in self.rows if phase is None or r[1] == phase]


def _run(net, data, config, phase, lr, epochs, groups, objective, metrics, validation=None, on_epoch=None):
    params = {n: t.data for n, t in net.trainable(*groups).items()}
    state = _adam(config, lr)
    rng = np.random.default_rng([config.seed, {"phase1": 1, "phase2": 2, "baseline": 3}[phase]])
    use_lm = objective == "landmarks"
    indices = net.spec.landmark_indices
    augment = config.augment and phase in config.augment_phases
    best, stale = np.inf, 0
    for epoch in range(1, epochs + 1):
        total, correct, seen = 0.0, 0, 0
        for idx, x, pts in _epoch_batches(data, config, rng, use_lm, augment):
            x = x.astype(net.extractor.layers[0].kernel.data.dtype)
            if use_lm:
                t = _landmark_targets(pts, indices, data.size).astype(x.dtype)
                loss = landmark_step(net, x, t, params, state)
            else:
                loss, c = classify_step(net, x, data.labels[idx], params, state)
                correct += c
            total += loss * len(idx)
            seen += len(idx)
        acc = None if use_lm else correct / seen
        metrics.add(epoch, phase, total / seen, acc)
        log.debug("%s %s epoch %d loss %.5f", net.spec.label, phase, epoch, total / seen)
        if on_epoch is not None:
            on_epoch(net, epoch)
        if validation is not None and config.early_stop_patience:
            vloss = landmark_l1(net, validation) if use_lm else classification_loss(net, validation)[0]
            if vloss < best - config.early_stop_min_delta:
                best, stale = vloss, 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    log.info("%s %s: early stop at epoch %d", net.spec.label, phase, epoch)
                    break
    if config.recalibrate_bn:
        recalibrate_batchnorm(net, data)
    net.meta["classes"] = list(data.classes)
    net.meta["config"] = {k: list(v) if isinstance(v, tuple) else v for k, v in config.to_dict().items()}
    net.meta.setdefault("training", []).append(
        {"phase": phase, "epochs": epoch if epochs else 0, "lr": lr, "seed": config.seed})
    return net


def _require_nonempty(data):
    if len(data) == 0:
        raise ValueError("training set is empty")


def train_baseline(data, num_classes, config, seed=None, metrics=None, validation=None, **spec_kw):
    """Extractor and classification head trained jointly from scratch."""
    _require_nonempty(data)
    seed = config.seed if seed is None else seed
    spec = NetworkSpec("baseline", None, num_classes, input_size=data.size, **spec_kw)
    net = Network(spec, seed)
    metrics = metrics if metrics is not None else MetricsLog()
    return _run(net, data, replace(config, seed=seed), "baseline", config.baseline_lr,
                config.baseline_epochs, ("extractor", "classifier"), "classes", metrics, validation)


def train_phase1_landmarks(data, spec, config, seed=None, metrics=None, validation=None):
    """Extractor and localization head trained on L1 landmark regression."""
    _require_nonempty(data)
    if data.landmarks is None or np.isnan(data.landmarks).any():
        missing = data.ids if data.landmarks is None else [
            data.ids[i] for i in np.flatnonzero(np.isnan(data.landmarks).any(axis=(1, 2)))]
        raise MissingLandmarksError(missing)
    if spec.z is None:
        raise ValueError("baseline networks have no landmark phase")
    seed = config.seed if seed is None else seed
    net = Network(replace(spec, input_size=data.size), seed)
    metrics = metrics if metrics is not None else MetricsLog()
    return _run(net, data, replace(config, seed=seed), "phase1", config.phase1_lr, config.phase1_epochs,
                ("extractor", "localization"), "landmarks", metrics, validation)


def train_phase2_classify(net, data, config, seed=None, metrics=None, validation=None, on_epoch=None):
    """Fine-tune the extractor and train the classification head; the localization head is untouched."""
    _require_nonempty(data)
    if net.spec.num_classes != len(data.classes):
        raise ValueError(f"network has {net.spec.num_classes} classes, data has {len(data.classes)}")
    seed = config.seed if seed is None else seed
    metrics = metrics if metrics is not None else MetricsLog()
    return _run(net, data, replace(config, seed=seed), "phase2", config.phase2_lr, config.phase2_epochs,
                ("extractor", "classifier"), "classes", metrics, validation, on_epoch)


def member_specs(kind, num_classes, n_models=None):
    if kind == "part":
        return [NetworkSpec("part", f, num_classes) for f in FEATURES]
    if kind in ("baseline", "full_transfer"):
        return [NetworkSpec(kind, None, num_classes)] * (n_models or 1)
    raise ValueError(f"unknown network kind {kind!r}")


def _train_member(args):
    spec, data, config, seed, log_path = args
    metrics = MetricsLog(log_path)
    if spec.kind == "baseline":
        return train_baseline(data, spec.num_classes, config, seed, metrics)
    net = train_phase1_landmarks(data, spec, config, seed, metrics)
    net.meta["phase1_l1"] = landmark_l1(net, data)
    net.meta["mean_predictor_l1"] = mean_predictor_l1(data, spec.landmark_indices)
    return train_phase2_classify(net, data, config, seed, metrics)


def worker_count(n_jobs):
    cap = int(os.environ.get("PETL_THREADS", "1") or 1)
    return max(1, min(cap, n_jobs))


def train_full_pipeline(data, kind, config, n_models=None, log_dir=None, workers=None):
    """Train every member for ``kind``: five part networks, or ``n_models`` baseline/full networks.

    Member ``i`` uses seed ``config.seed + i * MEMBER_SEED_STRIDE``. Members
    run in separate processes when ``PETL_THREADS`` allows it.
    """
    specs = member_specs(kind, len(data.classes), n_models)
    jobs = []
    for i, spec in enumerate(specs):
        path = None if log_dir is None else Path(log_dir) / f"{spec.label}_{i}.csv"
        jobs.append((spec, data, config, config.seed + i * MEMBER_SEED_STRIDE, path))
    workers = worker_count(len(jobs)) if workers is None else workers
    if workers == 1:
        return [_train_member(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_train_member, jobs))
