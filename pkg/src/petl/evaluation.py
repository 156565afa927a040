"""Subject-independent fold plans, confusion matrices, cross-dataset transfer and reports."""
from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .inference import argmax_lowest, ensemble_scores
from .network import FEATURES

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("Baseline", "FTL", "Eyebrows", "Eyes", "Nose", "Mouth", "Jaw", "EL")
PART_COLUMNS = {f: f.capitalize() for f in FEATURES}


# --- fold plans ------------------------------------------------------------

@dataclass
class FoldPlan:
    folds: list                      # [(train subject set, test subject set), ...]
    method: str = ""

    def __post_init__(self):
        self.validate()

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    def validate(self):
        seen = set()
        for i, (train, test) in enumerate(self.folds):
            overlap = set(train) & set(test)
            if overlap:
                raise ValueError(f"fold {i}: subjects in both train and test: {sorted(overlap)}")
            again = seen & set(test)
            if again:
                raise ValueError(f"fold {i}: subjects already tested in an earlier fold: {sorted(again)}")
            seen |= set(test)

    def test_sizes(self):
        return [len(t) for _, t in self.folds]


def _unique_sorted(subjects):
    return sorted(set(subjects))


def make_kfold_by_subject(subjects, k=10, group_size=12):
    """Sort subject ids, cut them into ``k`` consecutive groups and test on each group in turn.

    The first ``k - 1`` groups hold ``group_size`` subjects and the last
    takes whatever remains.
    """
    ids = _unique_sorted(subjects)
    n = len(ids)
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n:
        raise ValueError(f"{k} folds requested for only {n} subjects")
    if group_size < 1 or (k - 1) * group_size >= n:
        raise ValueError(f"{k - 1} groups of {group_size} leave nothing for the last fold of {n} subjects")
    groups = [ids[i * group_size:(i + 1) * group_size] for i in range(k - 1)]
    groups.append(ids[(k - 1) * group_size:])
    everyone = set(ids)
    return FoldPlan([(everyone - set(g), set(g)) for g in groups], f"{k}-fold by subject")


def make_loso(subjects):
    """Leave-one-subject-out: one fold per subject."""
    ids = _unique_sorted(subjects)
    if len(ids) < 2:
        raise ValueError("leave-one-subject-out needs at least 2 subjects")
    everyone = set(ids)
    return FoldPlan([(everyone - {s}, {s}) for s in ids], "leave-one-subject-out")


# --- confusion matrices ----------------------------------------------------

@dataclass
class ConfusionMatrix:
    counts: np.ndarray               # rows actual, columns predicted
    classes: tuple

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.classes)
        if self.counts.shape != (c, c):
            raise ValueError(f"counts shape {self.counts.shape} does not match {c} classes")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_predictions(cls, actual, predicted, classes):
        c = len(classes)
        counts = np.bincount(np.asarray(actual) * c + np.asarray(predicted), minlength=c * c)
        return cls(counts.reshape(c, c), tuple(classes))

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def correct(self):
        return int(np.trace(self.counts))

    @property
    def accuracy(self):
        return self.correct / self.total if self.total else float("nan")

    def row_totals(self):
        return self.counts.sum(axis=1)

    def __add__(self, other):
        if tuple(other.classes) != tuple(self.classes):
            raise ValueError(f"class mismatch: {self.classes} vs {other.classes}")
        return ConfusionMatrix(self.counts + other.counts, self.classes)

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix) and tuple(self.classes) == tuple(other.classes)
                and np.array_equal(self.counts, other.counts))

    def to_text(self):
        width = max(6, max(len(c) for c in self.classes) + 1)
        head = " " * width + "".join(f"{c[:width - 1]:>{width}}" for c in self.classes)
        rows = [head] + [f"{c:<{width}}" + "".join(f"{v:>{width}d}" for v in r)
                         for c, r in zip(self.classes, self.counts)]
        return "\n".join(rows)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["actual\\predicted", *self.classes])
        for c, r in zip(self.classes, self.counts):
            w.writerow([c, *map(int, r)])
        return buf.getvalue()


def aggregate_folds(matrices):
    """Element-wise sum of per-fold matrices (pooled counts)."""
    matrices = list(matrices)
    if not matrices:
        raise ValueError("nothing to aggregate")
    out = matrices[0]
    for m in matrices[1:]:
        out = out + m
    return ConfusionMatrix(out.counts.copy(), out.classes)


def fold_mean_accuracy(matrices):
    return float(np.mean([m.accuracy for m in matrices]))


# --- evaluation ------------------------------------------------------------

def _as_list(model):
    return list(model) if isinstance(model, (list, tuple)) else [model]


def model_scores(model, x, batch_size=64):
    """Per-sample class scores: softmax for one network, float64 summed softmax for a list."""
    nets = _as_list(model)
    return ensemble_scores([n.predict_proba(x, batch_size) for n in nets])


def confusion_from_scores(scores, labels, classes):
    return ConfusionMatrix.from_predictions(labels, argmax_lowest(scores), classes)


def evaluate(model, data, batch_size=64):
    """Confusion matrix of a network (or an ensemble given as a list) on prepared data."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty slice")
    nets = _as_list(model)
    counts = {n.spec.num_classes for n in nets}
    if counts != {len(data.classes)}:
        raise ValueError(f"model class count {sorted(counts)} does not match data ({len(data.classes)})")
    return confusion_from_scores(model_scores(nets, data.inputs(), batch_size), data.labels, data.classes)


@dataclass
class CrossDatasetResult:
    matrix: ConfusionMatrix
    dropped: int
    dropped_classes: tuple

    @property
    def accuracy(self):
        return self.matrix.accuracy


def cross_dataset_eval(model, source_classes, data, batch_size=64):
    """Evaluate a model trained on ``source_classes`` on data with its own class list.

    Labels are matched by name. Target samples whose class the model never
    saw are dropped and counted. Model outputs for classes absent from the
    target are ignored, so the argmax runs over the shared classes only.
    """
    source_classes = tuple(source_classes)
    shared = tuple(c for c in source_classes if c in set(data.classes))
    if not shared:
        raise ValueError("source and target class sets do not intersect")
    name_of = {i: c for i, c in enumerate(data.classes)}
    keep = np.array([name_of[int(y)] in shared for y in data.labels], dtype=bool)
    dropped_classes = tuple(c for c in data.classes if c not in shared)
    if not keep.any():
        raise ValueError("no target samples belong to the shared classes")
    sub = data.take(np.flatnonzero(keep))
    to_shared = {c: i for i, c in enumerate(shared)}
    labels = np.array([to_shared[name_of[int(y)]] for y in sub.labels], dtype=np.int64)
    cols = [source_classes.index(c) for c in shared]
    scores = model_scores(model, sub.inputs(), batch_size)[:, cols]
    matrix = confusion_from_scores(scores, labels, shared)
    return CrossDatasetResult(matrix, int((~keep).sum()), dropped_classes)


# --- cross-validation runs -------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    train_subjects: list
    test_subjects: list
    matrices: dict                   # report column -> ConfusionMatrix
    landmark_l1: dict = field(default_factory=dict)        # part -> phase-1 training L1
    mean_predictor_l1: dict = field(default_factory=dict)  # part -> mean-predictor L1
    seconds: float = 0.0


@dataclass
class RunReport:
    folds: list
    classes: tuple
    title: str = ""

    def columns(self):
        present = set().union(*(f.matrices for f in self.folds)) if self.folds else set()
        return [c for c in REPORT_COLUMNS if c in present]

    def pooled(self, column):
        return aggregate_folds(f.matrices[column] for f in self.folds)

    def fold_mean(self, column):
        return fold_mean_accuracy(f.matrices[column] for f in self.folds)

    def to_text(self):
        cols = self.columns()
        width = 10
        lines = []
        if self.title:
            lines.append(self.title)
        lines.append(f"{'':<12}" + "".join(f"{c:>{width}}" for c in cols))
        for f in self.folds:
            lines.append(f"{'fold ' + str(f.fold):<12}"
                         + "".join(f"{100 * f.matrices[c].accuracy:>{width}.2f}" for c in cols))
        lines.append(f"{'pooled':<12}" + "".join(f"{100 * self.pooled(c).accuracy:>{width}.2f}" for c in cols))
        lines.append(f"{'fold mean':<12}" + "".join(f"{100 * self.fold_mean(c):>{width}.2f}" for c in cols))
        lines.append("accuracies in %; pooled = summed counts, fold mean = average of per-fold accuracies")
        return "\n".join(lines)

    def to_csv(self):
        cols = self.columns()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", *cols])
        for f in self.folds:
            w.writerow([f"fold{f.fold}", *(f"{f.matrices[c].accuracy:.6f}" for c in cols)])
        w.writerow(["pooled", *(f"{self.pooled(c).accuracy:.6f}" for c in cols)])
        w.writerow(["fold_mean", *(f"{self.fold_mean(c):.6f}" for c in cols)])
        return buf.getvalue()

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text() + "\n")
        (out / "report.csv").write_text(self.to_csv())
        for c in self.columns():
            (out / f"confusion_{c}.csv").write_text(self.pooled(c).to_csv())
        return out


def fold_seed(seed, fold):
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0] % (2**31 - 1))


def _run_fold(args):
    from . import training

    i, train_ids, test_ids, data, config, kinds, n_models, log_dir, inner_workers = args
    t0 = time.perf_counter()
    train, test = data.by_subjects(train_ids), data.by_subjects(test_ids)
    cfg = replace(config, seed=fold_seed(config.seed, i))
    x_test = test.inputs()
    matrices, l1, base = {}, {}, {}
    fold_dir = None if log_dir is None else Path(log_dir) / f"fold{i}"
    for kind in kinds:
        nets = training.train_full_pipeline(train, kind, cfg, n_models, fold_dir, inner_workers)
        per_net = [n.predict_proba(x_test) for n in nets]
        if kind == "part":
            for n, p in zip(nets, per_net):
                matrices[PART_COLUMNS[n.spec.feature]] = confusion_from_scores(p, test.labels, test.classes)
                l1[n.spec.feature] = n.meta.get("phase1_l1")
                base[n.spec.feature] = n.meta.get("mean_predictor_l1")
            column = "EL"
        else:
            column = "Baseline" if kind == "baseline" else "FTL"
        matrices[column] = confusion_from_scores(ensemble_scores(per_net), test.labels, test.classes)
    seconds = time.perf_counter() - t0
    log.info("fold %d done in %.1fs: %s", i, seconds,
             ", ".join(f"{k}={m.accuracy:.3f}" for k, m in matrices.items()))
    return FoldResult(i, sorted(train_ids), sorted(test_ids), matrices, l1, base, seconds)


def run_crossval(data, plan, config, kinds=("part",), n_models=1, log_dir=None, title=""):
    """Train and evaluate every requested network kind on every fold of ``plan``.

    Fold ``i`` trains with a seed derived from ``(config.seed, i)``; folds run
    in parallel processes when ``PETL_THREADS`` allows it.
    """
    from .training import worker_count

    workers = worker_count(len(plan))
    inner = None if workers == 1 else 1
    jobs = [(i, sorted(tr), sorted(te), data, config, tuple(kinds), n_models, log_dir, inner)
            for i, (tr, te) in enumerate(plan)]
    if workers == 1:
        results = [_run_fold(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_fold, jobs))
    return RunReport(results, tuple(data.classes), title)
