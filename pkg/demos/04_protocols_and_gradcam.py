"""Evaluation protocols, label-set mismatches and Grad-CAM overlays.

Writes overlays to ./demo_out/gradcam.
"""
from pathlib import Path

from petl.evaluation import cross_dataset_eval, make_kfold_by_subject, make_loso
from petl.gradcam import ensemble_gradcam, overlay
from petl.io import CLASS_NAMES, SEVEN_CLASSES, write_ppm
from petl.network import FEATURES, Network, NetworkSpec
from petl.preprocess import clahe, prepare_input, resize_to
from petl.synthetic import generate_synthetic
from petl.training import prepare_data

# subject-independent folds: ascending ids, fixed-size groups, remainder in the last fold
plan = make_kfold_by_subject([f"S{i:03d}" for i in range(118)], k=10, group_size=12)
print("10-fold test sizes:", plan.test_sizes())
print("LOSO over 10 subjects:", len(make_loso([f"J{i}" for i in range(10)])), "folds")

# a seven-class model scored on eight-class data: Contempt samples are left out, classes matched by name
ds, images, _ = generate_synthetic(2, 16, seed=3, classes=CLASS_NAMES)
data = prepare_data(ds, 32, images=images)
seven = [Network(NetworkSpec("part", f, 7, input_size=32), seed=i) for i, f in enumerate(FEATURES)]
res = cross_dataset_eval(seven, SEVEN_CLASSES, data)
print(f"cross-dataset: {res.matrix.total} scored, {res.dropped} dropped ({', '.join(res.dropped_classes)})")

# where each (untrained, here) member looks for "Happy", and the union of the five maps
out = Path("demo_out/gradcam")
out.mkdir(parents=True, exist_ok=True)
full = [Network(NetworkSpec("part", f, 7), seed=i) for i, f in enumerate(FEATURES)]
x = prepare_input(images[0], 160)
crop = resize_to(clahe(images[0]), 160)
maps, union = ensemble_gradcam(full, x, SEVEN_CLASSES.index("Happy"))
for f, m in zip(FEATURES, maps):
    write_ppm(out / f"{f}.ppm", overlay(m, crop))
write_ppm(out / "union.ppm", overlay(union, crop))
print(f"map size {union.shape}, wrote {len(maps) + 1} overlays to {out}")
