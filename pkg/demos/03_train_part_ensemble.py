"""Two-phase training of a five-member part ensemble on synthetic faces.

Phase 1 fits each member's extractor to one facial part's landmarks. Phase 2
keeps the localization head as it is and fine-tunes the extractor with a
fresh classification head. The members' softmax outputs are summed at test
time. Small crops and few epochs keep this to a couple of minutes.
"""
import numpy as np

from petl.evaluation import evaluate
from petl.inference import predict_ensemble
from petl.synthetic import generate_synthetic
from petl.training import TrainConfig, prepare_data, train_full_pipeline

ds, images, _ = generate_synthetic(8, 14, seed=7)
data = prepare_data(ds, 32, images=images)
train = data.by_subjects(sorted(set(data.subjects))[2:])
test = data.by_subjects(sorted(set(data.subjects))[:2])
print(f"{len(train)} training crops, {len(test)} test crops from unseen subjects")

cfg = TrainConfig(phase1_epochs=20, phase2_epochs=10, phase1_lr=1e-3, phase2_lr=1e-3, input_size=32,
                  augment_phases=("phase2",), augment_multiplier=1)
nets = train_full_pipeline(train, "part", cfg)

for n in nets:
    l1, base = n.meta["phase1_l1"], n.meta["mean_predictor_l1"]
    acc = evaluate(n, test).accuracy
    print(f"  {n.spec.feature:<9} landmark L1 {l1:.4f} (mean predictor {base:.4f}), test accuracy {acc:.3f}")

cm = evaluate(nets, test)
print(f"ensemble test accuracy {cm.accuracy:.3f}")
print(cm.to_text())

labels, scores, _ = predict_ensemble(nets, test.inputs()[:3])
for lab, s in zip(labels, scores):
    print(f"  predicted {test.classes[lab]:<9} scores {np.round(s, 2)}")
