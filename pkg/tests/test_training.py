from dataclasses import replace

import numpy as np
import pytest

from petl.errors import MissingLandmarksError
from petl.layers import BatchNorm
from petl.network import FEATURES, Network, NetworkSpec
from petl.synthetic import generate_synthetic
from petl.training import (EPOCH_PROFILES, MEMBER_SEED_STRIDE, MetricsLog, TrainConfig, landmark_l1,
                           mean_predictor_l1, prepare_data, recalibrate_batchnorm, train_baseline,
                           train_full_pipeline, train_phase1_landmarks, train_phase2_classify, worker_count)

SIZE = 32


@pytest.fixture(scope="module")
def data():
    ds, imgs, _ = generate_synthetic(3, 7, seed=2)
    return prepare_data(ds, SIZE, images=imgs)


def cfg(**kw):
    base = dict(phase1_epochs=2, phase2_epochs=2, baseline_epochs=2, input_size=SIZE, batch=8,
                phase1_lr=1e-3, phase2_lr=1e-3, baseline_lr=1e-3, augment_multiplier=1)
    return TrainConfig(**{**base, **kw})


def param_bytes(net, prefix=""):
    return {n: t.data.tobytes() for n, t in net.named_params() if n.startswith(prefix)}


def test_prepare_data_scales_landmarks(data):
    assert data.images.shape == (21, SIZE, SIZE) and data.images.dtype == np.uint8
    assert data.landmarks.shape == (21, 68, 2) and data.landmarks.max() < SIZE
    assert data.inputs().shape == (21, SIZE, SIZE, 3) and -1 <= data.inputs().min()


def test_config_profiles_and_validation():
    assert EPOCH_PROFILES["ckplus"] == (100, 300, 400)
    c = TrainConfig.for_profile("sfew", seed=4)
    assert (c.phase1_epochs, c.phase2_epochs, c.baseline_epochs, c.seed) == (200, 200, 400, 4)
    with pytest.raises(ValueError):
        TrainConfig(phase2_lr=0)
    with pytest.raises(ValueError):
        TrainConfig(batch=0)


def test_same_seed_same_bytes(data):
    spec = NetworkSpec("part", "nose", 7)
    a = train_phase1_landmarks(data, spec, cfg(), seed=3)
    b = train_phase1_landmarks(data, spec, cfg(), seed=3)
    c = train_phase1_landmarks(data, spec, cfg(), seed=4)
    assert param_bytes(a) == param_bytes(b) and param_bytes(a) != param_bytes(c)


def test_zero_epochs_leave_initialization(data):
    spec = NetworkSpec("part", "eyes", 7)
    net = train_phase1_landmarks(data, spec, cfg(phase1_epochs=0, recalibrate_bn=False), seed=9)
    assert param_bytes(net) == param_bytes(Network(replace(spec, input_size=SIZE), 9))


def test_phase2_freezes_localization_and_moves_the_rest(data):
    net = train_phase1_landmarks(data, NetworkSpec("part", "mouth", 7), cfg(), seed=1)
    loc, ext, cls = param_bytes(net, "localization."), param_bytes(net, "extractor."), param_bytes(net, "classifier.")
    train_phase2_classify(net, data, cfg(phase2_epochs=3), seed=1)
    assert param_bytes(net, "localization.") == loc
    assert param_bytes(net, "extractor.") != ext and param_bytes(net, "classifier.") != cls
    assert [t["phase"] for t in net.meta["training"]] == ["phase1", "phase2"]


def test_phase2_class_count_must_match(data):
    net = Network(NetworkSpec("part", "jaw", 8, input_size=SIZE), 0)
    with pytest.raises(ValueError):
        train_phase2_classify(net, data, cfg())


def test_missing_landmarks_named(data):
    broken = data.take(range(4))
    broken.landmarks = broken.landmarks.copy()
    broken.landmarks[2, 5] = np.nan
    with pytest.raises(MissingLandmarksError) as e:
        train_phase1_landmarks(broken, NetworkSpec("part", "nose", 7), cfg())
    assert e.value.sample_ids == [broken.ids[2]]
    with pytest.raises(ValueError):
        train_phase1_landmarks(data, NetworkSpec("baseline", None, 7), cfg())
    with pytest.raises(ValueError):
        train_baseline(data.take([]), 7, cfg())


def test_metrics_csv(data, tmp_path):
    log = MetricsLog(tmp_path / "m.csv")
    train_baseline(data, 7, cfg(baseline_epochs=3), metrics=log)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "epoch,phase,loss,accuracy" and len(lines) == 4
    assert [r[0] for r in log.rows] == [1, 2, 3] and all(0 <= r[3] <= 1 for r in log.rows)


def test_baseline_loss_decreases(data):
    log = MetricsLog()
    train_baseline(data, 7, cfg(baseline_epochs=8, augment=False), metrics=log)
    losses = log.losses("baseline")
    assert losses[-1] < losses[0]


def test_landmark_training_beats_mean_predictor(data):
    c = cfg(phase1_epochs=15, augment=False)
    net = train_phase1_landmarks(data, NetworkSpec("part", "jaw", 7), c, seed=0)
    assert landmark_l1(net, data) < mean_predictor_l1(data, net.spec.landmark_indices)


def test_recalibration_matches_population_statistics(data):
    net = Network(NetworkSpec("part", "eyes", 7, input_size=SIZE), 0)
    recalibrate_batchnorm(net, data)
    i = next(k for k, l in enumerate(net.extractor.layers) if isinstance(l, BatchNorm))
    h, _ = net.extractor.forward(data.inputs().astype(np.float32), train=False, stop=i)
    h = h.reshape(-1, h.shape[-1]).astype(np.float64)
    bn = net.extractor.layers[i]
    np.testing.assert_allclose(bn.moving_mean.data, h.mean(axis=0), rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(bn.moving_var.data, h.var(axis=0), rtol=1e-3, atol=1e-6)


def test_full_pipeline_members_and_seeds(data, tmp_path):
    c = cfg(phase1_epochs=0, phase2_epochs=0, seed=5, recalibrate_bn=False)
    nets = train_full_pipeline(data, "part", c, log_dir=tmp_path)
    assert [n.spec.feature for n in nets] == list(FEATURES)
    seeds = [n.meta["training"][0]["seed"] for n in nets]
    assert seeds == [5 + i * MEMBER_SEED_STRIDE for i in range(5)]
    assert len(list(tmp_path.glob("*.csv"))) == 5
    base = train_full_pipeline(data, "baseline", c, n_models=2)
    assert len(base) == 2 and param_bytes(base[0]) != param_bytes(base[1])
    with pytest.raises(ValueError):
        train_full_pipeline(data, "other", c)


def test_worker_count_respects_env(monkeypatch):
    monkeypatch.setenv("PETL_THREADS", "3")
    assert worker_count(5) == 3 and worker_count(2) == 2
    monkeypatch.delenv("PETL_THREADS")
    assert worker_count(5) == 1
