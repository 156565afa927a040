import json

import numpy as np
import pytest

from petl.cli import main
from petl.config import dump_config, load_config, make_train_config, parse_config, split_config
from petl.errors import ConfigError
from petl.training import TrainConfig

# --- config files ------------------------------------------------------------


def test_parse_comments_and_dashes():
    raw = parse_config("# run\nphase1-epochs = 5   # short\n\nenhance=he\n")
    assert raw == {"phase1_epochs": "5", "enhance": "he"}


@pytest.mark.parametrize("text,line", [("a = 1\nnot a pair\n", 2), ("a = 1\na = 2\n", 2), (" = 3\n", 1)])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ConfigError, match=f"line {line}"):
        parse_config(text)


def test_coercion_by_field_type():
    c = make_train_config({"batch": "16", "phase2_lr": "1e-5", "augment": "no",
                           "augment_phases": "phase1, phase2", "early_stop_patience": "none"})
    assert (c.batch, c.phase2_lr, c.augment, c.augment_phases, c.early_stop_patience) == (
        16, 1e-5, False, ("phase1", "phase2"), None)
    assert make_train_config({"early_stop_patience": "7"}).early_stop_patience == 7


@pytest.mark.parametrize("bad", [{"batch": "many"}, {"augment": "maybe"}, {"colour": "red"}, {"phase1_lr": "-1"}])
def test_bad_values_rejected(bad):
    with pytest.raises(ConfigError):
        make_train_config(bad)


def test_dump_then_load_round_trip(tmp_path):
    c = TrainConfig(seed=3, augment_phases=("phase2",), early_stop_patience=None)
    p = tmp_path / "c.txt"
    p.write_text(dump_config(c.to_dict(), header="saved"))
    assert make_train_config(load_config(p)) == c
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.txt")


def test_split_config():
    train, opts = split_config({"seed": "1", "kinds": "baseline"}, {"kinds"})
    assert train == {"seed": "1"} and opts == {"kinds": "baseline"}
    with pytest.raises(ConfigError):
        split_config({"zzz": "1"}, set())


# --- command line -----------------------------------------------------------------------


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["train", "--out", "x"]) == 1          # --manifest and --kind missing
    assert main(["synth"]) == 1                        # --out missing
    assert main(["fly"]) == 1
    assert main(["train", "--set", "nonsense"]) == 1
    assert main(["--version"]) == 0
    assert "petl" in capsys.readouterr().out


def test_runtime_errors_exit_2(tmp_path):
    assert main(["eval", "--manifest", str(tmp_path / "none.txt"), "--checkpoints", str(tmp_path / "x.petl")]) == 2
    bad = tmp_path / "bad.petl"
    bad.write_bytes(b"junk")
    assert main(["profile", "--checkpoints", str(bad)]) == 2


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--subjects", "2", "--per-subject", "8",
                 "--classes", "eight", "--seed", "4"]) == 0
    cfg = root / "run.cfg"
    cfg.write_text("phase1_epochs = 1\nphase2_epochs = 1\naugment = false\nbatch = 8\n")
    assert main(["train", "--manifest", str(root / "data/manifest.txt"), "--kind", "part-ensemble",
                 "--out", str(root / "run"), "--config", str(cfg), "--input-size", "32",
                 "--set", "phase2_lr=0.001", "--log-level", "warning"]) == 0
    return root


def test_train_outputs(run):
    ckpts = sorted(p.name for p in (run / "run").glob("*.petl"))
    assert ckpts == sorted(f"{f}.petl" for f in ("eyebrows", "eyes", "nose", "mouth", "jaw"))
    eff = load_config(run / "run/effective_config.txt")
    assert eff["phase1_epochs"] == "1" and eff["phase2_lr"] == "0.001" and eff["input_size"] == "32"
    assert len(list((run / "run/metrics").glob("*.csv"))) == 5


def _ckpts(run):
    return [str(p) for p in sorted((run / "run").glob("*.petl"))]


def test_profile_reports_ensemble_count(run, capsys):
    assert main(["profile", "--checkpoints", *_ckpts(run)]) == 0
    out = capsys.readouterr().out
    assert "1,647,480" in out and "337,920" in out


def test_eval_and_predict(run, capsys):
    manifest = str(run / "data/manifest.txt")
    assert main(["eval", "--manifest", manifest, "--checkpoints", *_ckpts(run), "--out", str(run / "ev")]) == 0
    assert "accuracy" in capsys.readouterr().out
    assert (run / "ev/confusion.csv").read_text().count("\n") == 9
    assert main(["predict", "--image", str(next((run / "data").rglob("*.pgm"))),
                 "--checkpoints", *_ckpts(run)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert len(rec["per_model"]) == 5 and abs(sum(rec["scores"]) - 5) < 1e-4


def test_gradcam_files(run):
    img = next((run / "data").rglob("*.pgm"))
    out = run / "cam"
    assert main(["gradcam", "--image", str(img), "--class", "Happy", "--checkpoints", *_ckpts(run),
                 "--out", str(out)]) == 0
    assert len(list(out.glob("overlay_*.ppm"))) == 6 and len(list(out.glob("heatmap_*.pgm"))) == 6
    assert main(["gradcam", "--image", str(img), "--class", "Bored", "--checkpoints", *_ckpts(run),
                 "--out", str(out)]) == 2


def test_cross_dataset_to_seven_classes(run, tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "seven"), "--subjects", "2", "--per-subject", "7"]) == 0
    capsys.readouterr()
    assert main(["cross-dataset", "--manifest", str(tmp_path / "seven/manifest.txt"),
                 "--checkpoints", *_ckpts(run)]) == 0
    assert "dropped 0" in capsys.readouterr().out
    assert main(["cross-dataset", "--manifest", str(run / "data/manifest.txt"),
                 "--checkpoints", *_ckpts(run)]) == 0


def test_crossval_loso(run):
    out = run / "cv"
    assert main(["crossval", "--manifest", str(run / "data/manifest.txt"), "--protocol", "loso",
                 "--kinds", "baseline", "--input-size", "32", "--set", "baseline_epochs=1",
                 "--out", str(out), "--log-level", "warning"]) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "row,Baseline" and len(lines) == 5  # two folds, pooled, fold mean
    assert np.isfinite(float(lines[-1].split(",")[1]))
