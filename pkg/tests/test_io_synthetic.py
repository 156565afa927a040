import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from petl.errors import FieldCountError, ImageFormatError, ManifestError, MissingFileError, VocabularyError
from petl.io import (CLASS_NAMES, Dataset, Sample, convert_full_image_landmarks, load_manifest, read_pgm, read_ppm,
                     save_manifest, write_pgm, write_ppm)
from petl.synthetic import (BACKGROUND, EXPRESSIONS, generate_synthetic, nearest_template_classify, stroke_contrast)


# --- netpbm -----------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_pgm_round_trip(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("pgm") / "x.pgm"
    write_pgm(p, img)
    assert np.array_equal(read_pgm(p), img)


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (5, 7, 3)).astype(np.uint8)
    write_ppm(tmp_path / "x.ppm", img)
    assert np.array_equal(read_ppm(tmp_path / "x.ppm"), img)


def test_pgm_header_comments_and_strictness(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x05\x06")
    assert read_pgm(p).tolist() == [[5, 6]]
    p.write_bytes(b"P5\n2 1\n65535\n\x00\x05\x00\x06")
    with pytest.raises(ImageFormatError):
        read_pgm(p)
    p.write_bytes(b"P5\n2 2\n255\n\x05")
    with pytest.raises(ImageFormatError):
        read_pgm(p)
    p.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(ImageFormatError):
        read_pgm(p)
    with pytest.raises(FileNotFoundError):
        read_pgm(tmp_path / "missing.pgm")


# --- manifest ---------------------------------------------------------------------

def _dataset(tmp_path, n=3):
    rng = np.random.default_rng(1)
    (tmp_path / "img").mkdir(exist_ok=True)
    samples = []
    for i in range(n):
        write_pgm(tmp_path / "img" / f"{i}.pgm", rng.integers(0, 256, (8, 8)).astype(np.uint8))
        samples.append(Sample(f"img/{i}.pgm", f"S{i % 2}", ("Happy", "Sad", "Angry")[i % 3],
                              np.round(rng.uniform(0, 8, (68, 2)), 3)))
    return Dataset(samples, ("Angry", "Happy", "Sad"), tmp_path, created="fixed")


def test_manifest_round_trip_byte_identical(tmp_path):
    ds = _dataset(tmp_path)
    p = save_manifest(ds, tmp_path / "m.txt")
    loaded = load_manifest(p)
    assert loaded.classes == ds.classes and len(loaded) == 3
    np.testing.assert_array_equal(loaded.samples[2].landmarks, ds.samples[2].landmarks)
    q = save_manifest(loaded, tmp_path / "m2.txt")
    assert p.read_text() == q.read_text()


def _write_lines(tmp_path, body):
    p = tmp_path / "m.txt"
    p.write_text("#petl-manifest version=1 classes=Angry,Happy,Sad created=x\n" + body)
    return p


def test_manifest_field_count_error_has_line(tmp_path):
    _dataset(tmp_path)
    coords = ",".join(["1.0"] * 135)
    p = _write_lines(tmp_path, f"img/0.pgm,S0,Happy,{','.join(['1.0'] * 136)}\nimg/1.pgm,S1,Sad,{coords}\n")
    with pytest.raises(FieldCountError) as e:
        load_manifest(p)
    assert e.value.line == 3


def test_manifest_unknown_class_and_missing_file(tmp_path):
    _dataset(tmp_path)
    coords = ",".join(["1.0"] * 136)
    with pytest.raises(VocabularyError):
        load_manifest(_write_lines(tmp_path, f"img/0.pgm,S0,Bored,{coords}\n"))
    with pytest.raises(MissingFileError):
        load_manifest(_write_lines(tmp_path, f"img/9.pgm,S0,Happy,{coords}\n"))
    assert len(load_manifest(_write_lines(tmp_path, f"img/9.pgm,S0,Happy,{coords}\n"), check_files=False)) == 1
    with pytest.raises(ManifestError):
        load_manifest(_write_lines(tmp_path, f"img/0.pgm,S0,Happy,{coords[:-3]}abc\n"))


def test_manifest_header_checks(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("faces/a.pgm,S0,Happy\n")
    with pytest.raises(ManifestError):
        load_manifest(p)
    p.write_text("#petl-manifest version=2 classes=Happy created=x\n")
    with pytest.raises(ManifestError):
        load_manifest(p)
    p.write_text("#petl-manifest version=1 classes=Sad,Happy created=x\n")
    with pytest.raises(ManifestError):
        load_manifest(p)
    with pytest.raises(MissingFileError):
        load_manifest(tmp_path / "none.txt")


def test_dataset_subset_and_class_drop(tmp_path):
    ds = _dataset(tmp_path, n=6)
    assert {s.subject_id for s in ds.subset({"S0"}).samples} == {"S0"}
    assert len(ds.subset([0, 5])) == 2
    no_sad = ds.without_classes({"Sad"})
    assert no_sad.classes == ("Angry", "Happy") and all(s.expression != "Sad" for s in no_sad.samples)


def test_full_image_landmark_conversion():
    pts = np.array([[110.0, 60.0], [150.0, 90.0]])
    np.testing.assert_array_equal(convert_full_image_landmarks(pts, (100, 50, 160, 160)), [[10, 10], [50, 40]])


def test_vocabulary():
    assert CLASS_NAMES == ("Angry", "Contempt", "Disgust", "Fear", "Happy", "Neutral", "Sad", "Surprise")
    assert set(EXPRESSIONS) >= set(CLASS_NAMES)


# --- synthetic generator -------------------------------------------------------------------

@pytest.fixture(scope="module")
def synth():
    return generate_synthetic(12, 21, seed=7)


def test_generator_shape(synth):
    ds, images, geoms = synth
    assert len(ds) == 252 and len(images) == 252 and len(geoms) == 12
    assert images[0].shape == (160, 160) and images[0].dtype == np.uint8
    counts = np.bincount(ds.labels())
    assert counts.tolist() == [36] * 7


def test_generator_same_seed_byte_identical(tmp_path):
    a, _, _ = generate_synthetic(2, 7, seed=3, out_dir=tmp_path / "a")
    b, _, _ = generate_synthetic(2, 7, seed=3, out_dir=tmp_path / "b")
    assert (tmp_path / "a/manifest.txt").read_bytes() == (tmp_path / "b/manifest.txt").read_bytes()
    for s in a.samples:
        assert (tmp_path / "a" / s.image_path).read_bytes() == (tmp_path / "b" / s.image_path).read_bytes()
    assert len(load_manifest(tmp_path / "a/manifest.txt")) == 14


def test_landmarks_lie_on_strokes(synth):
    ds, images, _ = synth
    worst = min(stroke_contrast(img, s.landmarks).min() for s, img in zip(ds.samples, images))
    assert worst > BACKGROUND + 30


def test_nearest_template_oracle_is_perfect(synth):
    ds, _, geoms = synth
    hits = [nearest_template_classify(s.landmarks, geoms[s.subject_id]) == s.expression for s in ds.samples]
    assert all(hits)


def test_generator_rejects_single_subject():
    with pytest.raises(ValueError):
        generate_synthetic(1, 7, seed=0)


def test_eight_class_generation():
    ds, _, _ = generate_synthetic(2, 8, seed=1, classes=CLASS_NAMES)
    assert ds.classes == CLASS_NAMES and "Contempt" in {s.expression for s in ds.samples}
