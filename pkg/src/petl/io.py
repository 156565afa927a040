"""Netpbm image IO and the dataset manifest format.

Manifest layout::

    #petl-manifest version=1 classes=Angry,Disgust,... created=2026-01-01T00:00:00
    faces/S001_00.pgm,S001,Happy,x0,y0,x1,y1,...,x67,y67

Image paths are relative to the manifest's directory; landmarks are crop
pixel coordinates.
"""
from __future__ import annotations

import datetime as _dt
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FieldCountError, ImageFormatError, ManifestError, MissingFileError, VocabularyError

CLASS_NAMES = ("Angry", "Contempt", "Disgust", "Fear", "Happy", "Neutral", "Sad", "Surprise")
SEVEN_CLASSES = tuple(c for c in CLASS_NAMES if c != "Contempt")
MANIFEST_VERSION = 1
N_LANDMARKS = 68


# --- netpbm ----------------------------------------------------------------

def _read_header(buf, n_fields):
    """Parse whitespace/comment separated header tokens; returns (tokens, payload offset)."""
    tokens = []
    i = 0
    while len(tokens) < n_fields:
        while i < len(buf) and buf[i:i + 1].isspace():
            i += 1
        if i >= len(buf):
            raise ImageFormatError("truncated netpbm header")
        if buf[i:i + 1] == b"#":
            while i < len(buf) and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j:j + 1].isspace() and buf[j:j + 1] != b"#":
            j += 1
        tokens.append(buf[i:j])
        i = j
    # exactly one whitespace byte separates the header from binary data
    return tokens, i + 1


def _read_netpbm(path, magic, channels):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image: {path}")
    buf = path.read_bytes()
    tokens, off = _read_header(buf, 4)
    if tokens[0] != magic:
        raise ImageFormatError(f"{path}: expected {magic.decode()} image, found {tokens[0][:2]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError(f"{path}: malformed header") from None
    if maxval != 255:
        raise ImageFormatError(f"{path}: maxval must be 255, got {maxval}")
    need = w * h * channels
    data = buf[off:off + need]
    if len(data) != need:
        raise ImageFormatError(f"{path}: expected {need} pixel bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype=np.uint8)
    return arr.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_pgm(path):
    """Binary (P5) 8-bit PGM -> H x W uint8."""
    return _read_netpbm(path, b"P5", 1)


def read_ppm(path):
    """Binary (P6) 8-bit PPM -> H x W x 3 uint8."""
    return _read_netpbm(path, b"P6", 3)


def write_pgm(path, img):
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ImageFormatError(f"PGM needs a 2-d uint8 array, got {img.dtype} {img.shape}")
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def write_ppm(path, img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ImageFormatError(f"PPM needs an H x W x 3 uint8 array, got {img.dtype} {img.shape}")
    h, w, _ = img.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + img.tobytes())


# --- manifest --------------------------------------------------------------

@dataclass
class Sample:
    image_path: str
    subject_id: str
    expression: str
    landmarks: np.ndarray  # 68 x 2, crop pixel coordinates

    def load_image(self, root="."):
        return read_pgm(Path(root) / self.image_path)


@dataclass
class Dataset:
    samples: list
    classes: tuple
    root: Path = field(default_factory=Path)
    created: str = ""

    def __len__(self):
        return len(self.samples)

    def labels(self):
        index = {c: i for i, c in enumerate(self.classes)}
        return np.array([index[s.expression] for s in self.samples], dtype=np.int64)

    def subjects(self):
        return [s.subject_id for s in self.samples]

    def subset(self, keep):
        """Samples whose index (int sequence) or subject id (set of str) is in ``keep``."""
        keep = set(keep)
        if keep and all(isinstance(k, str) for k in keep):
            chosen = [s for s in self.samples if s.subject_id in keep]
        else:
            chosen = [s for i, s in enumerate(self.samples) if i in keep]
        return Dataset(chosen, self.classes, self.root, self.created)

    def without_classes(self, names):
        names = set(names)
        kept = [s for s in self.samples if s.expression not in names]
        return Dataset(kept, tuple(c for c in self.classes if c not in names), self.root, self.created)


def _canonical(classes):
    unknown = [c for c in classes if c not in CLASS_NAMES]
    if unknown:
        raise VocabularyError(f"unknown expression class(es): {', '.join(unknown)}")
    return tuple(c for c in CLASS_NAMES if c in set(classes))


_HEADER = re.compile(r"^#petl-manifest\s+(.*)$")


def _fmt(v):
    return repr(float(v))


def save_manifest(dataset, path, created=None):
    path = Path(path)
    created = created or dataset.created or _dt.datetime.now().replace(microsecond=0).isoformat()
    lines = [f"#petl-manifest version={MANIFEST_VERSION} classes={','.join(dataset.classes)} created={created}"]
    for s in dataset.samples:
        coords = ",".join(_fmt(v) for v in np.asarray(s.landmarks, dtype=np.float64).ravel())
        lines.append(f"{s.image_path},{s.subject_id},{s.expression},{coords}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_manifest(path, check_files=True):
    """Strictly parse a manifest; every error carries its 1-based line number."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"manifest not found: {path}")
    root = path.parent
    lines = path.read_text().splitlines()
    if not lines:
        raise ManifestError("empty manifest", line=1)
    m = _HEADER.match(lines[0])
    if not m:
        raise ManifestError("missing '#petl-manifest' header", line=1)
    meta = dict(kv.split("=", 1) for kv in m.group(1).split() if "=" in kv)
    if meta.get("version") != str(MANIFEST_VERSION):
        raise ManifestError(f"unsupported manifest version {meta.get('version')!r}", line=1)
    try:
        classes = _canonical(meta.get("classes", "").split(","))
    except VocabularyError as e:
        raise VocabularyError(str(e), line=1) from None
    if tuple(meta["classes"].split(",")) != classes:
        raise ManifestError("class vocabulary must be listed in canonical order", line=1)

    samples = []
    n_fields = 3 + 2 * N_LANDMARKS
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise ManifestError("blank line", line=lineno)
        fields = line.split(",")
        if len(fields) != n_fields:
            raise FieldCountError(
                f"expected {n_fields} fields (path, subject, expression, {2 * N_LANDMARKS} coordinates), "
                f"found {len(fields)}", line=lineno)
        image_path, subject, expr = (f.strip() for f in fields[:3])
        if expr not in CLASS_NAMES:
            raise VocabularyError(f"unknown expression {expr!r}", line=lineno)
        if expr not in classes:
            raise VocabularyError(f"expression {expr!r} not in header vocabulary", line=lineno)
        try:
            coords = np.array([float(v) for v in fields[3:]], dtype=np.float64)
        except ValueError:
            raise ManifestError("non-numeric landmark coordinate", line=lineno) from None
        if check_files and not (root / image_path).exists():
            raise MissingFileError(f"image not found: {image_path}", line=lineno)
        samples.append(Sample(image_path, subject, expr, coords.reshape(N_LANDMARKS, 2)))
    return Dataset(samples, classes, root, meta.get("created", ""))


def convert_full_image_landmarks(points, bbox):
    """Shift full-image landmarks into the coordinate frame of a detector crop ``(x, y, w, h)``."""
    x, y, _, _ = bbox
    return np.asarray(points, dtype=np.float64) - np.array([x, y], dtype=np.float64)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
