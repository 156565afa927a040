"""Parametric synthetic faces with known landmarks and expressions.

Each subject gets its own face geometry; each expression deforms a neutral
68-point template in a class-specific way. Faces are drawn as bright
anti-aliased strokes and dots on a darker face blob, so landmark positions
can be recovered from pixels and the expression is a function of the
landmark configuration.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import CLASS_NAMES, SEVEN_CLASSES, Dataset, Sample, ensure_dir, save_manifest, write_pgm

SIZE = 160
JITTER_PX = 2.0
SUBJECT_VARIATION = 0.10
# per-sample head pose / crop placement: scale, in-plane rotation (deg), shift
POSE_SCALE = 0.12
POSE_ROTATION = 12.0
POSE_SHIFT = 0.12

BACKGROUND = 40.0
FACE_LEVEL = 85.0
STROKE_LEVEL = 215.0
DOT_LEVEL = 245.0

# per-expression deformation parameters (normalized crop units)
#   brow_raise, brow_inner (inner-end lift), eye_open (scale), mouth_width,
#   mouth_open, mouth_curve (corner lift), jaw_drop, nose_lift, smirk
EXPRESSIONS = {
    "Neutral":  dict(),
    "Happy":    dict(mouth_width=0.07, mouth_curve=0.07, eye_open=0.6, mouth_open=0.02),
    "Sad":      dict(mouth_curve=-0.06, brow_inner=0.05, mouth_width=-0.02),
    "Surprise": dict(brow_raise=0.06, eye_open=1.8, mouth_open=0.11, mouth_width=-0.04, jaw_drop=0.05),
    "Angry":    dict(brow_raise=-0.035, brow_inner=-0.06, eye_open=0.5, mouth_width=-0.04),
    "Fear":     dict(brow_raise=0.04, brow_inner=0.05, eye_open=1.6, mouth_open=0.05, mouth_width=0.06),
    "Disgust":  dict(nose_lift=0.035, brow_raise=-0.02, mouth_curve=-0.04, mouth_open=0.035,
                     eye_open=0.55, mouth_width=0.02),
    "Contempt": dict(smirk=0.06, mouth_width=0.02),
}


def _ellipse(cx, cy, rx, ry, angles_deg):
    a = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    return np.column_stack([cx + rx * np.cos(a), cy + ry * np.sin(a)])


def landmark_template(expression="Neutral", geometry=None, intensity=1.0):
    """68 x 2 landmarks in normalized [0, 1] crop coordinates for one face.

    ``geometry`` holds per-subject shape parameters (see :func:`subject_geometry`).
    """
    g = dict(cx=0.5, cy=0.45, face_w=0.29, face_h=0.36, eye_sep=0.13, eye_y=-0.07,
             mouth_y=0.18, brow_y=-0.145)
    g.update(geometry or {})
    e = {k: 0.0 for k in ("brow_raise", "brow_inner", "mouth_width", "mouth_open", "mouth_curve",
                          "jaw_drop", "nose_lift", "smirk")}
    e["eye_open"] = 1.0
    for k, v in EXPRESSIONS[expression].items():
        e[k] = 1.0 + (v - 1.0) * intensity if k == "eye_open" else v * intensity

    cx, cy, fw, fh = g["cx"], g["cy"], g["face_w"], g["face_h"]
    pts = np.zeros((68, 2))

    # jaw: lower half-ellipse from the left temple round the chin to the right
    jaw = _ellipse(cx, cy, fw, fh, np.linspace(190.0, -10.0, 17))
    jaw[:, 1] += e["jaw_drop"] * np.clip((jaw[:, 1] - cy) / fh, 0, 1)
    pts[0:17] = jaw

    # eyebrows: 17-21 image-left, 22-26 image-right; index 21/22 are the inner ends
    by = cy + g["brow_y"] - e["brow_raise"]
    es = g["eye_sep"]
    t = np.linspace(0.0, 1.0, 5)
    left_x = cx - es - 0.075 + 0.13 * t
    arch = -0.018 * np.sin(np.pi * t)
    lift = -e["brow_inner"] * t
    pts[17:22] = np.column_stack([left_x, by + arch + lift])
    pts[22:27] = np.column_stack([2 * cx - left_x[::-1], (by + arch + lift)[::-1]])

    # nose: bridge 27-30, base 31-35
    nl = e["nose_lift"]
    pts[27:31] = np.column_stack([np.full(4, cx), cy + np.linspace(-0.11, 0.05, 4) - nl * np.linspace(0, 1, 4)])
    base_y = cy + 0.09 - nl
    pts[31:36] = np.column_stack([cx + np.linspace(-0.055, 0.055, 5),
                                  base_y + np.array([-0.01, 0.005, 0.012, 0.005, -0.01])])

    # eyes: 36-41 image-left (outer corner 36, inner 39), 42-47 image-right (inner 42, outer 45)
    ey = cy + g["eye_y"]
    eh = 0.03 * e["eye_open"]
    ew = 0.055
    for base, ex, order in ((36, cx - es, (180, 240, 300, 0, 60, 120)),
                            (42, cx + es, (180, 240, 300, 0, 60, 120))):
        pts[base:base + 6] = _ellipse(ex, ey, ew, eh, order)

    # mouth: outer 48-59 (corners 48/54), inner 60-67 (corners 60/64)
    my = cy + g["mouth_y"] + 0.5 * e["jaw_drop"]
    mw = 0.085 + e["mouth_width"]
    op = e["mouth_open"]
    curve = e["mouth_curve"]
    smirk = e["smirk"]
    s = np.linspace(-1.0, 1.0, 7)
    corner_lift = -curve * s ** 2 - smirk * np.clip(s, 0, 1) ** 2
    upper = np.column_stack([cx + mw * s, my - 0.018 * np.cos(0.5 * np.pi * s) - 0.5 * op * (1 - s ** 2) + corner_lift])
    lower = np.column_stack([cx + mw * s, my + 0.025 * np.cos(0.5 * np.pi * s) + 0.5 * op * (1 - s ** 2) + corner_lift])
    pts[48:55] = upper
    pts[55:60] = lower[1:6][::-1]
    si = np.linspace(-1.0, 1.0, 5)
    ci = -curve * (0.7 * si) ** 2 - smirk * np.clip(0.7 * si, 0, 1) ** 2
    iu = np.column_stack([cx + 0.7 * mw * si, my - 0.004 - 0.45 * op * (1 - si ** 2) + ci])
    il = np.column_stack([cx + 0.7 * mw * si, my + 0.004 + 0.45 * op * (1 - si ** 2) + ci])
    pts[60:65] = iu
    pts[65:68] = il[1:4][::-1]
    return pts


def subject_geometry(rng, variation=SUBJECT_VARIATION):
    """Random per-subject face shape within +-``variation`` relative change."""
    def vary(v):
        return v * (1.0 + rng.uniform(-variation, variation))

    return dict(
        cx=0.5 + rng.uniform(-0.03, 0.03), cy=0.45 + rng.uniform(-0.03, 0.03),
        face_w=vary(0.29), face_h=vary(0.36), eye_sep=vary(0.13), eye_y=vary(-0.07),
        mouth_y=vary(0.18), brow_y=vary(-0.145),
    )


def random_pose(rng):
    return dict(scale=1.0 + rng.uniform(-POSE_SCALE, POSE_SCALE),
                angle=rng.uniform(-POSE_ROTATION, POSE_ROTATION),
                shift=rng.uniform(-POSE_SHIFT, POSE_SHIFT, size=2))


def apply_pose(points, pose):
    """Similarity transform of normalized landmarks about the crop center."""
    th = np.deg2rad(pose["angle"])
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    c = np.array([0.5, 0.5])
    return (points - c) @ rot.T * pose["scale"] + c + np.asarray(pose["shift"])


# --- rendering -------------------------------------------------------------

STROKES = [
    list(range(0, 17)), list(range(17, 22)), list(range(22, 27)), list(range(27, 31)),
    list(range(31, 36)), [30, 33],
    list(range(36, 42)) + [36], list(range(42, 48)) + [42],
    list(range(48, 60)) + [48], list(range(60, 68)) + [60],
]


def _segment_distance(px, py, a, b):
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.hypot(px - a[0], py - a[1])
    t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / L2, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))


def render_face(points_px, size=SIZE, rng=None, noise=3.0):
    """Draw a face from pixel landmarks into a size x size uint8 image."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    img = np.full((size, size), BACKGROUND)
    # face blob: ellipse through the jaw and up over the brows
    jaw = points_px[0:17]
    cx, cy = jaw[:, 0].mean(), points_px[27:31, 1].mean()
    rx = (jaw[:, 0].max() - jaw[:, 0].min()) / 2 + 2
    ry = max(jaw[:, 1].max() - cy, cy - points_px[17:27, 1].min() + 0.12 * size) + 2
    r = np.hypot((xx - cx) / rx, (yy - cy) / ry)
    img = np.maximum(img, BACKGROUND + (FACE_LEVEL - BACKGROUND) * np.clip((1.0 - r) * rx, 0, 1))
    width = 1.4 * size / SIZE
    dot = 2.0 * size / SIZE
    pad = int(np.ceil(max(width, dot))) + 2

    def window(lo, hi):
        r0 = max(int(np.floor(lo[1])) - pad, 0)
        c0 = max(int(np.floor(lo[0])) - pad, 0)
        r1 = min(int(np.ceil(hi[1])) + pad, size)
        c1 = min(int(np.ceil(hi[0])) + pad, size)
        return slice(r0, max(r1, r0)), slice(c0, max(c1, c0))

    for stroke in STROKES:
        for a, b in zip(stroke[:-1], stroke[1:]):
            pa, pb = points_px[a], points_px[b]
            win = window(np.minimum(pa, pb), np.maximum(pa, pb))
            d = _segment_distance(xx[win], yy[win], pa, pb)
            img[win] = np.maximum(img[win], STROKE_LEVEL * np.clip(width + 0.5 - d, 0, 1))
    for p in points_px:
        win = window(p, p)
        d = np.hypot(xx[win] - p[0], yy[win] - p[1])
        img[win] = np.maximum(img[win], DOT_LEVEL * np.clip(dot + 0.5 - d, 0, 1))
    if rng is not None and noise:
        img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def make_sample(rng, geometry, expression, size=SIZE, jitter_px=JITTER_PX):
    """One rendered face: returns (image, landmarks in pixels)."""
    intensity = rng.uniform(0.75, 1.0)
    pts = apply_pose(landmark_template(expression, geometry, intensity), random_pose(rng)) * size
    pts = pts + rng.normal(0.0, jitter_px * size / SIZE, pts.shape)
    pts = np.round(pts, 3)
    return render_face(pts, size, rng), pts


def generate_synthetic(n_subjects, per_subject, seed, out_dir=None, classes=SEVEN_CLASSES, size=SIZE):
    """Render a labelled dataset; writes PGMs and ``manifest.txt`` when ``out_dir`` is given.

    Expressions cycle through ``classes`` within each subject, so
    ``per_subject`` a multiple of the class count gives balanced subjects.
    Returns ``(dataset, images, geometries)``: images in sample order and the
    per-subject face geometry keyed by subject id.
    """
    if n_subjects < 2:
        raise ValueError("need at least 2 subjects")
    classes = tuple(c for c in CLASS_NAMES if c in set(classes))
    rng = np.random.default_rng(seed)
    samples, images, geometries = [], [], {}
    for s in range(n_subjects):
        sid = f"S{s + 1:03d}"
        geom = geometries[sid] = subject_geometry(rng)
        for k in range(per_subject):
            expr = classes[k % len(classes)]
            img, pts = make_sample(rng, geom, expr, size)
            samples.append(Sample(f"faces/{sid}_{k:02d}.pgm", sid, expr, pts))
            images.append(img)
    ds = Dataset(samples, classes, Path(out_dir) if out_dir else Path("."), created=f"seed-{seed}")
    if out_dir is not None:
        out = ensure_dir(out_dir)
        ensure_dir(out / "faces")
        for smp, img in zip(samples, images):
            write_pgm(out / smp.image_path, img)
        save_manifest(ds, out / "manifest.txt")
    return ds, images, geometries


# --- oracles ---------------------------------------------------------------

def _align(points, reference):
    """Least-squares similarity (rotation, scale, shift) of ``points`` onto ``reference``."""
    p = points - points.mean(axis=0)
    r = reference - reference.mean(axis=0)
    u, sv, vt = np.linalg.svd(p.T @ r)
    d = np.sign(np.linalg.det(u @ vt))
    rot = u @ np.diag([1.0, d]) @ vt
    scale = (sv * np.array([1.0, d])).sum() / (p * p).sum()
    return p @ rot * scale + reference.mean(axis=0)


def nearest_template_classify(points_px, geometry=None, classes=SEVEN_CLASSES, size=SIZE):
    """Classify true landmarks by the closest expression template of the subject's face.

    Each template is similarity-aligned to the sample (which removes the
    per-sample pose) and expression intensity is scanned over the generator's
    range; the class with the smallest mean residual wins.
    """
    pts = np.asarray(points_px, dtype=np.float64) / size
    best, best_d = None, np.inf
    for c in classes:
        for intensity in np.linspace(0.75, 1.0, 6):
            tpl = landmark_template(c, geometry, intensity)
            d = np.abs(_align(tpl, pts) - pts).mean()
            if d < best_d:
                best, best_d = c, d
    return best


def stroke_contrast(img, points_px, radius=2.0):
    """Mean intensity within ``radius`` px of each landmark (one value per landmark)."""
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    out = []
    for p in points_px:
        m = np.hypot(xx - p[0], yy - p[1]) <= radius
        out.append(float(img[m].mean()))
    return np.array(out)
