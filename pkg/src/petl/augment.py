"""Joint geometric augmentation of face crops and their 68 landmarks."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .preprocess import LANDMARK_TOLERANCE_PX

ROTATION_MAX = 15.0
SHEAR_MAX = 10.0
TRANSLATE_MAX = 0.1
FLIP_PROB = 0.5
MAX_RETRIES = 3


def _mirror_pairs():
    pairs = [(i, 16 - i) for i in range(8)]                      # jaw
    pairs += [(17 + i, 26 - i) for i in range(5)]                # eyebrows
    pairs += [(31, 35), (32, 34)]                                # nostrils
    pairs += [(36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46)]
    pairs += [(48, 54), (49, 53), (50, 52), (55, 59), (56, 58)]  # outer lip
    pairs += [(60, 64), (61, 63), (65, 67)]                      # inner lip
    return pairs


def symmetry_permutation():
    """Index map sending each of the 68 points to its left/right mirror partner."""
    perm = np.arange(68)
    for a, b in _mirror_pairs():
        perm[a], perm[b] = b, a
    return perm


@dataclass(frozen=True)
class AffineSpec:
    flip: bool = False
    rotation_deg: float = 0.0
    shear_deg: float = 0.0
    translate_frac: tuple = (0.0, 0.0)

    def check_bounds(self, rotation_max=ROTATION_MAX, shear_max=SHEAR_MAX, translate_max=TRANSLATE_MAX):
        if abs(self.rotation_deg) > rotation_max:
            raise ValueError(f"rotation {self.rotation_deg} exceeds {rotation_max} degrees")
        if abs(self.shear_deg) > shear_max:
            raise ValueError(f"shear {self.shear_deg} exceeds {shear_max} degrees")
        if max(abs(t) for t in self.translate_frac) > translate_max:
            raise ValueError(f"translation {self.translate_frac} exceeds {translate_max}")

    def milder(self):
        """Same transform at half the magnitude (flip kept)."""
        dx, dy = self.translate_frac
        return replace(self, rotation_deg=self.rotation_deg / 2, shear_deg=self.shear_deg / 2,
                       translate_frac=(dx / 2, dy / 2))

    @property
    def is_identity(self):
        return (not self.flip and self.rotation_deg == 0 and self.shear_deg == 0
                and tuple(self.translate_frac) == (0.0, 0.0))


def sample_spec(rng, rotation_max=ROTATION_MAX, shear_max=SHEAR_MAX, translate_max=TRANSLATE_MAX,
                flip_prob=FLIP_PROB):
    return AffineSpec(
        flip=bool(rng.random() < flip_prob),
        rotation_deg=float(rng.uniform(-rotation_max, rotation_max)),
        shear_deg=float(rng.uniform(-shear_max, shear_max)),
        translate_frac=(float(rng.uniform(-translate_max, translate_max)),
                        float(rng.uniform(-translate_max, translate_max))),
    )


def affine_matrix(spec, width, height):
    """3x3 forward map (crop coordinates -> augmented coordinates) about the crop center."""
    cx, cy = width / 2.0, height / 2.0
    center = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    flip = np.diag([-1.0 if spec.flip else 1.0, 1.0, 1.0])
    th = np.deg2rad(spec.rotation_deg)
    rot = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    shear = np.array([[1, np.tan(np.deg2rad(spec.shear_deg)), 0], [0, 1, 0], [0, 0, 1]])
    dx, dy = spec.translate_frac
    back = np.array([[1, 0, cx + dx * width], [0, 1, cy + dy * height], [0, 0, 1]])
    return back @ shear @ rot @ flip @ center


def transform_points(points, matrix):
    pts = np.asarray(points, dtype=np.float64)
    return pts @ matrix[:2, :2].T + matrix[:2, 2]


def warp_image(img, matrix):
    """Resample ``img`` (H x W or H x W x C) under ``matrix`` with bilinear sampling and edge replication."""
    src = np.asarray(img)
    h, w = src.shape[:2]
    inv = np.linalg.inv(matrix)
    yy, xx = np.mgrid[0:h, 0:w]
    pts = np.stack([xx.ravel() + 0.5, yy.ravel() + 0.5], axis=1)
    sp = transform_points(pts, inv) - 0.5
    sx = np.clip(sp[:, 0], 0, w - 1)
    sy = np.clip(sp[:, 1], 0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx, fy = sx - x0, sy - y0
    f = src.astype(np.float64)
    if f.ndim == 3:
        fx, fy = fx[:, None], fy[:, None]
    out = ((f[y0, x0] * (1 - fx) + f[y0, x1] * fx) * (1 - fy)
           + (f[y1, x0] * (1 - fx) + f[y1, x1] * fx) * fy)
    out = out.reshape(src.shape)
    if src.dtype == np.uint8:
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out.astype(src.dtype)


def _in_bounds(points, width, height, tol=LANDMARK_TOLERANCE_PX):
    return bool(np.all((points[:, 0] >= -tol) & (points[:, 0] <= width + tol)
                       & (points[:, 1] >= -tol) & (points[:, 1] <= height + tol)))


def apply_affine(img, landmarks, spec, max_retries=MAX_RETRIES):
    """Warp a crop and move its landmarks with the same matrix.

    A horizontal flip also reorders landmarks through
    :func:`symmetry_permutation` so index 36 is still the image-left eye
    corner. ``landmarks`` may be None for image-only augmentation. If any
    landmark ends up more than 2 px outside the crop, the
    transform is halved and retried; after ``max_retries`` failures the
    inputs come back unchanged. Returns ``(image, landmarks, spec_used)``.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    if landmarks is None:
        if spec.is_identity:
            return img.copy(), None, spec
        return warp_image(img, affine_matrix(spec, w, h)), None, spec
    pts = np.asarray(landmarks, dtype=np.float64)
    for _ in range(max_retries + 1):
        if spec.is_identity:
            return img.copy(), pts.copy(), spec
        m = affine_matrix(spec, w, h)
        moved = transform_points(pts, m)
        if spec.flip:
            moved = moved[symmetry_permutation()]
        if _in_bounds(moved, w, h):
            return warp_image(img, m), moved, spec
        spec = spec.milder()
    return img.copy(), pts.copy(), AffineSpec()
