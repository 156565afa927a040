"""Contrast enhancement, resizing, channel replication and normalization.

Gray images are 2-d ``uint8`` arrays indexed ``[row, col]``. Landmark
coordinates are continuous ``(x, y)`` with pixel ``(r, c)`` covering
``[c, c+1) x [r, r+1)``, so a W-wide crop spans ``0..W``.
"""
from __future__ import annotations

import numpy as np

from .errors import LandmarkBoundsError
from .tensor import default_dtype

LANDMARK_TOLERANCE_PX = 2.0


def as_gray(img):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-d gray image, got shape {img.shape}")
    if img.dtype != np.uint8:
        if img.size and (img.min() < 0 or img.max() > 255):
            raise ValueError("gray image values must lie in [0, 255]")
        img = np.rint(img).astype(np.uint8)
    return img


def replicate_channels(img):
    """H x W gray -> H x W x 3 with three identical channels."""
    img = np.asarray(img)
    return np.repeat(img[..., None], 3, axis=-1)


# --- resizing --------------------------------------------------------------

def _axis_weights(n_in, n_out):
    # half-pixel centers, edge-clamped
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def bilinear_resize_float(img, out_w, out_h):
    """Bilinear resampling of a float array (H x W or H x W x C) with half-pixel centers."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    if img.ndim == 3:
        fy, fx = fy[:, None, None], fx[None, :, None]
    else:
        fy, fx = fy[:, None], fx[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _axis_weights_int(n_in, n_out):
    # source positions as integers over the common denominator 2 * n_out
    d = 2 * n_out
    num = np.clip((2 * np.arange(n_out) + 1) * n_in - n_out, 0, (n_in - 1) * d)
    lo = num // d
    return lo, np.minimum(lo + 1, n_in - 1), num - lo * d, d


def bilinear_resize(img, out_w, out_h):
    """Bilinear resize of an 8-bit gray image, rounded half up.

    Weights are exact rationals, so values that land on .5 round the same way
    on every platform.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    img = as_gray(img).astype(np.int64)
    y0, y1, fy, dy = _axis_weights_int(img.shape[0], out_h)
    x0, x1, fx, dx = _axis_weights_int(img.shape[1], out_w)
    fy, fx = fy[:, None], fx[None, :]
    top = img[y0][:, x0] * (dx - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (dx - fx) + img[y1][:, x1] * fx
    total = top * (dy - fy) + bot * fy
    den = dx * dy
    return np.clip((2 * total + den) // (2 * den), 0, 255).astype(np.uint8)


def resize_to(img, size):
    """Square resize for the network input.

    Large reductions go through repeated exact halvings first (each a bilinear
    step that averages 2x2 blocks) so thin strokes are not skipped over.
    """
    img = as_gray(img)
    h, w = img.shape
    while h >= 2 * size and w >= 2 * size and h % 2 == 0 and w % 2 == 0:
        img = bilinear_resize(img, w // 2, h // 2)
        h, w = img.shape
    if (h, w) != (size, size):
        img = bilinear_resize(img, size, size)
    return img


# --- contrast enhancement --------------------------------------------------

def _tile_edges(n, tiles):
    return [(t * n) // tiles for t in range(tiles + 1)]


def _clipped_hist(tile, clip_limit):
    hist = np.bincount(tile.ravel(), minlength=256).astype(np.int64)
    n = tile.size
    clip = max(int(clip_limit * n / 256), 1)
    excess = int(np.maximum(hist - clip, 0).sum())
    hist = np.minimum(hist, clip)
    hist += excess // 256
    residual = excess % 256
    if residual:
        stride = max(256 // residual, 1)
        for i in range(0, 256, stride):
            if residual == 0:
                break
            hist[i] += 1
            residual -= 1
    return hist


def clahe_tile_luts(img, tiles=(8, 8), clip_limit=2.0):
    """Per-tile 256-entry lookup tables, shape (tiles_y, tiles_x, 256).

    A tile containing a single gray level maps with the identity table.
    """
    img = as_gray(img)
    ty, tx = tiles
    h, w = img.shape
    if h < ty or w < tx:
        raise ValueError(f"image {w}x{h} is smaller than the {tx}x{ty} tile grid")
    ye, xe = _tile_edges(h, ty), _tile_edges(w, tx)
    identity = np.arange(256, dtype=np.int64)
    luts = np.empty((ty, tx, 256), dtype=np.int64)
    for r in range(ty):
        for c in range(tx):
            tile = img[ye[r]:ye[r + 1], xe[c]:xe[c + 1]]
            if tile.min() == tile.max():
                luts[r, c] = identity
                continue
            n = tile.size
            cdf = np.cumsum(_clipped_hist(tile, clip_limit))
            luts[r, c] = (2 * 255 * cdf + n) // (2 * n)
    return luts


def _interp_coords(n, tiles):
    # tile-center coordinate of each pixel as an exact fraction num/den
    den = 2 * n
    num = (2 * np.arange(n) + 1) * tiles - n
    lo = np.floor_divide(num, den)
    frac = num - lo * den
    i0 = np.clip(lo, 0, tiles - 1)
    i1 = np.clip(lo + 1, 0, tiles - 1)
    return i0, i1, frac, den


def clahe(img, tiles=(8, 8), clip_limit=2.0):
    """Contrast-limited adaptive histogram equalization.

    Histograms are clipped at ``clip_limit * tile_pixels / 256`` with the
    excess spread over all bins, and each pixel blends the four nearest tile
    mappings bilinearly. Blending uses exact integer arithmetic with
    round-half-up, so results do not depend on evaluation order.
    """
    img = as_gray(img)
    luts = clahe_tile_luts(img, tiles, clip_limit)
    h, w = img.shape
    r0, r1, fy, dy = _interp_coords(h, tiles[0])
    c0, c1, fx, dx = _interp_coords(w, tiles[1])
    v = img.astype(np.intp)
    R0, R1 = r0[:, None], r1[:, None]
    C0, C1 = c0[None, :], c1[None, :]
    FY, FX = fy[:, None], fx[None, :]
    top = (dx - FX) * luts[R0, C0, v] + FX * luts[R0, C1, v]
    bot = (dx - FX) * luts[R1, C0, v] + FX * luts[R1, C1, v]
    num = (dy - FY) * top + FY * bot
    d = dx * dy
    return ((2 * num + d) // (2 * d)).astype(np.uint8)


def hist_equalize(img):
    """Global histogram equalization; single-valued images are returned unchanged."""
    img = as_gray(img)
    if img.size == 0 or img.min() == img.max():
        return img.copy()
    cdf = np.cumsum(np.bincount(img.ravel(), minlength=256)).astype(np.int64)
    cmin = cdf[img.min()]
    n = img.size
    lut = (2 * 255 * (cdf - cmin) + (n - cmin)) // (2 * (n - cmin))
    return np.clip(lut, 0, 255).astype(np.uint8)[img]


def contrast_stretch(img, lo_pct=2.0, hi_pct=98.0):
    """Linear map of the [lo_pct, hi_pct] percentile range onto [0, 255], clamped."""
    img = as_gray(img)
    lo, hi = np.percentile(img, [lo_pct, hi_pct])
    if hi <= lo:
        return img.copy()
    out = (img.astype(np.float64) - lo) * (255.0 / (hi - lo))
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


ENHANCERS = {
    "clahe": clahe,
    "he": hist_equalize,
    "cs": contrast_stretch,
    "none": lambda img: as_gray(img).copy(),
}


def enhance(img, method="clahe"):
    try:
        return ENHANCERS[method](img)
    except KeyError:
        raise ValueError(f"unknown enhancement {method!r}; choose from {sorted(ENHANCERS)}") from None


# --- normalization ---------------------------------------------------------

def normalize_input(t):
    """[0, 255] -> [-1, 1]."""
    return np.asarray(t, dtype=default_dtype()) / default_dtype()(127.5) - 1


def denormalize_input(t):
    return (np.asarray(t, dtype=default_dtype()) + 1) * default_dtype()(127.5)


def clamp_landmarks(points, crop_w, crop_h, tol=LANDMARK_TOLERANCE_PX):
    """Clamp pixel landmarks into the crop; points more than ``tol`` px outside raise."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"landmarks must be an n x 2 array, got {pts.shape}")
    bad = ((pts[:, 0] < -tol) | (pts[:, 0] > crop_w + tol) |
           (pts[:, 1] < -tol) | (pts[:, 1] > crop_h + tol))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise LandmarkBoundsError(i, pts[i], crop_w, crop_h)
    return np.column_stack([np.clip(pts[:, 0], 0, crop_w), np.clip(pts[:, 1], 0, crop_h)])


def normalize_landmarks(points, crop_w, crop_h):
    """Pixel landmarks -> [0, 1] fractions of the crop size."""
    pts = clamp_landmarks(points, crop_w, crop_h)
    return pts / np.array([crop_w, crop_h], dtype=np.float64)


def prepare_input(gray, size=160, method="clahe"):
    """Full input pipeline for one crop: enhance, resize, replicate, normalize."""
    img = resize_to(enhance(gray, method), size)
    return normalize_input(replicate_channels(img))
