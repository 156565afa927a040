"""Independent reference implementations used as test oracles.

These deliberately share no code with the package: plain loops, exact
rational arithmetic where rounding matters, and textbook formulas.
"""
from fractions import Fraction
from math import floor

import numpy as np


# --- CLAHE ---------------------------------------------------------------------

def clahe_reference(img, tiles=(8, 8), clip_limit=2.0):
    """Brute-force CLAHE on an 8-bit image, one pixel at a time.

    Tile ``t`` of ``T`` covers rows ``floor(t*n/T) .. floor((t+1)*n/T) - 1``.
    Each tile histogram is clipped at ``max(1, int(clip_limit * pixels / 256))``;
    the clipped excess is spread evenly over all 256 bins and the leftover
    ``r`` counts go one each to bins ``0, s, 2s, ...`` with ``s = max(1, 256 // r)``.
    The tile mapping is ``round(255 * cdf / pixels)``; single-valued tiles map
    with the identity. Pixels blend the four nearest tile-center mappings
    bilinearly, centers sitting at ``(t + 1/2) * n / T``, edges clamped.
    """
    img = [[int(v) for v in row] for row in np.asarray(img)]
    h, w = len(img), len(img[0])
    ty, tx = tiles

    def edges(n, t):
        return [(i * n) // t for i in range(t + 1)]

    ye, xe = edges(h, ty), edges(w, tx)
    maps = {}
    for r in range(ty):
        for c in range(tx):
            vals = [img[y][x] for y in range(ye[r], ye[r + 1]) for x in range(xe[c], xe[c + 1])]
            n = len(vals)
            if min(vals) == max(vals):
                maps[r, c] = list(range(256))
                continue
            hist = [0] * 256
            for v in vals:
                hist[v] += 1
            limit = max(int(clip_limit * n / 256), 1)
            excess = 0
            for b in range(256):
                if hist[b] > limit:
                    excess += hist[b] - limit
                    hist[b] = limit
            for b in range(256):
                hist[b] += excess // 256
            left = excess % 256
            if left:
                step = max(256 // left, 1)
                b = 0
                while left and b < 256:
                    hist[b] += 1
                    left -= 1
                    b += step
            lut, run = [], 0
            for b in range(256):
                run += hist[b]
                lut.append((2 * 255 * run + n) // (2 * n))  # round half up of 255*run/n
            maps[r, c] = lut

    def neighbours(pos, n, t):
        # pixel center in tile-center units, as the exact fraction u = num / (2n)
        u = Fraction((2 * pos + 1) * t - n, 2 * n)
        lo = floor(u)
        f = u - lo
        return min(max(lo, 0), t - 1), min(max(lo + 1, 0), t - 1), f

    rows = [neighbours(y, h, ty) for y in range(h)]
    cols = [neighbours(x, w, tx) for x in range(w)]
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        r0, r1, fy = rows[y]
        for x in range(w):
            c0, c1, fx = cols[x]
            v = img[y][x]
            # scale both weights to integers over the common denominator d
            d = fy.denominator * fx.denominator
            wy, wx = fy.numerator * fx.denominator, fx.numerator * fy.denominator
            top = (d - wx) * maps[r0, c0][v] + wx * maps[r0, c1][v]
            bot = (d - wx) * maps[r1, c0][v] + wx * maps[r1, c1][v]
            num = (d - wy) * top + wy * bot
            out[y, x] = (2 * num + d * d) // (2 * d * d)
    return out


# --- resizing --------------------------------------------------------------------

def bilinear_reference(img, out_w, out_h):
    """Half-pixel-center bilinear resampling evaluated per output pixel with exact fractions."""
    img = np.asarray(img)
    h, w = img.shape
    out = [[Fraction(0)] * out_w for _ in range(out_h)]
    for j in range(out_h):
        sy = min(max(Fraction(2 * j + 1, 2) * h / out_h - Fraction(1, 2), Fraction(0)), Fraction(h - 1))
        y0 = floor(sy)
        y1 = min(y0 + 1, h - 1)
        for i in range(out_w):
            sx = min(max(Fraction(2 * i + 1, 2) * w / out_w - Fraction(1, 2), Fraction(0)), Fraction(w - 1))
            x0 = floor(sx)
            x1 = min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[j][i] = ((1 - fy) * ((1 - fx) * int(img[y0, x0]) + fx * int(img[y0, x1]))
                         + fy * ((1 - fx) * int(img[y1, x0]) + fx * int(img[y1, x1])))
    return out


def round_half_up(values):
    """Exact fractions -> uint8 array, halves rounded up."""
    return np.array([[min(max(floor(v + Fraction(1, 2)), 0), 255) for v in row] for row in values], dtype=np.uint8)


# --- ensembles and layers ----------------------------------------------------------

def brute_force_ensemble(prob_vectors):
    """Sum probability vectors entry by entry in float64; first maximum wins."""
    c = len(prob_vectors[0])
    sums = [0.0] * c
    for p in prob_vectors:
        for k in range(c):
            sums[k] += float(p[k])
    best = 0
    for k in range(1, c):
        if sums[k] > sums[best]:
            best = k
    return best, sums


def conv2d_reference(x, w, b):
    """Direct same-padded stride-1 cross-correlation, NHWC."""
    n, h, wd, cin = x.shape
    k, _, _, cout = w.shape
    p = k // 2
    out = np.zeros((n, h, wd, cout))
    for i in range(h):
        for j in range(wd):
            for di in range(k):
                for dj in range(k):
                    y, xx = i + di - p, j + dj - p
                    if 0 <= y < h and 0 <= xx < wd:
                        out[:, i, j, :] += x[:, y, xx, :] @ w[di, dj]
    return out + b


def numeric_gradient(f, arr, step=1e-5):
    """Central differences of scalar ``f()`` with respect to every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr, dtype=np.float64)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return g


def rel_error(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    return 0.0 if scale == 0 else float(np.abs(a - b).max() / scale)
