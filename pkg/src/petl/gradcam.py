"""Gradient-weighted class activation maps and their overlays."""
from __future__ import annotations

import numpy as np

from . import ops
from .preprocess import as_gray, bilinear_resize_float

OVERLAY_ALPHA = 0.4


def _check_class(net, class_index):
    c = net.spec.num_classes
    if not 0 <= int(class_index) < c:
        raise IndexError(f"class index {class_index} out of range for {c} classes")
    return int(class_index)


def feature_maps(net, x):
    """Activations entering global average pooling (the last conv block's output), N x u x v x K."""
    a, _ = net.extractor.forward(np.asarray(x, dtype=net.extractor.layers[0].kernel.data.dtype),
                                 train=False, stop=net.gap_index())
    return a


def class_score(net, activations, class_index):
    """Pre-softmax score y^c computed from the feature maps, one value per sample."""
    f, _ = ops.global_avg_pool_forward(activations)
    logits, _ = net.classifier.forward(f)
    return logits[:, class_index]


def activation_gradients(net, activations, class_index):
    """d y^c / d A for every feature-map entry (same shape as ``activations``)."""
    class_index = _check_class(net, class_index)
    f, shape = ops.global_avg_pool_forward(activations)
    logits, caches = net.classifier.forward(f)
    seed = np.zeros_like(logits)
    seed[:, class_index] = 1.0
    df, _ = net.classifier.backward(seed, caches)
    return ops.global_avg_pool_backward(df, shape)


def importance_from_gradients(grads):
    """Spatial mean of the gradients: one weight per channel (N x K)."""
    g = np.asarray(grads)
    return g.mean(axis=(-3, -2))


def combine_maps(alpha, activations):
    """relu of the alpha-weighted channel sum; ``alpha`` is N x K, ``activations`` N x u x v x K."""
    alpha = np.asarray(alpha)
    a = np.asarray(activations)
    return np.maximum(np.einsum("nijk,nk->nij", a, alpha), 0.0)


def neuron_importance(net, x, class_index):
    """Per-channel weights alpha_k for class ``class_index`` (N x K, or K for one crop)."""
    single = np.asarray(x).ndim == 3
    a = feature_maps(net, x[None] if single else x)
    alpha = importance_from_gradients(activation_gradients(net, a, class_index))
    return alpha[0] if single else alpha


def gradcam_map(net, x, class_index):
    """Class activation map at feature-map resolution (u x v, or N x u x v)."""
    single = np.asarray(x).ndim == 3
    a = feature_maps(net, x[None] if single else x)
    alpha = importance_from_gradients(activation_gradients(net, a, class_index))
    m = combine_maps(alpha, a)
    return m[0] if single else m


# --- presentation ----------------------------------------------------------

def normalize_map(m):
    """Scale by the map's maximum; an all-zero map stays zero."""
    m = np.asarray(m, dtype=np.float64)
    peak = m.max() if m.size else 0.0
    return m / peak if peak > 0 else np.zeros_like(m)


def union_maps(maps):
    """Element-wise maximum of the per-map max-normalized heatmaps."""
    maps = [normalize_map(m) for m in maps]
    if not maps:
        raise ValueError("no maps to combine")
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"maps differ in shape: {sorted(shapes)}")
    return np.maximum.reduce(maps)


def jet(v):
    """Piecewise-linear blue -> green -> red ramp; ``v`` in [0, 1] -> float RGB in [0, 1]."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    r = np.clip(2.0 * v - 1.0, 0.0, 1.0)
    g = 1.0 - np.abs(2.0 * v - 1.0)
    b = np.clip(1.0 - 2.0 * v, 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def _to_u8(x):
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def upsample_map(m, width, height):
    return bilinear_resize_float(normalize_map(m), width, height)


def heatmap_image(m, width, height):
    """8-bit gray rendering of a normalized, upsampled map."""
    return _to_u8(255.0 * upsample_map(m, width, height))


def overlay(m, crop, alpha=OVERLAY_ALPHA):
    """Blend the colored heatmap over a gray crop: ``alpha * heat + (1 - alpha) * gray``.

    An all-zero map leaves the crop untouched (gray replicated to RGB).
    """
    gray = as_gray(crop).astype(np.float64)
    h, w = gray.shape
    rgb = np.repeat(gray[..., None], 3, axis=-1)
    if not np.any(np.asarray(m) > 0):
        return _to_u8(rgb)
    heat = 255.0 * jet(upsample_map(m, w, h))
    return _to_u8(alpha * heat + (1.0 - alpha) * rgb)


def ensemble_gradcam(nets, x, class_index):
    """Per-network maps for one crop and their union."""
    maps = [gradcam_map(n, x, class_index) for n in nets]
    return maps, union_maps(maps)
