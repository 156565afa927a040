"""Forward/backward kernels for the layers and losses the networks use.

All image tensors are NHWC. Each ``*_forward`` returns ``(out, cache)`` and the
matching ``*_backward`` consumes ``(dout, cache)``. Kernels work in whatever
float precision their inputs carry.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError


def _check_ndim(x, ndim, what):
    if x.ndim != ndim:
        raise DimensionError(f"{what} expects a {ndim}-d array, got shape {x.shape}", axis="ndim")


# --- convolution -----------------------------------------------------------

def _taps(k, wp):
    """Flat offsets of the k x k kernel taps in a padded image whose rows are ``wp`` long."""
    return [(i, j, i * wp + j) for i in range(k) for j in range(k)]


def _im2col(x, k):
    n, h, w, c = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    cols = np.empty((n, h, w, k, k, c), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[:, i:i + h, j:j + w, :]
    return cols.reshape(n * h * w, k * k * c)


def _conv_cols_forward(x, w, b):
    n, h, wd, _ = x.shape
    cout = w.shape[3]
    cols = _im2col(x, w.shape[0])
    out = cols @ w.reshape(-1, cout)
    out += b
    return out.reshape(n, h, wd, cout), ("cols", cols, x.shape, w)


def _conv_cols_backward(dout, cache, need_dx=True):
    _, cols, xshape, w = cache
    k, _, cin, cout = w.shape
    n, h, wd, _ = xshape
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(-1, cout).T).reshape(n, h, wd, k, k, cin)
    p = k // 2
    dxp = np.zeros((n, h + 2 * p, wd + 2 * p, cin), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + h, j:j + wd, :] += dcols[:, :, :, i, j, :]
    return dxp[:, p:p + h, p:p + wd, :], dw, db


def _conv_taps_forward(x, w, b):
    # the padded batch viewed as one long pixel list: every kernel tap is a
    # contiguous shifted slice of it, so no unfolded copy of the input is made
    kh, _, cin, cout = w.shape
    n, h, wd, _ = x.shape
    p = kh // 2
    hp, wp = h + 2 * p, wd + 2 * p
    flat = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))).reshape(-1, cin)
    m = len(flat) - (kh - 1) * (wp + 1)
    acc = np.zeros((len(flat), cout), dtype=np.result_type(x, w))
    for i, j, off in _taps(kh, wp):
        acc[:m] += flat[off:off + m] @ w[i, j]
    out = acc.reshape(n, hp, wp, cout)[:, :h, :wd, :] + b
    return out, ("taps", flat, x.shape, w)


def _conv_taps_backward(dout, cache, need_dx=True):
    _, flat, xshape, w = cache
    k, _, cin, cout = w.shape
    n, h, wd, _ = xshape
    p = k // 2
    hp, wp = h + 2 * p, wd + 2 * p
    m = len(flat) - (k - 1) * (wp + 1)
    grid = np.zeros((n, hp, wp, cout), dtype=dout.dtype)
    grid[:, :h, :wd, :] = dout
    d2 = grid.reshape(-1, cout)[:m]
    dw = np.empty(w.shape, dtype=np.result_type(flat, dout))
    for i, j, off in _taps(k, wp):
        dw[i, j] = flat[off:off + m].T @ d2
    db = dout.reshape(-1, cout).sum(axis=0)
    if not need_dx:
        return None, dw, db
    dflat = np.zeros((len(flat), cin), dtype=np.result_type(dout, w))
    for i, j, off in _taps(k, wp):
        dflat[off:off + m] += d2 @ w[i, j].T
    dx = dflat.reshape(n, hp, wp, cin)[:, p:p + h, p:p + wd, :]
    return np.ascontiguousarray(dx), dw, db


# the shifted-slice form wins on large maps with several input channels;
# small maps and 3-channel inputs are faster unfolded (im2col)
TAPS_MIN_PIXELS = 256
TAPS_MIN_CHANNELS = 8


def conv2d_forward(x, w, b):
    """Stride-1, same-padded 2-d convolution (cross-correlation)."""
    _check_ndim(x, 4, "conv2d input")
    _check_ndim(w, 4, "conv2d kernel")
    kh, kw, cin, cout = w.shape
    if kh != kw or kh % 2 == 0:
        raise DimensionError(f"kernel must be square with odd size, got {kh}x{kw}", axis="K")
    if x.shape[3] != cin:
        raise DimensionError(f"input has {x.shape[3]} channels, kernel expects {cin}", axis="Cin")
    if b.shape != (cout,):
        raise DimensionError(f"bias shape {b.shape} does not match Cout={cout}", axis="Cout")
    if x.shape[1] * x.shape[2] >= TAPS_MIN_PIXELS and cin >= TAPS_MIN_CHANNELS:
        return _conv_taps_forward(x, w, b)
    return _conv_cols_forward(x, w, b)


def conv2d_backward(dout, cache, need_dx=True):
    if cache[0] == "taps":
        return _conv_taps_backward(dout, cache, need_dx)
    return _conv_cols_backward(dout, cache, need_dx)


# --- batch normalization ---------------------------------------------------

def batchnorm_forward(x, gamma, beta, moving_mean, moving_var, train, momentum=0.99, eps=1e-3):
    """Per-channel batch normalization over every axis but the last.

    In train mode ``moving_mean``/``moving_var`` are updated in place.
    """
    c = x.shape[-1]
    if gamma.shape != (c,):
        raise DimensionError(f"input has {c} channels, batchnorm parameters have {gamma.shape[0]}", axis="C")
    axes = tuple(range(x.ndim - 1))
    if train:
        mean = x.mean(axis=axes)
        xc = x - mean
        var = (xc * xc).mean(axis=axes)
        moving_mean *= momentum
        moving_mean += (1.0 - momentum) * mean
        moving_var *= momentum
        moving_var += (1.0 - momentum) * var
    else:
        xc = x - moving_mean
        var = moving_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = xhat * gamma + beta
    return out, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    axes = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    if not train:
        return dxhat * inv_std, dgamma, dbeta
    m = dout.size // dout.shape[-1]
    dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


# --- elementwise and pooling -----------------------------------------------

def relu_forward(x):
    mask = x > 0
    return np.maximum(x, 0), mask


def relu_backward(dout, mask):
    return dout * mask


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid_forward(x):
    y = sigmoid(x)
    return y, y


def sigmoid_backward(dout, y):
    return dout * y * (1.0 - y)


def maxpool2d_forward(x):
    """2x2 max pooling with stride 2; ties route the gradient to the first maximum."""
    _check_ndim(x, 4, "maxpool2d input")
    n, h, w, c = x.shape
    if h % 2:
        raise DimensionError(f"maxpool2d needs even height, got {h}", axis="H")
    if w % 2:
        raise DimensionError(f"maxpool2d needs even width, got {w}", axis="W")
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2d_backward(dout, cache):
    idx, shape = cache
    n, h, w, c = shape
    dwin = np.zeros(dout.shape + (4,), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(shape)


def global_avg_pool_forward(x):
    _check_ndim(x, 4, "global_avg_pool input")
    return x.mean(axis=(1, 2)), x.shape


def global_avg_pool_backward(dout, shape):
    n, h, w, c = shape
    return np.broadcast_to(dout[:, None, None, :] / (h * w), shape).copy()


def dense_forward(x, w, b):
    _check_ndim(x, 2, "dense input")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"dense input width {x.shape[1]} != weight rows {w.shape[0]}", axis="D")
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dout, probs):
    return probs * (dout - (dout * probs).sum(axis=-1, keepdims=True))


# --- losses ----------------------------------------------------------------

def l1_loss(pred, target):
    """Mean absolute error over every entry of the batch."""
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}", axis="z")
    return float(np.abs(pred - target).mean())


def l1_loss_grad(pred, target):
    # np.sign(0) == 0 gives the zero subgradient at the kink
    return np.sign(pred - target) / pred.size


def _check_labels(probs, labels):
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],):
        raise DimensionError(f"need one label per row, got {labels.shape} for {probs.shape[0]} rows", axis="N")
    if labels.size and (labels.max() >= probs.shape[1] or labels.min() < 0):
        raise IndexError(f"label out of range for {probs.shape[1]} classes")
    return labels.astype(np.int64)


def cross_entropy_loss(probs, labels):
    """Mean negative log-probability of the labelled class."""
    labels = _check_labels(probs, labels)
    p = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p, np.finfo(probs.dtype).tiny)).mean())


def cross_entropy_grad(probs, labels):
    """Gradient of ``cross_entropy_loss`` with respect to the probabilities."""
    labels = _check_labels(probs, labels)
    g = np.zeros_like(probs)
    rows = np.arange(len(labels))
    g[rows, labels] = -1.0 / (probs[rows, labels] * len(labels))
    return g


def softmax_cross_entropy_grad(probs, labels):
    """Gradient of the mean cross-entropy with respect to the pre-softmax logits."""
    labels = _check_labels(probs, labels)
    g = probs.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)
