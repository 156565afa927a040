"""Parameter tensors and the global float precision switch."""
from __future__ import annotations

import contextlib

import numpy as np

_DTYPE = np.float32


def default_dtype():
    return _DTYPE


def set_default_dtype(dtype):
    """Switch between float32 (training) and float64 (gradient checking)."""
    global _DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError("only float32 and float64 are supported")
    _DTYPE = dtype


@contextlib.contextmanager
def float64_mode():
    prev = _DTYPE
    set_default_dtype(np.float64)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """A named n-d float array with an optional gradient slot.

    ``trainable=False`` marks buffers such as batchnorm moving statistics:
    they are serialized and counted but never receive gradients.
    """

    __slots__ = ("data", "grad", "name", "trainable")

    def __init__(self, data, name="", trainable=True, dtype=None):
        arr = np.array(data, dtype=dtype or _DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = arr
        self.grad = None
        self.name = name
        self.trainable = trainable

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != tensor shape {self.data.shape} for {self.name!r}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def astype(self, dtype):
        t = Tensor(self.data, self.name, self.trainable, dtype=dtype)
        return t

    def __repr__(self):
        return f"Tensor({self.name!r}, shape={self.shape}, dtype={self.data.dtype})"
