"""Layer objects: parameter holders around the kernels in :mod:`petl.ops`.

Layers keep no activation state. ``forward`` returns ``(out, cache)`` and
``backward(dout, cache)`` returns ``(dx, grads)`` where ``grads`` maps full
parameter names to gradient arrays, so any number of passes can be in flight
on the same layer object.
"""
from __future__ import annotations

import numpy as np

from . import ops
from .init import glorot_uniform, he_uniform
from .tensor import Tensor, default_dtype

BN_MOMENTUM = 0.99
BN_EPSILON = 1e-3


class Layer:
    name = ""

    def __init__(self, name=""):
        self.name = name
        self.params = {}

    def add_param(self, key, data, trainable=True):
        t = Tensor(data, name=f"{self.name}.{key}", trainable=trainable)
        self.params[key] = t
        return t

    def named_params(self):
        return [(t.name, t) for t in self.params.values()]

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout, cache, need_dx=True):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Conv2D(Layer):
    def __init__(self, cin, cout, seed, kernel=3, name="conv"):
        super().__init__(name)
        fan_in = kernel * kernel * cin
        self.kernel = self.add_param("kernel", he_uniform((kernel, kernel, cin, cout), fan_in, seed))
        self.bias = self.add_param("bias", np.zeros(cout))

    def forward(self, x, train=False):
        return ops.conv2d_forward(x, self.kernel.data, self.bias.data)

    def backward(self, dout, cache, need_dx=True):
        dx, dw, db = ops.conv2d_backward(dout, cache, need_dx)
        return dx, {self.kernel.name: dw, self.bias.name: db}


class BatchNorm(Layer):
    def __init__(self, channels, name="bn", momentum=BN_MOMENTUM, eps=BN_EPSILON):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))
        self.moving_mean = self.add_param("moving_mean", np.zeros(channels), trainable=False)
        self.moving_var = self.add_param("moving_var", np.ones(channels), trainable=False)

    def forward(self, x, train=False):
        return ops.batchnorm_forward(
            x, self.gamma.data, self.beta.data, self.moving_mean.data, self.moving_var.data,
            train, self.momentum, self.eps,
        )

    def backward(self, dout, cache, need_dx=True):
        dx, dg, db = ops.batchnorm_backward(dout, cache)
        return dx, {self.gamma.name: dg, self.beta.name: db}


class ReLU(Layer):
    def forward(self, x, train=False):
        return ops.relu_forward(x)

    def backward(self, dout, cache, need_dx=True):
        return ops.relu_backward(dout, cache), {}


class Sigmoid(Layer):
    def forward(self, x, train=False):
        return ops.sigmoid_forward(x)

    def backward(self, dout, cache, need_dx=True):
        return ops.sigmoid_backward(dout, cache), {}


class MaxPool2D(Layer):
    def forward(self, x, train=False):
        return ops.maxpool2d_forward(x)

    def backward(self, dout, cache, need_dx=True):
        return ops.maxpool2d_backward(dout, cache), {}


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        return ops.global_avg_pool_forward(x)

    def backward(self, dout, cache, need_dx=True):
        return ops.global_avg_pool_backward(dout, cache), {}


class Dense(Layer):
    def __init__(self, din, dout, seed, name="dense", zero_init=False):
        super().__init__(name)
        w = np.zeros((din, dout)) if zero_init else glorot_uniform((din, dout), din, dout, seed)
        self.weight = self.add_param("kernel", w)
        self.bias = self.add_param("bias", np.zeros(dout))

    def forward(self, x, train=False):
        return ops.dense_forward(x, self.weight.data, self.bias.data)

    def backward(self, dout, cache, need_dx=True):
        dx, dw, db = ops.dense_backward(dout, cache)
        return dx, {self.weight.name: dw, self.bias.name: db}


class Sequential(Layer):
    """An ordered stack of layers; ``forward`` can stop early."""

    def __init__(self, layers, name=""):
        super().__init__(name)
        self.layers = list(layers)

    def named_params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.named_params())
        return out

    def forward(self, x, train=False, stop=None):
        caches = []
        for layer in self.layers[:stop]:
            x, c = layer.forward(x, train)
            caches.append(c)
        return x, caches

    def backward(self, dout, caches, need_dx=True):
        """Backpropagate through the layers that ``caches`` came from.

        With ``need_dx=False`` the first layer skips its input gradient and
        ``None`` is returned in its place.
        """
        grads = {}
        n = len(caches)
        for i in range(n - 1, -1, -1):
            dout, g = self.layers[i].backward(dout, caches[i], need_dx or i > 0)
            grads.update(g)
        return dout, grads

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)


def cast_layer_params(layer, dtype=None):
    """Cast every parameter array of ``layer`` in place (e.g. to float64 for gradient checks)."""
    dtype = dtype or default_dtype()
    for _, t in layer.named_params():
        t.data = t.data.astype(dtype)
