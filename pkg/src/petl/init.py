"""Seeded weight initializers."""
import numpy as np

from .tensor import default_dtype


def he_uniform(shape, fan_in, seed):
    """Uniform on [-sqrt(6/fan_in), sqrt(6/fan_in)]."""
    if fan_in <= 0:
        raise ValueError("fan_in must be positive")
    limit = np.sqrt(6.0 / fan_in)
    rng = np.random.default_rng(seed)
    return rng.uniform(-limit, limit, size=shape).astype(default_dtype())


def glorot_uniform(shape, fan_in, fan_out, seed):
    """Uniform on [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fan_in and fan_out must be positive")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    return rng.uniform(-limit, limit, size=shape).astype(default_dtype())
