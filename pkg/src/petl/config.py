"""Plain-text ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Values are parsed according to
the type of the field they set: ints, floats, booleans (true/false/yes/no/1/0),
comma-separated tuples, ``none`` for optional fields, and strings.
"""
from __future__ import annotations

import dataclasses
import types
import typing
from pathlib import Path

from .errors import ConfigError
from .training import TrainConfig

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def parse_config(text):
    """``key = value`` lines -> ordered dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        out[key.replace("-", "_")] = value
    return out


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(mapping, header=None):
    lines = [f"# {header}"] if header else []
    lines += [f"{k} = {format_value(v)}" for k, v in mapping.items()]
    return "\n".join(lines) + "\n"


def _coerce(key, value, kind):
    origin = typing.get_origin(kind)
    args = typing.get_args(kind)
    if origin in (typing.Union, types.UnionType) and type(None) in args:
        if value.lower() == "none":
            return None
        kind = next(a for a in args if a is not type(None))
    try:
        if kind is bool:
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind is tuple or origin is tuple:
            return tuple(p.strip() for p in value.split(",") if p.strip())
        return value
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {getattr(kind, '__name__', kind)}") from None


def train_config_fields():
    hints = typing.get_type_hints(TrainConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(TrainConfig)}


def make_train_config(values, base=None):
    """Build a :class:`TrainConfig` from raw strings; unknown keys raise."""
    fields = train_config_fields()
    kwargs = {}
    for key, raw in values.items():
        if key not in fields:
            raise ConfigError(f"unknown training option {key!r}")
        kwargs[key] = _coerce(key, raw, fields[key]) if isinstance(raw, str) else raw
    base = base or TrainConfig()
    try:
        return dataclasses.replace(base, **kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def split_config(values, option_names):
    """Separate training options from command options (anything in ``option_names``)."""
    fields = train_config_fields()
    train, options = {}, {}
    for k, v in values.items():
        if k in fields:
            train[k] = v
        elif k in option_names:
            options[k] = v
        else:
            raise ConfigError(f"unknown config key {k!r}")
    return train, options
