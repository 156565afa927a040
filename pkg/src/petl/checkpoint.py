"""Binary checkpoint format.

Layout::

    PETL1\\n
    <header byte length> <sha256 of header, hex>\\n
    <header: UTF-8 JSON, sorted keys>
    <payload: little-endian float32 tensors in header order>

The header carries the network spec, input normalization, batchnorm
constants, training provenance and a table of tensor names and shapes.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import BadMagicError, CheckpointShapeError, HeaderCorruptError, PayloadLengthError
from .layers import BN_EPSILON, BN_MOMENTUM
from .network import Network, NetworkSpec

MAGIC = b"PETL1\n"
FORMAT_VERSION = 1
_LE_F32 = np.dtype("<f4")


def _header(net, extra=None):
    tensors = [{"name": n, "shape": list(t.shape)} for n, t in net.named_params()]
    return {
        "format_version": FORMAT_VERSION,
        "spec": net.spec.to_dict(),
        "seed": net.seed,
        "with_localization": net.localization is not None,
        "normalization": {"scale": 127.5, "offset": -1.0, "channels": 3},
        "batchnorm": {"momentum": BN_MOMENTUM, "epsilon": BN_EPSILON},
        "provenance": dict(net.meta, **(extra or {})),
        "tensors": tensors,
    }


def to_bytes(net, extra=None):
    header = json.dumps(_header(net, extra), sort_keys=True, separators=(",", ":"),
                        allow_nan=False).encode()
    digest = hashlib.sha256(header).hexdigest()
    payload = b"".join(np.ascontiguousarray(t.data, dtype=_LE_F32).tobytes() for _, t in net.named_params())
    return MAGIC + f"{len(header)} {digest}\n".encode() + header + payload


def save_checkpoint(net, path, extra=None):
    """Write ``net`` to ``path``; ``extra`` entries are merged into the provenance block."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(net, extra))
    return path


def read_checkpoint(path):
    """Parse and verify a checkpoint file; returns ``(header, {name: float32 array})``."""
    buf = Path(path).read_bytes()
    if not buf.startswith(MAGIC):
        raise BadMagicError(f"{path}: not a checkpoint (bad magic {buf[:len(MAGIC)]!r})")
    pos = len(MAGIC)
    end = buf.find(b"\n", pos)
    if end < 0:
        raise HeaderCorruptError(f"{path}: missing header length line")
    try:
        length_s, digest = buf[pos:end].decode("ascii").split(" ")
        length = int(length_s)
    except (UnicodeDecodeError, ValueError):
        raise HeaderCorruptError(f"{path}: malformed header length line") from None
    raw = buf[end + 1:end + 1 + length]
    if len(raw) != length or hashlib.sha256(raw).hexdigest() != digest:
        raise HeaderCorruptError(f"{path}: header hash mismatch")
    try:
        header = json.loads(raw)
        table = [(t["name"], tuple(t["shape"])) for t in header["tensors"]]
    except (ValueError, KeyError, TypeError):
        raise HeaderCorruptError(f"{path}: header is not valid checkpoint JSON") from None
    payload = buf[end + 1 + length:]
    need = sum(int(np.prod(s)) for _, s in table) * _LE_F32.itemsize
    if len(payload) != need:
        raise PayloadLengthError(f"{path}: payload holds {len(payload)} bytes, header declares {need}")
    arrays, off = {}, 0
    for name, shape in table:
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(payload, dtype=_LE_F32, count=n, offset=off).reshape(shape)
        off += n * _LE_F32.itemsize
    return header, arrays


def _assign(net, arrays):
    params = net.params()
    for name, arr in arrays.items():
        if name not in params:
            raise CheckpointShapeError(name, None, arr.shape)
    for name, t in params.items():
        if name not in arrays:
            raise CheckpointShapeError(name, t.shape, None)
        if arrays[name].shape != t.shape:
            raise CheckpointShapeError(name, t.shape, arrays[name].shape)
    for name, t in params.items():
        t.data = arrays[name].astype(np.float32)


def load_checkpoint(path):
    """Rebuild the network a checkpoint describes and fill in its weights."""
    header, arrays = read_checkpoint(path)
    try:
        spec = NetworkSpec.from_dict(header["spec"])
    except (KeyError, TypeError, ValueError) as e:
        raise HeaderCorruptError(f"{path}: invalid network spec ({e})") from None
    net = Network(spec, header.get("seed", 0), with_localization=header.get("with_localization", True))
    _assign(net, arrays)
    net.meta = dict(header.get("provenance", {}))
    return net


def load_into(net, path):
    """Copy a checkpoint's weights into an existing network, checking every name and shape."""
    _, arrays = read_checkpoint(path)
    _assign(net, arrays)
    return net
