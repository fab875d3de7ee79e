"""Checkpoint files.

Layout: 16-byte header ``<4sIII`` (magic ``DLCK``, version, kind, JSON length),
the config as UTF-8 JSON, a little-endian u64 parameter count, then every
parameter as little-endian float64 in declaration order.  ``kind`` is 0 for
a joint model and ``1 + coord`` for a single branch.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import Branch, JointModel, NetworkConfig, parameters

MAGIC = b"DLCK"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_COUNT = struct.Struct("<Q")


def save_checkpoint(path, model):
    kind = 1 + model.coord if isinstance(model, Branch) else 0
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    flat = [np.ascontiguousarray(layer.params[k], dtype="<f8").ravel() for layer, k in parameters(model)]
    data = np.concatenate(flat)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, kind, len(cfg)))
        f.write(cfg)
        f.write(_COUNT.pack(data.size))
        f.write(data.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, kind, n = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = _HEADER.size
    config = NetworkConfig.from_dict(json.loads(blob[off:off + n].decode()))
    off += n
    (count,) = _COUNT.unpack_from(blob, off)
    off += _COUNT.size
    data = np.frombuffer(blob, dtype="<f8", offset=off)
    model = JointModel.fresh(config) if kind == 0 else Branch(config, kind - 1)
    params = parameters(model)
    if data.size != count or count != sum(layer.params[k].size for layer, k in params):
        raise ValueError(f"{path}: parameter count mismatch")
    i = 0
    for layer, k in params:
        shape = layer.params[k].shape
        size = layer.params[k].size
        layer.params[k] = data[i:i + size].reshape(shape).astype(float)
        i += size
    return model
