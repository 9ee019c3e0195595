"""Binary weight files.

Layout, little-endian::

    b"RFNN" | u32 version | 32-byte sha256 architecture fingerprint | u32 tensor count
    per tensor: u32 name length | utf-8 name | u32 rank | u32 dims[rank] | float32 data

The layer list itself goes to a ``<path>.arch.json`` sidecar so a file
can be loaded without knowing its architecture in advance.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from radioflow.nn.model import LayerSpec, ModelWeights, arch_json, fingerprint

MAGIC = b"RFNN"
VERSION = 1


def _sidecar(path) -> Path:
    return Path(str(path) + ".arch.json")


def save_weights(path, weights: ModelWeights) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION), bytes.fromhex(weights.arch_fingerprint),
             struct.pack("<I", len(weights.tensors))]
    for name, t in weights.tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))
    _sidecar(path).write_text(arch_json(weights.specs, weights.input_shape))


def load_weights(path, specs=None, input_shape=None) -> ModelWeights:
    """Read a weight file; the architecture comes from the sidecar unless given."""
    if specs is None:
        arch = json.loads(_sidecar(path).read_text())
        specs = tuple(LayerSpec(**d) for d in arch["layers"])
        input_shape = tuple(arch["input_shape"])
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    stored_fp = data[8:40].hex()
    (count,) = struct.unpack_from("<I", data, 40)
    off = 44
    tensors = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, off)
            name = data[off + 4:off + 4 + nlen].decode("utf-8")
            off += 4 + nlen
            (rank,) = struct.unpack_from("<I", data, off)
            dims = struct.unpack_from(f"<{rank}I", data, off + 4)
            off += 4 + 4 * rank
            size = int(np.prod(dims)) * 4
            if off + size > len(data):
                raise ValueError(f"{path}: tensor {name!r} truncated")
            tensors[name] = np.frombuffer(data, "<f4", int(np.prod(dims)), off).reshape(dims).astype(np.float32)
            off += size
    except struct.error as exc:
        raise ValueError(f"{path}: truncated header ({exc})") from None
    expected = fingerprint(tuple(specs), tuple(input_shape))
    if stored_fp != expected:
        raise ValueError(f"{path}: architecture fingerprint mismatch")
    return ModelWeights(tensors, expected, tuple(specs), tuple(input_shape))
