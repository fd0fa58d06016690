"""OPMAT1 matrix blobs and small JSON helpers."""
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError

MAGIC = b"OPMAT1"
_HEADER = struct.Struct("<6sII")


def encode_opmat(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("OPMAT1 stores 2-D arrays only")
    rows, cols = a.shape
    return _HEADER.pack(MAGIC, rows, cols) + np.ascontiguousarray(a).astype("<f8").tobytes()


def decode_opmat(buf, offset=0):
    """Decode one matrix starting at ``offset``; returns (array, next_offset)."""
    if len(buf) - offset < _HEADER.size:
        raise ConfigError("truncated OPMAT1 header")
    magic, rows, cols = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise ConfigError("bad OPMAT1 magic %r" % magic)
    start = offset + _HEADER.size
    end = start + 8 * rows * cols
    if end > len(buf):
        raise ConfigError("truncated OPMAT1 payload")
    a = np.frombuffer(buf[start:end], dtype="<f8").astype(np.float64).reshape(rows, cols)
    return a, end


def write_opmat(path, a):
    Path(path).write_bytes(encode_opmat(a))


def read_opmat(path):
    buf = Path(path).read_bytes()
    a, end = decode_opmat(buf)
    if end != len(buf):
        raise ConfigError("trailing bytes after OPMAT1 matrix in %s" % path)
    return a


def read_opmat_all(path):
    """All matrices concatenated in one file."""
    buf = Path(path).read_bytes()
    out, off = [], 0
    while off < len(buf):
        a, off = decode_opmat(buf, off)
        out.append(a)
    return out


def fmt_float(x):
    return format(float(x), ".17g")


def _round_floats(obj):
    # 17 significant digits, stable across runs
    if isinstance(obj, float):
        return float(fmt_float(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round_floats(obj.item())
    return obj


def dump_json(path, obj):
    text = json.dumps(_round_floats(obj), indent=2, sort_keys=True, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8")
