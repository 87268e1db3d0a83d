"""Versioned binary checkpoint: magic line, JSON header, raw little-endian arrays.

Byte-identical for identical parameters and metadata (no timestamps).
"""
from __future__ import annotations

import json

import numpy as np

from .errors import FormatError

MAGIC = b"FIGMENT-CHECKPOINT 1\n"


def save_checkpoint(path, arrays, meta):
    names = list(arrays)
    header = {
        "meta": meta,
        "arrays": [
            {"name": n, "dtype": np.asarray(arrays[n]).dtype.newbyteorder("<").str, "shape": list(np.shape(arrays[n]))}
            for n in names
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(blob + b"\n")
        for n in names:
            a = np.ascontiguousarray(arrays[n])
            f.write(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        if f.readline() != MAGIC:
            raise FormatError(path, 1, "not a checkpoint file (bad magic line)")
        try:
            header = json.loads(f.readline())
        except json.JSONDecodeError as e:
            raise FormatError(path, 2, f"bad header: {e}") from None
        arrays = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"], dtype=np.int64))
            buf = f.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise FormatError(path, 3, f"truncated array {spec['name']!r}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(spec["shape"]).astype(dtype.newbyteorder("="))
        if f.read(1):
            raise FormatError(path, 3, "trailing bytes after last array")
    return arrays, header["meta"]
