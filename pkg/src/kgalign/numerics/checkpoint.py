"""JSON checkpoint container.

Layout::

    {"format": "kgalign-checkpoint", "version": 1, "dtype": "<f8",
     "params": {"<group>.<name>": {"shape": [...], "data": "<base64 LE bytes>"}}}

Values are stored as raw little-endian bytes so a round trip is bitwise exact
in 64-bit mode. ``dtype="<f4"`` gives the compact 32-bit storage mode.
"""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

FORMAT = "kgalign-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_arrays(arrays: dict[str, np.ndarray], dtype: str = "<f8") -> dict:
    if dtype not in ("<f8", "<f4"):
        raise CheckpointError(f"unsupported storage dtype {dtype!r}")
    params = {}
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=dtype)
        params[name] = {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}
    return {"format": FORMAT, "version": VERSION, "dtype": dtype, "params": params}


def decode_arrays(doc: dict) -> dict[str, np.ndarray]:
    if doc.get("format") != FORMAT:
        raise CheckpointError("not a kgalign checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    dtype = doc.get("dtype", "<f8")
    out = {}
    for name, entry in doc["params"].items():
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype=dtype).astype(np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"size mismatch for {name}")
        out[name] = arr.reshape(shape)
    return out


def save_arrays(path, arrays: dict[str, np.ndarray], dtype: str = "<f8") -> None:
    Path(path).write_text(json.dumps(encode_arrays(arrays, dtype), indent=1))


def load_arrays(path) -> dict[str, np.ndarray]:
    return decode_arrays(json.loads(Path(path).read_text()))
