"""Named-parameter checkpoints.

Layout::

    magic        4s   b"CKDP"
    version      u32  1
    manifest_len u64
    manifest     JSON (utf-8): {"meta": {...}, "tensors": [{"name", "shape", "offset", "nbytes"}]}
    data         concatenated little-endian float64 blocks; offsets are
                 relative to the start of this section

Writing is deterministic: identical parameters and meta give identical bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Mapping

import numpy as np

MAGIC = b"CKDP"
VERSION = 1
_HEAD = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray], meta: dict | None = None) -> bytes:
    entries, blocks, offset = [], [], 0
    for name, value in tensors.items():
        arr = np.ascontiguousarray(np.asarray(value, dtype="<f8"))
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blocks.append(raw)
        offset += len(raw)
    names = [e["name"] for e in entries]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate tensor names")
    manifest = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
    return _HEAD.pack(MAGIC, VERSION, len(manifest)) + manifest + b"".join(blocks)


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(data) < _HEAD.size:
        raise CheckpointError("unexpected end of checkpoint header")
    magic, version, mlen = _HEAD.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise CheckpointError("unrecognized checkpoint format")
    start = _HEAD.size + mlen
    if len(data) < start:
        raise CheckpointError("unexpected end of checkpoint manifest")
    manifest = json.loads(data[_HEAD.size:start].decode("utf-8"))
    tensors = {}
    for e in manifest["tensors"]:
        lo = start + e["offset"]
        hi = lo + e["nbytes"]
        if hi > len(data):
            raise CheckpointError(f"tensor {e['name']!r} runs past end of file")
        tensors[e["name"]] = np.frombuffer(data[lo:hi], dtype="<f8").reshape(e["shape"]).astype(np.float64)
    return tensors, manifest["meta"]


def save(path, tensors: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(tensors, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
