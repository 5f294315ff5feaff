"""Content hashes used to chain artifacts together."""

from __future__ import annotations

import hashlib
import json

import numpy as np

__all__ = ["chain", "hash_array", "hash_file", "hash_json"]


def hash_array(*arrays):
    """SHA-256 over dtype, shape and raw bytes of each array."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot hash {type(obj).__name__}")


def hash_json(obj):
    """SHA-256 of the canonical JSON encoding of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)
    return hashlib.sha256(text.encode()).hexdigest()


def hash_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def chain(parent, payload):
    """Hash of ``payload`` linked to a ``parent`` hash (``None`` for a root)."""
    return hash_json({"parent": parent, "payload": payload})
