"""Canonical serialization used for content digests of specs and configs."""

from __future__ import annotations

import hashlib

import numpy as np


def canonical(obj) -> str:
    """Deterministic text form; floats use shortest round-trip repr."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return repr(obj)
    if isinstance(obj, float):
        return repr(float(obj))
    if isinstance(obj, np.ndarray):
        return "array[" + ",".join(canonical(float(x)) for x in obj.ravel()) + f";{obj.shape}]"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical(x) for x in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: kv[0])
        return "{" + ",".join(f"{k}:{canonical(v)}" for k, v in items) + "}"
    if isinstance(obj, (np.integer,)):
        return repr(int(obj))
    if isinstance(obj, (np.floating,)):
        return repr(float(obj))
    raise TypeError(f"cannot canonicalize {type(obj)!r}")


def content_digest(obj) -> str:
    return hashlib.sha256(canonical(obj).encode()).hexdigest()
