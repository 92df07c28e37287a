"""Small shared helpers: seeding, log-domain sums, hashing."""

from __future__ import annotations

import hashlib
import json

import numpy as np
from scipy.special import logsumexp

__all__ = ["make_rng", "logsumexp", "logmeanexp", "sha256_bytes", "sha256_file", "dump_json"]


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for stream ``keys`` under the master ``seed``.

    Streams are derived by spawn key (counter-based), so two calls with the
    same arguments always return identically seeded generators.
    """
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def logmeanexp(a, axis=None):
    a = np.asarray(a, dtype=float)
    count = a.size if axis is None else a.shape[axis]
    return logsumexp(a, axis=axis) - np.log(count)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dump_json(record, path=None) -> str:
    """Deterministic JSON text (sorted keys, fixed separators)."""
    text = json.dumps(record, sort_keys=True, indent=2, default=_to_builtin, allow_nan=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text
