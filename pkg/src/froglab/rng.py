"""Counter-based random streams.

Every random number in froglab is ``uniform(key, i)``: draw ``i`` of the
stream ``key``, where keys come from ``stream_key(seed, trial, a, b,
role)``.  The mixing function is SplitMix64's finalizer, so any draw can
be recomputed in isolation, on any platform, by either kernel backend.
The array helpers below reproduce the scalar functions bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import GOLDEN, ROLE_SAMPLE, SEED_SALT, TWO_M53, mix64, stream_key, uniform

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(x) -> np.ndarray:
    return np.asarray(x).astype(np.int64).view(np.uint64) if np.asarray(x).dtype != np.uint64 \
        else np.asarray(x)


def stream_key_array(seed: int, trial, a, b, role: int) -> np.ndarray:
    """Vectorized :func:`stream_key`; ``trial``, ``a``, ``b`` broadcast."""
    k = np.uint64(mix64(seed ^ SEED_SALT))
    trial, a, b = np.broadcast_arrays(_u64(trial), _u64(a), _u64(b))
    k = mix64_array(k ^ trial)
    k = mix64_array(k ^ a)
    with np.errstate(over="ignore"):
        tail = (b << np.uint64(8)) | np.uint64(role)
    return mix64_array(k ^ tail)


def uniform_keys(keys: np.ndarray, idx) -> np.ndarray:
    """Vectorized :func:`uniform` over arrays of keys and draw indices."""
    keys, idx = np.broadcast_arrays(np.asarray(keys, np.uint64), _u64(idx))
    with np.errstate(over="ignore"):
        z = keys + (idx + np.uint64(1)) * np.uint64(GOLDEN)
    return (mix64_array(z) >> np.uint64(11)).astype(np.float64) * TWO_M53


def uniform_array(key: int, start: int, count: int) -> np.ndarray:
    """Draws ``start .. start + count - 1`` of one stream."""
    return uniform_keys(np.uint64(key), np.arange(start, start + count, dtype=np.uint64))


@dataclass
class RngStream:
    """One stream: ``master_seed`` plus a derived 64-bit ``stream_id`` and a draw counter."""

    master_seed: int
    stream_id: int
    counter: int = 0

    @classmethod
    def derive(cls, seed: int, trial: int = 0, vertex: int = 0, index: int = 0,
               role: int = ROLE_SAMPLE) -> "RngStream":
        return cls(seed, stream_key(seed, trial, vertex, index, role))

    def uniform(self) -> float:
        u = uniform(self.stream_id, self.counter)
        self.counter += 1
        return u

    def uniforms(self, count: int) -> np.ndarray:
        out = uniform_array(self.stream_id, self.counter, count)
        self.counter += count
        return out
