"""Deterministic seed derivation and the frozen normal-variate transform."""
from __future__ import annotations

import os
import secrets

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 output function."""
    z = (int(x) + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Seed for unit ``index`` of a run seeded with ``seed``: ``seed XOR splitmix64(index)``."""
    return (int(seed) & _MASK) ^ splitmix64(index)


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """PCG64 generator keyed by ``seed`` and a path of integer indices."""
    s = int(seed)
    for i in path:
        s = derive_seed(s, i)
    return np.random.Generator(np.random.PCG64(s))


def fresh_seed() -> int:
    return secrets.randbits(63)


def standard_normals(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normals from the generator's uniform stream by Box-Muller.

    Draws ``2 * ceil(size / 2)`` uniforms ``u1, u2`` in ``[0, 1)`` and returns
    ``sqrt(-2 log(1 - u1)) * cos(2 pi u2)`` followed by the matching sine
    branch, truncated to ``size``.  The transform is part of the reproducibility
    contract; do not swap it for ``rng.standard_normal``.
    """
    m = (size + 1) // 2
    u = rng.random((2, m))
    r = np.sqrt(-2.0 * np.log1p(-u[0]))
    t = 2.0 * np.pi * u[1]
    return np.concatenate([r * np.cos(t), r * np.sin(t)])[:size]


def worker_count(default: int = 1) -> int:
    """Worker cap from ``SPATIAL_GOF_THREADS`` (default 1)."""
    raw = os.environ.get("SPATIAL_GOF_THREADS", "").strip()
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"SPATIAL_GOF_THREADS must be an integer, got {raw!r}") from None
