"""Deterministic, platform-independent random streams.

Corpus generation and the random-selection baseline must reproduce
bit-identically across platforms and library versions, so nothing here
delegates to library RNGs.  Two primitives are provided:

* a counter-based splitmix64 stream (``splitmix64_stream``), used for seeding,
  stream derivation and index shuffles;
* a 64-lane xoshiro256** generator (``XoshiroStream``) whose lane states are
  seeded from splitmix64, used for bulk uniform/normal sampling.

Stream derivation: ``derive(seed, *tags)`` folds integer tags into the seed
with the splitmix64 finalizer, one fold per tag.  Callers derive one stream
per (purpose, image index) pair so images are independently reproducible.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_U64 = np.uint64
_LANES = 64


def _mix(z: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    """splitmix64 finalizer; elementwise on uint64 input (wraps mod 2^64)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def derive(seed: int, *tags: int) -> int:
    """Derive a child seed by folding integer tags into ``seed``."""
    s = _U64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        for t in tags:
            s = _mix(s ^ _mix(_U64(t & 0xFFFFFFFFFFFFFFFF) + _GAMMA))
    return int(s)


def splitmix64_stream(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs ``start .. start+count`` of the splitmix64 sequence for ``seed``.

    The n-th output is the finalizer applied to ``seed + (n+1)*gamma``, which
    makes the stream a pure function of (seed, index).
    """
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _U64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _GAMMA
    return _mix(base)


def shuffle_prefix(seed: int, pool_size: int, take: int) -> list[int]:
    """First ``take`` elements of a seeded Fisher-Yates shuffle of ``range(pool_size)``.

    Draws come from the splitmix64 stream reduced modulo the remaining range
    (modulo bias accepted; the scheme is frozen for reproducibility, not
    perfect uniformity).
    """
    if take > pool_size:
        raise ValueError("cannot take more indices than the pool holds")
    pool = list(range(pool_size))
    words = splitmix64_stream(seed, take)
    for i in range(take):
        j = i + int(words[i] % _U64(pool_size - i)) if pool_size - i > 1 else i
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:take]


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << _U64(k)) | (x >> _U64(64 - k))


class XoshiroStream:
    """64-lane xoshiro256** generator, splitmix64-seeded.

    Sample ``i`` of the stream comes from lane ``i % 64`` at step ``i // 64``,
    so the sequence does not depend on request chunking.
    """

    def __init__(self, seed: int):
        words = splitmix64_stream(seed, 4 * _LANES)
        self._s = [words[w::4].copy() for w in range(4)]
        self._buf = np.empty(0, dtype=np.uint64)

    def _steps(self, n_steps: int) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        out = np.empty((n_steps, _LANES), dtype=np.uint64)
        five = _U64(5)
        nine = _U64(9)
        for i in range(n_steps):
            out[i] = _rotl(s1 * five, 7) * nine
            t = s1 << _U64(17)
            s2 = s2 ^ s0
            s3 = s3 ^ s1
            s1 = s1 ^ s2
            s0 = s0 ^ s3
            s2 = s2 ^ t
            s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return out

    def raw(self, count: int) -> np.ndarray:
        """Next ``count`` uint64 words."""
        while self._buf.size < count:
            need = count - self._buf.size
            steps = (need + _LANES - 1) // _LANES
            fresh = self._steps(steps).reshape(-1)
            self._buf = np.concatenate([self._buf, fresh])
        out, self._buf = self._buf[:count], self._buf[count:]
        return out

    def uniform(self, count: int) -> np.ndarray:
        """Float64 samples in [0, 1) with 53-bit resolution."""
        return (self.raw(count) >> _U64(11)).astype(np.float64) * 2.0**-53

    def normal(self, count: int) -> np.ndarray:
        """Standard normal samples via Box-Muller."""
        pairs = (count + 1) // 2
        u1 = (self.raw(pairs) >> _U64(11)).astype(np.float64)
        u1 = (u1 + 1.0) * 2.0**-53  # (0, 1]: keeps log finite
        u2 = self.uniform(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:count]
