"""Counter-based random number streams.

Every stochastic component of the toolkit owns a named stream.  A stream
is a (seed, counter) pair; draw number ``i`` of a stream is obtained by
mixing ``seed + i * GAMMA`` through the splitmix64 finalizer.  Streams
are random-access and never interact, so the disorder sample of a run is
bit-identical no matter how many temperatures, sweeps, or replicas are
added later.  Stream seeds are derived from a master seed and a label
path via SHA-256, which is stable across platforms and versions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numba import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
U64_MAX = np.uint64(0xFFFFFFFFFFFFFFFF)

# 2^-53, so (x >> 11) * INV53 is uniform on [0, 1) with 53-bit resolution
INV53 = 1.1102230246251565e-16


def derive_seed(master_seed: int, *labels) -> int:
    """Derive a 64-bit stream seed from a master seed and a label path.

    Labels are joined into a canonical string and hashed; the first eight
    digest bytes (little-endian) become the seed.  Distinct label paths
    give independent streams.
    """
    text = "/".join([str(int(master_seed))] + [str(lab) for lab in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@njit(cache=True, inline="always")
def mix64(z):
    """splitmix64 finalizer: bijective mixing of a uint64."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def stream_raw(seed, counter):
    """Raw uint64 draw number ``counter`` (1-based) of stream ``seed``."""
    return mix64(seed + counter * GAMMA)


@njit(cache=True, inline="always")
def stream_uniform(seed, counter):
    """float64 uniform on [0, 1), draw number ``counter`` of stream ``seed``."""
    return (stream_raw(seed, counter) >> np.uint64(11)) * INV53


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def raw_block(seed: int, start: int, n: int) -> np.ndarray:
    """Vectorized uint64 draws ``start+1 .. start+n`` of stream ``seed``."""
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    return _mix64_vec(np.uint64(seed) + idx * GAMMA)


def uniform_block(seed: int, start: int, n: int) -> np.ndarray:
    """Vectorized float64 uniforms on [0, 1), draws ``start+1 .. start+n``."""
    return (raw_block(seed, start, n) >> np.uint64(11)) * INV53


@dataclass
class Stream:
    """Stateful view of a counter-based stream.

    The counter records how many draws have been consumed; (seed, counter)
    is the complete, trivially serializable RNG state.
    """

    seed: int
    counter: int = 0

    def uniforms(self, n: int) -> np.ndarray:
        out = uniform_block(self.seed, self.counter, n)
        self.counter += n
        return out

    def raw(self, n: int) -> np.ndarray:
        out = raw_block(self.seed, self.counter, n)
        self.counter += n
        return out


def normal_block(seed: int, start: int, n: int) -> np.ndarray:
    """Vectorized standard normals via Box-Muller; consumes 2n uniforms
    (draws start+1 .. start+2n), so blocks compose deterministically."""
    u = uniform_block(seed, start, 2 * n)
    r = np.sqrt(-2.0 * np.log1p(-u[:n]))  # 1-u in (0, 1], log finite
    return r * np.cos(2.0 * np.pi * u[n:])


def acceptance_threshold(prob: float) -> int:
    """Map an acceptance probability to a uint64 compare threshold.

    A proposal with raw draw ``r`` is accepted iff ``r < threshold``, so
    the acceptance probability is ``threshold / 2**64`` (saturated at
    ``2**64 - 1``, an error of 5.4e-20).
    """
    if prob >= 1.0:
        return (1 << 64) - 1
    if prob <= 0.0:
        return 0
    return min(int(prob * 2.0**64), (1 << 64) - 1)
