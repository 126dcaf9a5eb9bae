"""Deterministic counter-based PRNG with a Box-Muller Gaussian transform.

The generator is splitmix64 run in counter mode: word i of stream `seed` is
mix64(seed + (i+1) * GAMMA) where mix64 is the splitmix64 finalizer and
GAMMA is the 64-bit golden-ratio increment. Everything is fixed-width
uint64 / float64 arithmetic, so identical (seed, shape) yields bit-identical
output on every platform. numpy's own generators are deliberately not used
here; their bit streams are not part of any compatibility contract.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; x is uint64, all ops wrap mod 2^64
    x = x ^ (x >> np.uint64(30))
    x = x * _MIX1
    x = x ^ (x >> np.uint64(27))
    x = x * _MIX2
    return x ^ (x >> np.uint64(31))


def random_words(seed: int, count: int) -> np.ndarray:
    """First `count` uint64 words of the splitmix64 stream for `seed`."""
    counters = np.arange(1, count + 1, dtype=np.uint64)
    return _mix64(np.uint64(seed & _MASK64) + counters * GAMMA)


def uniform_open(seed: int, count: int) -> np.ndarray:
    """`count` float64 uniforms strictly inside (0, 1)."""
    words = random_words(seed, count)
    # top 52 bits plus a half-ulp offset keeps both endpoints excluded
    return ((words >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52


def standard_normal(seed: int, count: int) -> np.ndarray:
    """`count` standard-normal float64 values via the Box-Muller transform.

    Pairs (u1, u2) are the first and second halves of a 2*ceil(count/2)
    uniform block; pair j yields r*cos and r*sin with r = sqrt(-2 ln u1).
    """
    pairs = (count + 1) // 2
    u = uniform_open(seed, 2 * pairs)
    u1, u2 = u[:pairs], u[pairs:]
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:count]


def derive_seed(seed: int, *indices: int) -> int:
    """Fold stream indices into a 64-bit sub-stream seed.

    Used to give every (step, draw) its own independent noise stream while
    keeping the whole run a pure function of the root seed.
    """
    # 1-element array: numpy integer overflow wraps silently for arrays only
    state = np.array([seed & _MASK64], dtype=np.uint64)
    for index in indices:
        state = _mix64((state + GAMMA) ^ np.uint64(index & _MASK64))
    return int(state[0])
