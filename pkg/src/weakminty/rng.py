"""Counter-based deterministic random number generation.

A sample ticket is the pair (seed, counter).  Every random quantity drawn
under that ticket is a pure function of the pair, so a ticket can be replayed
at arbitrarily many query points (the two-point oracle property) and whole
trajectories are reproducible bit-for-bit from (config, seed).

The generator is a SplitMix64-style bit mixer.  It is vectorised over a batch
of seeds so that many independent trajectories can be advanced in lockstep
while each one still sees exactly the stream it would see when run alone.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = float(1 << 53)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _MIX1
    x ^= x >> np.uint64(27)
    x *= _MIX2
    x ^= x >> np.uint64(31)
    return x


def ticket_key(seed, counter: int) -> np.ndarray:
    """64-bit key of the ticket (seed, counter); seed may be an array."""
    s = np.asarray(seed, dtype=np.uint64)
    c = np.uint64(int(counter) & 0xFFFFFFFFFFFFFFFF)
    return _mix64(_mix64(s + _GOLDEN) ^ (c * _GOLDEN + _MIX2))


def _words(key: np.ndarray, m: int) -> np.ndarray:
    """m 64-bit words per key; output shape key.shape + (m,)."""
    idx = (np.arange(1, m + 1, dtype=np.uint64)) * _GOLDEN
    return _mix64(key[..., None] + idx)


def uniforms(seed, counter: int, m: int) -> np.ndarray:
    """m uniforms in [0, 1) for the ticket; shape seed.shape + (m,)."""
    key = ticket_key(seed, counter)
    return (_words(key, m) >> np.uint64(11)).astype(np.float64) / _U53


def normals(seed, counter: int, m: int) -> np.ndarray:
    """m standard normals for the ticket via Box-Muller."""
    pairs = (m + 1) // 2
    u = uniforms(seed, counter, 2 * pairs)
    u1 = 1.0 - u[..., 0::2]  # in (0, 1], keeps the log finite
    u2 = u[..., 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(u.shape, dtype=np.float64)
    out[..., 0::2] = r * np.cos(2.0 * np.pi * u2)
    out[..., 1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[..., :m]


def uniform_index(seed, counter: int, n: int) -> np.ndarray:
    """Uniform draw from {0, ..., n-1} for the ticket; shape = seed.shape."""
    u = uniforms(seed, counter, 1)[..., 0]
    return np.minimum((u * n).astype(np.int64), n - 1)
