"""Counter-based random number generation.

Every random quantity in this package is a pure function of a 64-bit key
and a 64-bit counter, so simulation output depends only on (seed, node
index) and is identical regardless of evaluation order or parallelism.
The generator is the SplitMix64 stream: the value at position ``c`` of the
stream keyed by ``k`` is ``mix64(k + (c+1)*GOLDEN)`` with Stafford's mix13
finalizer.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# counters >= 2**62 are reserved for draws that sit outside the per-node
# counter layout (e.g. the root value of a simulated tree)
ROOT_COUNTER = np.uint64(1) << np.uint64(62)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def stream_bits(key, counters) -> np.ndarray:
    """Raw 64-bit outputs of the keyed stream at the given counter positions.

    ``key`` and ``counters`` broadcast against each other, so a column of
    replicate keys against a row of counters yields a full matrix of draws.
    """
    if isinstance(key, (int, np.integer)):
        key = np.uint64(int(key) & 0xFFFFFFFFFFFFFFFF)
    else:
        key = np.asarray(key, dtype=np.uint64)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(key + (c + np.uint64(1)) * _GOLDEN)


def stream_uniforms(key, counters) -> np.ndarray:
    """Uniforms on the open interval (0, 1) at the given counter positions.

    Uses the top 53 bits, offset by half an ulp so 0.0 and 1.0 never occur.
    """
    bits = stream_bits(key, counters)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def derive_key(key: int, index: int) -> int:
    """Derive the key of an independent substream (replicate ``index``)."""
    return int(stream_bits(key, np.uint64(index & 0xFFFFFFFFFFFFFFFF)))
