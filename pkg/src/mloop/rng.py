"""Counter-based random streams.

Every random draw in the package comes from a generator keyed by
``(seed, stream, index)``. The generator is a Philox bit generator whose key is
the seed and whose starting counter encodes the stream and index, so sample
``i`` of a stream is the same no matter which worker produces it or in which
order the samples are generated.
"""

from __future__ import annotations

import numpy as np

# stream ids; one per consumer so streams never overlap
ENSEMBLE = 1
ANGLES = 2
ROTATION_MOMENTUM = 3
LOOP_SHAPE = 4
SCAN = 5
CONFIGS = 6

_MASK64 = (1 << 64) - 1


def generator(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Return the generator for sample ``index`` of ``stream`` under ``seed``."""
    if seed < 0 or stream < 0 or index < 0:
        raise ValueError("seed, stream and index must be non-negative")
    key = np.array([seed & _MASK64, (seed >> 64) & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, stream & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
