"""Seeded random streams.

Every stream is a Philox4x64-10 counter-based generator keyed directly by the
pair ``(seed, stream_id)``; no seed hashing is involved, so a stream can be
reproduced from its two integers alone (in any language with a Philox
implementation).  Distinct ``stream_id`` values give independent streams for
the same seed.
"""
import numpy as np

MASK64 = (1 << 64) - 1

# stream ids used by the samplers
STREAM_INCREMENTS = 0
STREAM_CHAIN = 1
STREAM_PARAMETRIC = 16


def make_rng(seed, stream=0):
    return np.random.Generator(np.random.Philox(key=[int(seed) & MASK64, int(stream) & MASK64]))
