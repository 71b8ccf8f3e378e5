"""
Counter-based random streams keyed by (seed, replicate, purpose).

Every draw in a study comes from a Philox generator whose key is derived from
the study seed, the replicate index and a purpose tag, so results do not depend
on execution order, thread count, or on which other purposes exist.
"""

import zlib

import numpy as np


def purpose_tag(purpose):
    return zlib.crc32(purpose.encode("utf-8")) & 0xFFFFFFFF


def make_stream(seed, replicate=0, purpose="default"):
    seed_seq = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(int(replicate), purpose_tag(purpose)),
    )
    return np.random.Generator(np.random.Philox(seed_seq))
