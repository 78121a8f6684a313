"""Seed derivation shared by the synthesizer and the experiment runner."""
import hashlib

import numpy as np


def derive_seed(master_seed, *parts):
    """Derive a 63-bit seed from a master seed and a tuple of factor values.

    The seed is the first eight bytes (big endian) of
    ``sha256("<master>|<part0>|<part1>|...")`` with the top bit cleared, so
    any cell of an experiment grid can be rerun on its own.
    """
    key = "|".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def make_rng(seed):
    return np.random.default_rng(int(seed))
