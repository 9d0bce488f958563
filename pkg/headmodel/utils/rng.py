"""
Random number generation.

All randomness flows through counter-based Philox generators keyed by the run
seed and an item key, so results do not depend on evaluation order or on the
number of worker threads.
"""

import zlib
from typing import Union

import numpy as np

Key = Union[int, str]

RNG_ALGORITHMS = ("philox",)


def _key_to_int(key: Key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"RNG keys must be non-negative, got {key}")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def make_rng(seed: int, *keys: Key, algorithm: str = "philox") -> np.random.Generator:
    """
    Create a generator for one work item.

    Args:
        seed: Run seed
        *keys: Item keys (integers or strings), e.g. ``make_rng(7, "subject", 3)``
        algorithm: Bit generator name; only ``"philox"`` is supported

    Returns:
        np.random.Generator: Independent stream for ``(seed, *keys)``
    """
    if algorithm not in RNG_ALGORITHMS:
        raise ValueError(f"Unknown RNG algorithm '{algorithm}', expected one of {RNG_ALGORITHMS}")
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
