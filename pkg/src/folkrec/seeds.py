"""Named random substreams derived from a single run seed.

Every source of randomness in a run (splitting, embedding init, batch
sampling) draws from its own generator so that adding draws to one stage
never perturbs another. Streams are keyed by a stable hash of their label.
"""

import hashlib

import numpy as np

__all__ = ["substream"]


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, label: str) -> np.random.Generator:
    """Return a generator for the named substream of ``seed``.

    The same (seed, label) pair always yields an identical stream;
    distinct labels yield statistically independent streams.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, _label_key(label)]))
