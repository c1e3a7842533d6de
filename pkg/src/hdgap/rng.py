"""Reproducible random streams.

All randomness in the package flows through Philox, a counter-based generator
whose output is fixed by (algorithm, key) and therefore stable across
platforms and numpy builds.  Substreams are derived from a root seed plus an
integer path, so replication b of a simulation always sees the same draws no
matter how work is scheduled.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

__all__ = ["substream", "check_seed"]


def check_seed(seed: int) -> int:
    """Validate a user-supplied seed (64-bit nonnegative integer)."""
    if not isinstance(seed, (int, np.integer)):
        raise ConfigurationError(f"seed must be an integer, got {seed!r}")
    if seed < 0 or seed >= 2**64:
        raise ConfigurationError(f"seed must be in [0, 2^64), got {seed}")
    return int(seed)


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for substream ``path`` of stream ``seed``.

    ``substream(seed, b)`` is the canonical per-replication stream; deeper
    paths (e.g. ``substream(seed, rep, stage)``) are available for nested
    structure.  The mapping (seed, path) -> stream is injective through
    numpy's SeedSequence, whose hashing is part of its stability contract.
    """
    ss = np.random.SeedSequence((check_seed(seed),) + tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
