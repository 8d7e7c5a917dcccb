"""Seeded random streams.

Every stochastic choice in the package (weight init, initial noise, cluster
seeding, representative picks) draws from its own named stream so that adding
draws to one purpose never perturbs another. Streams are derived from a base
seed plus a purpose string, so a run is reproducible from its config alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Canonical purpose names used by the library. Free-form names are allowed;
# these exist so call sites agree on spelling.
STREAM_WEIGHTS = "weights"
STREAM_NOISE = "noise"
STREAM_CLUSTERING = "clustering"
STREAM_SELECTION = "selection"


def _stream_key(name: str) -> int:
    # Stable across platforms and Python builds (unlike hash()).
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class SeededRng:
    """Deterministic random source: one PCG64 generator per (seed, stream)."""

    def __init__(self, seed: int, stream: str = "root"):
        if not isinstance(seed, (int, np.integer)) or seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
        self.seed = int(seed)
        self.stream = stream
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(_stream_key(stream),))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def substream(self, name: str) -> "SeededRng":
        """Independent stream scoped under the same base seed."""
        return SeededRng(self.seed, f"{self.stream}/{name}")

    def standard_normal(self, *shape: int) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=np.float64)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size)

    def choice_weighted(self, n: int, weights: np.ndarray) -> int:
        """Draw an index in [0, n) with probability proportional to weights."""
        total = float(weights.sum())
        if not np.isfinite(total) or total <= 0.0:
            raise ValueError("weights must have a positive finite sum")
        return int(self._gen.choice(n, p=np.asarray(weights, dtype=np.float64) / total))

    def choice_no_replace(self, n: int, size: int) -> np.ndarray:
        """Uniform sample of ``size`` distinct indices from [0, n), ascending."""
        if size > n:
            raise ValueError(f"cannot draw {size} distinct values from {n}")
        picks = self._gen.choice(n, size=size, replace=False)
        return np.sort(picks.astype(np.intp))
