"""Deterministic vector arithmetic and reproducible counter-based randomness.

Parameter vectors are plain 1-D float64 numpy arrays throughout the package.
Randomness comes from Philox streams keyed by (master_seed, stream_id), so a
run is reproducible independent of scheduling: two streams with the same key
produce bit-identical draws, and distinct stream ids never share state.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "RngStream",
    "derive_stream",
    "gaussian_vector",
    "ensure_finite",
    "norm2",
    "mix_seed",
]

_U64 = np.uint64


class RngStream:
    """Counter-based random stream identified by (master_seed, stream_id).

    Deriving the same (master_seed, stream_id) twice yields bit-identical
    sequences; draws in blocks of any size split the same underlying sequence.
    """

    __slots__ = ("master_seed", "stream_id", "_gen")

    def __init__(self, master_seed: int, stream_id: int):
        if master_seed < 0 or stream_id < 0:
            raise ValueError("master_seed and stream_id must be non-negative")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        key = np.array([self.master_seed, self.stream_id], dtype=_U64)
        self._gen = Generator(Philox(key=key))

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws of the given shape (float64)."""
        return self._gen.standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        """Uniform draws in [0, 1) of the given shape (float64)."""
        return self._gen.random(shape)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


def derive_stream(master_seed: int, stream_id: int) -> RngStream:
    """Create the stream keyed by (master_seed, stream_id).

    Independent instances with the same key replay the same draw sequence,
    which is what lets parallel workers share a logical stream safely: each
    worker derives its own copy instead of sharing generator state.
    """
    return RngStream(master_seed, stream_id)


def gaussian_vector(stream: RngStream, dim: int, std: float) -> np.ndarray:
    """dim i.i.d. samples from N(0, std^2); std = 0 gives the exact zero vector."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if std == 0.0:
        return np.zeros(dim)
    return std * stream.normal(dim)


def norm2(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


def ensure_finite(x, what: str = "value"):
    """Raise ValueError if x contains NaN/Inf. Returns x unchanged."""
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite {what}")
    return x


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(*parts: int) -> int:
    """Fold integers into one u64 seed (splitmix64 chain).

    Used to derive sub-seeds for nested deterministic structure (instance i of
    a Monte-Carlo sweep, replicate r of an experiment) without manual stream
    bookkeeping.
    """
    acc = 0
    for p in parts:
        acc = _splitmix64((acc ^ (int(p) & _MASK64)) & _MASK64)
    return acc
