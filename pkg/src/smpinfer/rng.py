"""Deterministic stream management for every stochastic routine in the package.

All randomness flows through :class:`RngStream`, a thin wrapper around numpy's
PCG64 that is addressed by ``(master_seed, stream_id)``.  Child seeds are
produced by a fixed 64-bit mixing function (splitmix64 finalizer, see
:func:`derive_seed`), so any scheduler that hands out stable stream ids
reproduces results bit for bit, regardless of worker count or interleaving.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    """One splitmix64 finalizer round (Steele et al. mixing constants)."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, stream_id: int) -> int:
    """Mix a (master_seed, stream_id) pair into a 64-bit child seed.

    The exact formula, normative for reproducibility:

        child = splitmix64( splitmix64(master_seed) XOR (stream_id + GOLDEN) )

    with GOLDEN = 0x9E3779B97F4A7C15 and all arithmetic mod 2**64.  Both
    arguments may be any Python int; they are reduced mod 2**64 first.
    """
    a = _splitmix64(master_seed & _MASK64)
    return _splitmix64(a ^ ((stream_id + _GOLDEN) & _MASK64))


class RngStream:
    """A named, reproducible source of numpy randomness.

    Parameters
    ----------
    master_seed : int
        Seed shared by a whole experiment.
    stream_id : int
        Index of this stream within the experiment (default 0).
    """

    __slots__ = ("master_seed", "stream_id", "_generator")

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self._generator = None

    @property
    def seed(self) -> int:
        return derive_seed(self.master_seed, self.stream_id)

    @property
    def generator(self) -> np.random.Generator:
        """The numpy Generator backing this stream (created lazily, cached)."""
        if self._generator is None:
            self._generator = np.random.Generator(np.random.PCG64(self.seed))
        return self._generator

    def substream(self, index: int) -> "RngStream":
        """Child stream number `index`, independent of this one and its siblings."""
        return RngStream(self.seed, index)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or a bare numpy Generator and return the Generator."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
