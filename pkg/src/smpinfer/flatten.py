"""Flattening a known reference distribution to exactly uniform.

The map here sends a reference q on [k] to the uniform distribution on [5k]
exactly, while any p at total variation eps from q lands at least 16*eps/25
from uniform.  Construction: mix a fifth of uniform into the symbol
(x -> x' = x w.p. 4/5, uniform otherwise), then route x' = i to one of
m_i = 4k*q_i + 1 rounded-down dedicated targets with probability
m_i / (4k*q_i + 1), and to a shared leftover range otherwise.  Every target
receives mass exactly 1/(5k) when the input is q itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import Distribution, as_probs
from .rng import as_generator

MIX_WEIGHT = 0.2  # uniform-mixing weight; 1/5 minimizes the domain blowup
DOMAIN_FACTOR = 5


@dataclass(frozen=True)
class GoldreichMap:
    """Precomputed routing table for one reference distribution.

    Attributes
    ----------
    k : source alphabet size; the image lives on [5k].
    mixed : the mixed reference (1 - 1/5) q + (1/5) u_k.
    block_start, block_size : dedicated target ranges per source symbol,
        block_size[i] = floor(5k * mixed[i]) >= 1.
    leftover_start : first index of the shared leftover range (size
        5k - sum(block_size), possibly zero).
    accept_prob : probability of routing into the dedicated block.
    """

    k: int
    mixed: np.ndarray
    block_start: np.ndarray
    block_size: np.ndarray
    leftover_start: int
    accept_prob: np.ndarray

    @property
    def image_size(self) -> int:
        return DOMAIN_FACTOR * self.k

    @property
    def leftover_size(self) -> int:
        return self.image_size - self.leftover_start


def goldreich_map(q) -> GoldreichMap:
    probs = as_probs(q)
    k = probs.size
    mixed = (1.0 - MIX_WEIGHT) * probs + MIX_WEIGHT / k
    scaled = DOMAIN_FACTOR * k * mixed
    size = np.floor(scaled + 1e-9).astype(np.int64)  # = 4k q_i + 1 up to rounding
    start = np.concatenate(([0], np.cumsum(size)[:-1]))
    return GoldreichMap(
        k=k,
        mixed=mixed,
        block_start=start,
        block_size=size,
        leftover_start=int(size.sum()),
        # mathematically <= 1; the clamp only absorbs float dust near exact integers
        accept_prob=np.minimum(size / scaled, 1.0),
    )


def goldreich_sample(fmap: GoldreichMap, x, rng) -> np.ndarray:
    """Push samples of the source through the randomized map.

    x may be a scalar or an int array; the result matches its shape.  Three
    uniforms are consumed per sample (mixing, routing, position), in that
    order, sample-major.
    """
    gen = as_generator(rng)
    xs = np.atleast_1d(np.asarray(x, dtype=np.int64))
    n = xs.size
    u = gen.random((n, 3))
    mixed_in = np.where(
        u[:, 0] < MIX_WEIGHT,
        np.minimum((u[:, 0] / MIX_WEIGHT * fmap.k).astype(np.int64), fmap.k - 1),
        xs,
    )
    # Reusing u[:,0] for the replacement symbol keeps the draw count at 3 per
    # sample; conditioned on u[:,0] < MIX_WEIGHT it is uniform on [k].
    accept = u[:, 1] < fmap.accept_prob[mixed_in]
    inside = fmap.block_start[mixed_in] + np.minimum(
        (u[:, 2] * fmap.block_size[mixed_in]).astype(np.int64),
        fmap.block_size[mixed_in] - 1,
    )
    leftover = fmap.leftover_size
    if leftover > 0:
        outside = fmap.leftover_start + np.minimum(
            (u[:, 2] * leftover).astype(np.int64), leftover - 1
        )
    else:
        outside = inside  # routing never rejects when every accept_prob is 1
    out = np.where(accept, inside, outside)
    return out if np.ndim(x) else np.int64(out[0])


def goldreich_pushforward(fmap: GoldreichMap, p) -> Distribution:
    """Exact image distribution of p under the map (mass-level computation)."""
    probs = as_probs(p)
    if probs.size != fmap.k:
        raise ValueError("distribution does not match the map's source alphabet")
    mixed = (1.0 - MIX_WEIGHT) * probs + MIX_WEIGHT / fmap.k
    out = np.empty(fmap.image_size)
    per_target = mixed * fmap.accept_prob / fmap.block_size
    for i in range(fmap.k):
        s = fmap.block_start[i]
        out[s : s + fmap.block_size[i]] = per_target[i]
    leftover = fmap.leftover_size
    if leftover > 0:
        rejected = float((mixed * (1.0 - fmap.accept_prob)).sum())
        out[fmap.leftover_start :] = max(rejected, 0.0) / leftover
    return Distribution(out)
