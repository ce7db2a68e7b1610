"""Finite discrete distributions and the handful of metrics the protocols need.

Distributions live on {0, ..., k-1} and are stored as float64 probability
vectors.  Construction tolerates rounding at the 1e-12 level and renormalizes,
so downstream exact-enumeration checks can rely on sums being exactly 1.0 up
to float arithmetic.
"""

from __future__ import annotations

import json

import numpy as np

from .rng import as_generator

_SUM_TOL = 1e-12


class Distribution:
    """A probability vector over {0, ..., k-1}.

    Entries must be nonnegative and sum to 1 within 1e-12; the stored vector
    is renormalized to sum exactly to 1.  The underlying array is read-only.
    """

    __slots__ = ("probs",)

    def __init__(self, probs):
        a = np.array(probs, dtype=np.float64)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("a distribution needs a nonempty 1-d probability vector")
        if not np.all(np.isfinite(a)):
            raise ValueError("probabilities must be finite")
        if np.any(a < 0):
            raise ValueError("probabilities must be nonnegative")
        s = a.sum()
        if abs(s - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {s!r}, expected 1 within {_SUM_TOL}")
        a /= s
        a.setflags(write=False)
        self.probs = a

    @property
    def k(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, k: int) -> "Distribution":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def point_mass(cls, k: int, index: int) -> "Distribution":
        p = np.zeros(k)
        p[index] = 1.0
        return cls(p)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def to_json(self) -> str:
        return json.dumps(list(self.probs))

    @classmethod
    def from_json(cls, text: str) -> "Distribution":
        return cls(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, Distribution) and np.array_equal(self.probs, other.probs)

    def __repr__(self):
        return f"Distribution({np.array2string(self.probs, precision=6)})"


def as_probs(p) -> np.ndarray:
    """Coerce a Distribution or array-like to a validated probability vector."""
    if isinstance(p, Distribution):
        return p.probs
    return Distribution(p).probs


def tv_distance(p, q) -> float:
    """Total variation distance, (1/2) * sum |p_i - q_i|."""
    a, b = as_probs(p), as_probs(q)
    if a.size != b.size:
        raise ValueError("distributions must share a domain")
    return 0.5 * float(np.abs(a - b).sum())


def l2_distance(p, q) -> float:
    """Euclidean distance between the probability vectors."""
    a, b = as_probs(p), as_probs(q)
    if a.size != b.size:
        raise ValueError("distributions must share a domain")
    return float(np.sqrt(((a - b) ** 2).sum()))


def paninski_family(k: int, eps: float, signs) -> Distribution:
    """The paired-perturbation family used as worst-case far instances.

    Consecutive pairs (2i, 2i+1) get probabilities (1 +/- 2*eps)/k, with the
    sign of the first element of pair i given by signs[i].  Each member is at
    total variation distance exactly eps from uniform.

    signs may contain +1/-1 (or booleans, True meaning +1) and must have
    length k/2.
    """
    if k % 2 != 0:
        raise ValueError("k must be even")
    if not 0 <= eps <= 0.5:
        raise ValueError("eps must lie in [0, 1/2]")
    s = np.asarray(signs)
    if s.size != k // 2:
        raise ValueError(f"need {k // 2} signs, got {s.size}")
    if s.dtype == bool:
        s = np.where(s, 1, -1)
    s = s.astype(np.float64)
    if not np.all(np.abs(s) == 1.0):
        raise ValueError("signs must be +1 or -1")
    p = np.empty(k)
    p[0::2] = (1.0 + 2.0 * eps * s) / k
    p[1::2] = (1.0 - 2.0 * eps * s) / k
    return Distribution(p)


def sample_iid(p, n: int, rng) -> np.ndarray:
    """Draw n i.i.d. samples (int64 indices) by inverse CDF.

    Uses one uniform double per sample, consumed in order, which keeps the
    draw count predictable for reproducibility across implementations.
    """
    gen = as_generator(rng)
    cum = np.cumsum(as_probs(p))
    u = gen.random(int(n))
    idx = np.searchsorted(cum, u, side="right")
    # Guard the measure-zero edge where accumulated rounding puts cum[-1] < u.
    return np.minimum(idx, cum.size - 1).astype(np.int64)


def pushforward(p, labels, num_labels: int | None = None) -> Distribution:
    """Image distribution of p under the map i -> labels[i].

    labels is an int array of length k with values in [0, num_labels); when
    num_labels is omitted it is inferred as max(labels) + 1.
    """
    a = as_probs(p)
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != (a.size,):
        raise ValueError("labels must assign one class per domain element")
    if np.any(lab < 0):
        raise ValueError("labels must be nonnegative")
    upper = int(lab.max()) + 1
    total = upper if num_labels is None else int(num_labels)
    if total < upper:
        raise ValueError("num_labels smaller than the largest label")
    return Distribution(np.bincount(lab, weights=a, minlength=total))
