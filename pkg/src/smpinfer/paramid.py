"""Identity testing against a known reference via its effective support.

A reference with most of its mass on few symbols is testable with a budget
that scales with that effective size rather than the raw alphabet size.
This module measures the effective size through the l1/l2 K-functional,
folds the reference's light tail into a single bucket, and hands the folded
problem to a uniformity tester on a slightly enlarged domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constants as const
from .dist import Distribution, as_probs, pushforward
from .flatten import DOMAIN_FACTOR, goldreich_map, goldreich_sample
from .infer import SampleSource, TestVerdict, as_source
from .publiccoin import amplify_count, public_identity_test, vote_thresholds

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_BISECT_TOL = 1e-9


@dataclass(frozen=True)
class EffectiveSupport:
    """The minimal set of heaviest symbols covering the requested mass."""

    indices: tuple
    mass: float

    def __len__(self):
        return len(self.indices)


def effective_support(q, eps: float) -> EffectiveSupport:
    """Minimal prefix of the descending-sorted reference with mass >= 1-eps.

    Ties between equal probabilities go to the smaller index, so the result
    is deterministic.  eps=1 asks for mass >= 0 and returns the empty set.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    probs = as_probs(q)
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    target = 1.0 - eps
    if target <= 1e-12:
        return EffectiveSupport(indices=(), mass=0.0)
    take = int(np.searchsorted(cum, target - 1e-12)) + 1
    chosen = np.sort(order[:take])
    return EffectiveSupport(indices=tuple(int(i) for i in chosen),
                            mass=float(cum[take - 1]))


def _split_cost(arr: np.ndarray, t: float, lam: float) -> float:
    clipped = np.minimum(arr, lam)
    heavy = np.maximum(arr - lam, 0.0)
    return float(heavy.sum()) + t * math.sqrt(float(np.square(clipped).sum()))


def kappa(a, t: float) -> float:
    """K-functional between l1 and l2: inf over a = a' + a'' of
    ||a'||_1 + t ||a''||_2.

    The infimum is taken over the clipping family a''(lam) = min(a, lam),
    scanned on a grid over [0, max(a)] and refined by golden-section search
    around the best grid point.  The test suite guards this parametrization
    against a coordinatewise brute-force oracle.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValueError("argument must be a finite 1-d vector")
    if np.any(arr < 0):
        raise ValueError("argument must be entrywise non-negative")
    if t < 0:
        raise ValueError("t must be non-negative")
    amax = float(arr.max())
    if t == 0.0 or amax == 0.0:
        return 0.0
    knots = np.unique(np.concatenate([arr, np.linspace(0.0, amax, 129)]))
    costs = (
        np.maximum(arr[None, :] - knots[:, None], 0.0).sum(axis=1)
        + t * np.sqrt(np.square(np.minimum(arr[None, :], knots[:, None])).sum(axis=1))
    )
    best = int(np.argmin(costs))
    value = float(costs[best])
    lo = float(knots[max(best - 1, 0)])
    hi = float(knots[min(best + 1, knots.size - 1)])
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc = _split_cost(arr, t, c)
    fd = _split_cost(arr, t, d)
    for _ in range(90):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = _split_cost(arr, t, c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = _split_cost(arr, t, d)
        value = min(value, fc, fd)
    return value


def kappa_inverse(a, y: float) -> float:
    """Smallest t with kappa(a, t) >= y, located by bisection (1e-9 in t)."""
    arr = np.asarray(a, dtype=np.float64)
    if y <= 0.0:
        raise ValueError("y must be positive")
    l1 = float(np.abs(arr).sum())
    if y > l1 + 1e-9:
        raise ValueError(f"y={y} exceeds the supremum ||a||_1 = {l1}")
    lo, hi = 0.0, 1.0
    while kappa(arr, hi) < y:
        hi *= 2.0
        if hi > 2.0**60:
            raise ValueError("no finite t reaches the requested level")
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if kappa(arr, mid) >= y:
            hi = mid
        else:
            lo = mid
    return hi


def phi(q, gamma: float) -> float:
    """Effective support scale 2 * kappa_inverse(q, 1-gamma)^2; at most 2k."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    return 2.0 * kappa_inverse(as_probs(q), 1.0 - gamma) ** 2


def fold_labels(k: int, indices) -> np.ndarray:
    """Map each of [k] to its position in the support, the rest to one bucket."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= k or
                     np.unique(idx).size != idx.size):
        raise ValueError("support indices must be distinct members of [k]")
    labels = np.full(k, idx.size, dtype=np.int64)
    labels[idx] = np.arange(idx.size)
    return labels


def fold_to_support(q, indices) -> Distribution:
    """The reference on the folded alphabet: support symbols, then the tail."""
    probs = as_probs(q)
    labels = fold_labels(probs.size, indices)
    return pushforward(probs, labels, len(indices) + 1)


class _FoldedSource(SampleSource):
    """Folds raw samples to the support alphabet, then flattens them."""

    def __init__(self, inner: SampleSource, labels: np.ndarray, fmap):
        self.inner = inner
        self.labels = labels
        self.fmap = fmap

    def take(self, n, gen):
        raw = self.inner.take(n, gen)
        return goldreich_sample(self.fmap, self.labels[raw], gen)


def uniformity_runner(k_domain: int, ell: int, eps: float, delta: float,
                      p_stream, rng, constants=None) -> TestVerdict:
    """The public-coin identity tester specialized to a uniform reference."""
    return public_identity_test(Distribution.uniform(k_domain), k_domain, ell,
                                eps, delta, p_stream, rng, constants)


def make_uniformity_runner(constants=None):
    """Bind a constants table into the runner signature the protocol expects."""

    def runner(k_domain, ell, eps, delta, p_stream, rng):
        return uniformity_runner(k_domain, ell, eps, delta, p_stream, rng,
                                 constants)

    return runner


def parameterized_identity_protocol(q, eps: float, delta: float, ell: int,
                                    runner, p_stream, rng) -> TestVerdict:
    """Test p = q vs tv(p, q) > eps through a uniformity tester.

    Folds everything outside the eps-effective support of q into one bucket,
    flattens the folded reference to uniform, and runs the supplied
    uniformity tester at distance eps/3 on the 5(|S|+1)-symbol image.
    Folding costs at most min(p(tail), q(tail)) of the distance, so the far
    guarantee needs the discrepancy concentrated on the effective support.
    """
    probs = as_probs(q)
    support = effective_support(probs, eps)
    labels = fold_labels(probs.size, support.indices)
    fmap = goldreich_map(fold_to_support(probs, support.indices))
    source = _FoldedSource(as_source(p_stream), labels, fmap)
    domain = DOMAIN_FACTOR * (len(support) + 1)
    return runner(domain, ell, eps / 3.0, delta, source, rng)


def player_budget(q, eps: float, delta: float, ell: int, constants=None) -> int:
    """Worst-case player head count for the parameterized identity test.

    Uses the effective-support bound |S| <= phi(q, eps/9), so the actual run
    never needs more than this many players in expectation.
    """
    cfg = const.resolve(constants)
    theta1, theta2, _ = vote_thresholds(cfg.c)
    blocks = amplify_count(delta, theta1, theta2, constants)
    domain = DOMAIN_FACTOR * (phi(q, eps / 9.0) + 1.0)
    eps_run = eps / 3.0
    per_block = math.ceil(cfg.C_blk * domain / (2.0 ** (ell / 2.0) * eps_run**2))
    return blocks * per_block
