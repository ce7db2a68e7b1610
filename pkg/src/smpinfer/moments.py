"""Moment diagnostics for the induced deviation vector Z.

Given a zero-sum perturbation delta over [k] and a random partition into L
parts, Z_r = sum_i delta_i 1{Y_i = r} is the deviation the flattened tester
actually sees.  This module estimates and predicts its low moments, the
quadruple-sum identities they rest on, and the anticoncentration band that
turns E||Z||^2 into a detection probability.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gf2m import field
from .publiccoin import PartitionAssignment
from .rng import as_generator

SAMPLERS = ("balanced", "fourwise")
MIN_LAB_TRIALS = 10_000


def as_perturbation(delta, tol: float = 1e-9) -> np.ndarray:
    arr = np.asarray(delta, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValueError("perturbation must be a finite 1-d vector")
    if abs(arr.sum()) > tol:
        raise ValueError("perturbation entries must sum to zero")
    return arr


def z_vector(delta, part: PartitionAssignment) -> np.ndarray:
    """Z_r = sum of delta over part r; sums to zero since delta does."""
    arr = as_perturbation(delta)
    if arr.size != part.domain_size:
        raise ValueError("perturbation and partition sizes differ")
    return np.bincount(part.labels, weights=arr, minlength=part.num_parts)


def collision_prob_exact(k: int, num_parts: int) -> float:
    """P[Y_1 = Y_2] under a uniform balanced partition: (k/L - 1)/(k - 1).

    Validated against exhaustive enumeration of all balanced partitions for
    k <= 10 in the test suite.
    """
    if k % num_parts:
        raise ValueError(f"{num_parts} does not divide {k}")
    if k == 1:
        return 1.0
    return (k / num_parts - 1.0) / (k - 1.0)


def sigma_sums(delta) -> tuple[float, float, float, float]:
    """Quadruple sums of delta products grouped by distinct-index count.

    Over all index quadruples (a,b,c,d) in [k]^4, Sigma_j collects the
    products delta_a*delta_b*delta_c*delta_d whose quadruple uses exactly j
    distinct indices.  Closed forms (using sum(delta) = 0):

        Sigma_1 = ||d||_4^4
        Sigma_2 = 3||d||_2^4 - 7||d||_4^4
        Sigma_3 = 12||d||_4^4 - 6||d||_2^4
        Sigma_4 = -(Sigma_1 + Sigma_2 + Sigma_3)
    """
    arr = as_perturbation(delta)
    l2sq = float(np.square(arr).sum())
    l44 = float((arr**4).sum())
    s1 = l44
    s2 = 3.0 * l2sq * l2sq - 7.0 * l44
    s3 = 12.0 * l44 - 6.0 * l2sq * l2sq
    return s1, s2, s3, -(s1 + s2 + s3)


def fourwise_z_samples(delta, num_parts: int, trials: int, rng) -> np.ndarray:
    """Z vectors under 4-wise independent labels from random GF seeds."""
    arr = as_perturbation(delta)
    k = arr.size
    ell = int(math.log2(num_parts))
    if 1 << ell != num_parts:
        raise ValueError("the 4-wise sampler needs a power-of-two part count")
    m = math.ceil(math.log2(k)) + ell
    gf = field(m)
    gen = as_generator(rng)
    points = np.arange(k, dtype=np.int64)
    out = np.empty((trials, num_parts))
    step = max(1, (1 << 22) // max(k, 1))
    for start in range(0, trials, step):
        take = min(step, trials - start)
        coeffs = gen.integers(0, 1 << m, size=(take, 4), dtype=np.int64)
        vals = coeffs[:, 3][:, None]
        for j in (2, 1, 0):
            vals = gf.mul(vals, points[None, :]) ^ coeffs[:, j][:, None]
        labels = vals >> (m - ell)
        for r in range(num_parts):
            out[start : start + take, r] = np.where(labels == r, arr, 0.0).sum(axis=1)
    return out


def _z_samples(delta, k: int, num_parts: int, sampler: str, trials: int, gen) -> np.ndarray:
    if sampler == "balanced":
        if k % num_parts:
            raise ValueError(f"{num_parts} does not divide {k}")
        return _kernels.balanced_z(np.asarray(delta, dtype=np.float64),
                                   num_parts, trials, gen)
    if sampler == "fourwise":
        return fourwise_z_samples(delta, num_parts, trials, gen)
    raise ValueError(f"sampler must be one of {SAMPLERS}")


@dataclass(frozen=True)
class MomentReport:
    """Monte Carlo moment estimates next to their closed-form predictions."""

    mean_per_part: tuple
    mean_sq_norm: float
    mean_fourth_norm: float
    predicted_sq: float
    predicted_fourth_bound: float
    trials: int
    std_errors: dict

    def to_json(self) -> str:
        payload = {
            "mean_per_part": list(self.mean_per_part),
            "mean_sq_norm": self.mean_sq_norm,
            "mean_fourth_norm": self.mean_fourth_norm,
            "predicted_sq": self.predicted_sq,
            "predicted_fourth_bound": self.predicted_fourth_bound,
            "trials": self.trials,
            "std_errors": self.std_errors,
        }
        return json.dumps(payload, indent=2)


def moment_lab(delta, k: int, num_parts: int, sampler: str, trials: int, rng) -> MomentReport:
    """Estimate E[Z_r], E||Z||^2, E||Z||^4 and report predictions beside them.

    predicted_sq = P[Y_1 != Y_2] * ||delta||^2, with the collision probability
    taken from collision_prob_exact for the balanced sampler and 1 - 1/L for
    the 4-wise one.  predicted_fourth_bound = 16||delta||^4 is an upper
    bound, not an equality.
    """
    arr = as_perturbation(delta)
    if arr.size != k:
        raise ValueError("perturbation does not live on [k]")
    if trials < MIN_LAB_TRIALS:
        raise ValueError(f"need at least {MIN_LAB_TRIALS} trials for stable gates")
    gen = as_generator(rng)
    zs = _z_samples(arr, k, num_parts, sampler, trials, gen)
    sq = np.square(zs).sum(axis=1)
    fourth = sq * sq
    l2sq = float(np.square(arr).sum())
    if sampler == "balanced":
        collide = collision_prob_exact(k, num_parts)
    else:
        collide = 1.0 / num_parts
    report = MomentReport(
        mean_per_part=tuple(zs.mean(axis=0)),
        mean_sq_norm=float(sq.mean()),
        mean_fourth_norm=float(fourth.mean()),
        predicted_sq=(1.0 - collide) * l2sq,
        predicted_fourth_bound=16.0 * l2sq * l2sq,
        trials=trials,
        std_errors={
            "per_part": list(zs.std(axis=0, ddof=1) / math.sqrt(trials)),
            "sq_norm": float(sq.std(ddof=1) / math.sqrt(trials)),
            "fourth_norm": float(fourth.std(ddof=1) / math.sqrt(trials)),
        },
    )
    return report


def anticoncentration_estimate(delta, k: int, num_parts: int, trials: int,
                               threshold: float, rng) -> float:
    """Empirical P[||Z||^2 > threshold] over random balanced partitions."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    arr = as_perturbation(delta)
    if arr.size != k:
        raise ValueError("perturbation does not live on [k]")
    gen = as_generator(rng)
    zs = _kernels.balanced_z(arr, num_parts, trials, gen)
    sq = np.square(zs).sum(axis=1)
    return float((sq > threshold).mean())


def anticoncentration_band(k: int, num_parts: int, alpha: float) -> tuple[float, float]:
    """The band [P - 4 sqrt(2 alpha), min(4/sqrt(alpha), P/alpha)] that
    ||Z||^2 / ||delta||^2 lands in with probability >= alpha, where P is the
    non-collision probability of the balanced partition."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    p_neq = 1.0 - collision_prob_exact(k, num_parts)
    return (
        p_neq - 4.0 * math.sqrt(2.0 * alpha),
        min(4.0 / math.sqrt(alpha), p_neq / alpha),
    )
