"""Public-coin identity testing through random flattening.

Players share a random partition of the flattened domain into L = 2**ell
parts and report only their sample's part label (ell bits).  Per block the
referee runs an l2 identity test on the label counts; block verdicts are
amplified by a threshold vote.  Two partition samplers are provided: fully
random balanced partitions, and a randomness-efficient 4-wise independent
one built from degree-3 polynomials over GF(2^m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constants as const
from .dist import Distribution, as_probs
from .flatten import goldreich_map, goldreich_sample
from .gf2m import field
from .infer import TestVerdict, as_source
from .rng import as_generator


@dataclass(frozen=True)
class PartitionAssignment:
    """Labels in [L] for each domain element; balanced means exact L-fold split."""

    labels: np.ndarray
    num_parts: int
    balanced: bool

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a nonempty 1-d sequence")
        if labels.min() < 0 or labels.max() >= self.num_parts:
            raise ValueError("labels out of range")
        if self.balanced:
            counts = np.bincount(labels, minlength=self.num_parts)
            if labels.size % self.num_parts or np.any(counts != labels.size // self.num_parts):
                raise ValueError("balanced assignment requires equal part sizes")

    @property
    def domain_size(self) -> int:
        return self.labels.size


def random_balanced_partition(k: int, num_parts: int, rng) -> PartitionAssignment:
    """Uniform over balanced partitions: permute the fixed label multiset."""
    if k % num_parts:
        raise ValueError(f"{num_parts} does not divide the domain size {k}")
    gen = as_generator(rng)
    template = np.repeat(np.arange(num_parts, dtype=np.int64), k // num_parts)
    return PartitionAssignment(labels=gen.permutation(template),
                               num_parts=num_parts, balanced=True)


def induced(p, part: PartitionAssignment) -> Distribution:
    """The part-mass distribution on [L]: result_r = p(S_r)."""
    probs = as_probs(p)
    if probs.size != part.domain_size:
        raise ValueError("distribution and partition sizes differ")
    return Distribution(
        np.bincount(part.labels, weights=probs, minlength=part.num_parts)
    )


def l2_identity_test(counts, reference, gamma_prime, delta_prime, mean, rng=None) -> TestVerdict:
    """Known-reference l2 test on Poissonized counts.

    counts[r] ~ Poisson(mean * p_r) independently (Poissonized sampling: the
    caller draws the block's sample count from Poisson(mean)).  The statistic
    S = sum_r [(counts_r - mean*q_r)^2 - counts_r] has E[S] = mean^2 *
    ||p - q||_2^2 exactly; accept iff S <= mean^2 * gamma_prime^2 / 2.
    Failure probability <= delta_prime at the l2_required_samples budget.

    rng is accepted for interface uniformity; the statistic is deterministic.
    """
    ns = np.asarray(counts, dtype=np.float64)
    q = as_probs(reference)
    if not np.all(np.isfinite(ns)) or ns.ndim != 1:
        raise ValueError("counts must be a finite 1-d vector")
    if ns.size != q.size:
        raise ValueError("counts and reference sizes differ")
    if not (np.isfinite(mean) and mean > 0 and np.isfinite(gamma_prime)):
        raise ValueError("mean and gamma_prime must be finite, mean > 0")
    stat = float((np.square(ns - mean * q) - ns).sum())
    threshold = mean * mean * gamma_prime * gamma_prime / 2.0
    return TestVerdict(accept=stat <= threshold, statistic=stat, threshold=threshold)


def l2_required_samples(reference_l2_norm: float, gamma_prime: float,
                        delta_prime: float, constants=None) -> int:
    """Poisson mean making the l2 test delta_prime-reliable (rule of thumb)."""
    cfg = const.resolve(constants)
    return math.ceil(
        cfg.C_l2 * reference_l2_norm * math.log(1.0 / delta_prime) / gamma_prime**2
    )


def amplify(bits, theta1: float, theta2: float) -> TestVerdict:
    """Threshold vote over independent per-block verdicts.

    Sound when null blocks accept w.p. >= theta1 and far blocks accept w.p.
    <= 1 - theta2; requires theta1 > 1 - theta2.  Accepts iff the accept
    fraction is at least the midpoint (theta1 + 1 - theta2)/2 (note: the
    accepting side is >= threshold, unlike the counting tests).
    """
    if theta1 <= 1.0 - theta2:
        raise ValueError("need theta1 > 1 - theta2 for a usable vote gap")
    votes = np.asarray(bits, dtype=np.float64)
    if votes.size == 0:
        raise ValueError("no block verdicts to amplify")
    stat = float(votes.mean())
    cut = (theta1 + 1.0 - theta2) / 2.0
    return TestVerdict(accept=stat >= cut, statistic=stat, threshold=cut)


def amplify_count(delta: float, theta1: float, theta2: float, constants=None) -> int:
    """Blocks needed to push both amplified error sides below delta."""
    cfg = const.resolve(constants)
    gap = theta1 + theta2 - 1.0
    return math.ceil(cfg.C_amp * math.log2(1.0 / delta) / (gap * gap))


def vote_thresholds(c: float) -> tuple[float, float, float]:
    """(theta1, theta2, delta_prime) for the balanced-partition tester.

    delta_prime = c/(2(1+c)) follows the soundness proof; the algorithm text
    prints c/(2(1-c)), which is not used here.
    """
    return (
        (1.0 + c / 2.0) / (1.0 + c),
        (c + c * c / 2.0) / (1.0 + c),
        c / (2.0 * (1.0 + c)),
    )


def vote_thresholds_fourwise(c: float) -> tuple[float, float, float]:
    """(theta1, theta2, delta_prime) for the 4-wise variant with its coin gate."""
    return (
        (c * c - 2.0 * c + 8.0) / (4.0 * (c + 2.0)),
        2.0 * c / (c + 2.0),
        c / (2.0 + c),
    )


def block_player_count(k: int, ell: int, eps: float, constants=None) -> int:
    """Players per block: ceil(C_blk * k / (2**(ell/2) * eps**2))."""
    cfg = const.resolve(constants)
    return math.ceil(cfg.C_blk * k / (2.0 ** (ell / 2.0) * eps * eps))


def padded_size(n: int, num_parts: int) -> int:
    """Next multiple of num_parts at or above n (zero-mass padding symbols)."""
    return -(-n // num_parts) * num_parts


def test_gamma(k: int, ell: int, eps: float) -> float:
    """l2 distance scale on the flattened domain: eps * sqrt(L) / sqrt(10k)."""
    return eps * math.sqrt(2.0**ell) / math.sqrt(10.0 * k)


@dataclass(frozen=True)
class PublicTestReport:
    verdict: TestVerdict
    players_used: int
    blocks: int
    block_size_mean: float
    public_coins_used: int


def _padded_image_reference(fmap, part: PartitionAssignment) -> np.ndarray:
    """Exact induced reference: the flattened q is uniform on its 5k real
    targets and zero on padding, so part r holds (#real targets in S_r)/5k.
    Equals u_L exactly whenever L divides 5k (no padding)."""
    real = np.bincount(part.labels[: fmap.image_size], minlength=part.num_parts)
    return real / fmap.image_size


def public_identity_test_report(q, k: int, ell: int, eps: float, delta: float,
                                p_stream, rng, constants=None) -> PublicTestReport:
    """Balanced-partition public tester, player by player.

    Per block: draw the player count from Poisson(m), flatten each player's
    sample, share a fresh balanced partition of the padded [5k] domain, count
    labels, and l2-test against the exact induced reference.  Block verdicts
    are amplified with the c-derived thresholds.
    """
    cfg = const.resolve(constants)
    gen = as_generator(rng)
    source = as_source(p_stream)
    probs = as_probs(q)
    if probs.size != k:
        raise ValueError("reference does not live on [k]")
    num_parts = 1 << ell
    fmap = goldreich_map(probs)
    pad = padded_size(fmap.image_size, num_parts)
    gamma = test_gamma(k, ell, eps)
    theta1, theta2, delta_prime = vote_thresholds(cfg.c)
    m = block_player_count(k, ell, eps, cfg)
    blocks = amplify_count(delta, theta1, theta2, cfg)

    bits = np.empty(blocks, dtype=np.int64)
    players_used = 0
    for j in range(blocks):
        part = random_balanced_partition(pad, num_parts, gen)
        n_j = int(gen.poisson(m))
        samples = np.asarray(source.take(n_j, gen), dtype=np.int64)
        ys = goldreich_sample(fmap, samples, gen) if n_j else np.empty(0, dtype=np.int64)
        counts = np.bincount(part.labels[ys], minlength=num_parts)
        reference = _padded_image_reference(fmap, part)
        verdict = l2_identity_test(counts, reference, gamma, delta_prime, mean=m)
        bits[j] = verdict.accept
        players_used += n_j
    final = amplify(bits, theta1, theta2)
    # The balanced sampler's shared randomness is whole partitions, not a
    # metered bit budget; only the 4-wise variant reports a coin count.
    return PublicTestReport(verdict=final, players_used=players_used, blocks=blocks,
                            block_size_mean=float(m), public_coins_used=0)


def public_identity_test(q, k: int, ell: int, eps: float, delta: float,
                         p_stream, rng, constants=None) -> TestVerdict:
    return public_identity_test_report(q, k, ell, eps, delta, p_stream, rng,
                                       constants).verdict


def fourwise_assignment(k_prime: int, ell: int, seed_bits) -> PartitionAssignment:
    """4-wise independent labels: top ell bits of P(a_i) for a random
    degree-<=3 polynomial P over GF(2^m), m = ceil(log2 k_prime) + ell.

    seed_bits must hold exactly 4m bits: four m-bit coefficient words
    (constant term first, each word most-significant bit first).  Evaluation
    points are a_i = i.  Any four distinct points have an exactly uniform
    joint label law; a degree-0 seed labels every element identically.
    """
    bits = np.asarray(seed_bits, dtype=np.int64)
    m = math.ceil(math.log2(k_prime)) + ell
    if bits.ndim != 1 or bits.size != 4 * m or not np.isin(bits, (0, 1)).all():
        raise ValueError(f"seed must be exactly {4 * m} bits for k'={k_prime}, ell={ell}")
    weights = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)
    coeffs = [int(bits[j * m : (j + 1) * m] @ weights) for j in range(4)]
    gf = field(m)
    values = gf.poly_eval(coeffs, np.arange(k_prime, dtype=np.int64))
    labels = values >> (m - ell)
    return PartitionAssignment(labels=labels, num_parts=1 << ell, balanced=False)


def fourwise_seed_bits(k_prime: int, ell: int, rng) -> np.ndarray:
    """Draw the 4m public coins for one fourwise_assignment."""
    m = math.ceil(math.log2(k_prime)) + ell
    gen = as_generator(rng)
    return gen.integers(0, 2, size=4 * m, dtype=np.int64)


def norm_gate_bound(num_parts: int) -> float:
    """The reference-norm gate: run the l2 test only if ||q~||_2 <= 2/sqrt(L)."""
    return 2.0 / math.sqrt(num_parts)


def public_identity_test_efficient_report(q, k: int, ell: int, eps: float,
                                          delta: float, p_stream, rng,
                                          constants=None) -> PublicTestReport:
    """Randomness-efficient variant: 4-wise partitions from short seeds.

    Per block the referee derives the partition from 4(ceil(log2 5k) + ell)
    public coins, computes the induced reference q~ exactly, and either runs
    the l2 test (when ||q~||_2 <= 2/sqrt(L)) or records a private fair coin.
    Total public coins consumed: blocks * 4(ceil(log2 5k) + ell).
    """
    cfg = const.resolve(constants)
    gen = as_generator(rng)
    source = as_source(p_stream)
    probs = as_probs(q)
    if probs.size != k:
        raise ValueError("reference does not live on [k]")
    num_parts = 1 << ell
    fmap = goldreich_map(probs)
    k5 = fmap.image_size
    gamma = test_gamma(k, ell, eps)
    theta1, theta2, delta_prime = vote_thresholds_fourwise(cfg.c)
    m = block_player_count(k, ell, eps, cfg)
    blocks = amplify_count(delta, theta1, theta2, cfg)
    gate = norm_gate_bound(num_parts)

    bits = np.empty(blocks, dtype=np.int64)
    players_used = 0
    coins = 0
    for j in range(blocks):
        seed = fourwise_seed_bits(k5, ell, gen)
        coins += seed.size
        part = fourwise_assignment(k5, ell, seed)
        reference = np.bincount(part.labels, minlength=num_parts) / k5
        if math.sqrt(float(np.square(reference).sum())) > gate:
            bits[j] = gen.random() < 0.5
            continue
        n_j = int(gen.poisson(m))
        samples = np.asarray(source.take(n_j, gen), dtype=np.int64)
        ys = goldreich_sample(fmap, samples, gen) if n_j else np.empty(0, dtype=np.int64)
        counts = np.bincount(part.labels[ys], minlength=num_parts)
        verdict = l2_identity_test(counts, reference, gamma, delta_prime, mean=m)
        bits[j] = verdict.accept
        players_used += n_j
    final = amplify(bits, theta1, theta2)
    return PublicTestReport(verdict=final, players_used=players_used, blocks=blocks,
                            block_size_mean=float(m), public_coins_used=coins)


def public_identity_test_efficient(q, k: int, ell: int, eps: float, delta: float,
                                   p_stream, rng, constants=None) -> TestVerdict:
    return public_identity_test_efficient_report(q, k, ell, eps, delta, p_stream,
                                                 rng, constants).verdict
