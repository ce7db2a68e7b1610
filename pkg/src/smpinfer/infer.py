"""Simulate-and-infer: distributed simulation feeding centralized estimators.

The pipeline buys i.i.d. samples at the referee with blocks of the block
protocol, overshooting the target count N by a factor C to absorb aborts,
then hands the first N simulated samples to an ordinary estimator.  When too
many blocks abort it falls back to a fixed output (uniform estimate for
learning, accept for identity) so runs stay reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import constants as const
from .blocksim import BlockLayout
from .dist import Distribution, sample_iid
from .flatten import goldreich_map, goldreich_sample
from .rng import as_generator


@dataclass(frozen=True)
class TestVerdict:
    """Outcome of a hypothesis test: the statistic, its threshold, the call.

    Each test documents which side of the threshold accepts; the constructor
    call sites keep accept consistent with that orientation.
    """

    accept: bool
    statistic: float
    threshold: float


class SampleSource:
    """Anything that can hand out the next n samples of the unknown p."""

    def take(self, n: int, gen) -> np.ndarray:
        raise NotImplementedError


class DistributionSource(SampleSource):
    """Inexhaustible source drawing i.i.d. from a known Distribution."""

    def __init__(self, p):
        self.p = p if isinstance(p, Distribution) else Distribution(p)

    def take(self, n, gen):
        return sample_iid(self.p, n, gen)


class ArraySource(SampleSource):
    """Replay of a fixed sample array; raises when players outnumber samples."""

    def __init__(self, samples):
        self.samples = np.asarray(samples, dtype=np.int64)
        self.cursor = 0

    def take(self, n, gen):
        if self.cursor + n > self.samples.size:
            raise ValueError(
                f"sample stream exhausted: needed {n} more, "
                f"{self.samples.size - self.cursor} left"
            )
        out = self.samples[self.cursor : self.cursor + n]
        self.cursor += n
        return out


def as_source(p_stream) -> SampleSource:
    if isinstance(p_stream, SampleSource):
        return p_stream
    if isinstance(p_stream, Distribution):
        return DistributionSource(p_stream)
    if isinstance(p_stream, np.ndarray):
        return ArraySource(p_stream)
    raise TypeError("p_stream must be a SampleSource, Distribution, or sample array")


def hoeffding_overshoot(n_samples: int, delta: float) -> float:
    """Overshoot factor C such that C*n blocks yield n successes w.p. >= 1-delta.

    Every block succeeds with probability at least 1/4, so with B = C*n blocks
    Hoeffding gives P[successes < n] <= exp(-2 (B/4 - n)^2 / B); this returns
    the smallest C making that bound <= delta.
    """
    if n_samples < 1:
        raise ValueError("need at least one target sample")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    ln = math.log(1.0 / delta)
    b = 4.0 * (n_samples + ln + math.sqrt(ln * ln + 2.0 * n_samples * ln))
    return b / n_samples


def overshoot_floor(n_samples: int, delta: float) -> float:
    """Validation floor on the overshoot: 2 + log2(1/delta)/N."""
    return 2.0 + math.log2(1.0 / delta) / n_samples


@dataclass(frozen=True)
class InferenceTask:
    """What to infer, at which accuracy, with which centralized budget."""

    kind: str
    k: int
    eps: float
    delta: float
    centralized_samples: int
    reference: Optional[Distribution] = None
    overshoot: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("learning", "identity"):
            raise ValueError("kind must be 'learning' or 'identity'")
        if self.centralized_samples < 1:
            raise ValueError("centralized_samples must be >= 1")
        if self.kind == "identity" and self.reference is None:
            raise ValueError("identity tasks need a reference distribution")
        if self.overshoot is None:
            object.__setattr__(
                self, "overshoot", hoeffding_overshoot(self.centralized_samples, self.delta)
            )
        floor = overshoot_floor(self.centralized_samples, self.delta)
        if self.overshoot < floor - 1e-12:
            raise ValueError(f"overshoot {self.overshoot} below the floor {floor}")

    @property
    def blocks(self) -> int:
        return math.ceil(self.overshoot * self.centralized_samples)


def empirical_learn(samples, k: int) -> Distribution:
    """Normalized counts; the optimal centralized learner up to constants."""
    xs = np.asarray(samples, dtype=np.int64)
    if xs.size == 0:
        raise ValueError("cannot learn from an empty sample")
    if xs.min() < 0 or xs.max() >= k:
        raise ValueError("samples out of range")
    return Distribution(np.bincount(xs, minlength=k) / xs.size)


def collision_uniformity_test(samples, k: int, eps: float) -> TestVerdict:
    """Collision-count uniformity test; accepts when collisions are few.

    Counts C = sum_x binom(count_x, 2) over N samples and accepts iff
    C <= binom(N,2) * (1 + 2 eps^2) / k, the midpoint between E[C] under
    uniform (binom(N,2)/k) and under any p with tv(p, u_k) >= eps
    (>= binom(N,2) (1 + 4 eps^2)/k).
    """
    xs = np.asarray(samples, dtype=np.int64)
    n = xs.size
    if n < 2:
        raise ValueError("collision test needs at least 2 samples")
    counts = np.bincount(xs, minlength=k).astype(np.float64)
    stat = float((counts * (counts - 1.0)).sum() / 2.0)
    threshold = n * (n - 1) / 2.0 * (1.0 + 2.0 * eps * eps) / k
    return TestVerdict(accept=stat <= threshold, statistic=stat, threshold=threshold)


def centralized_identity_test(samples, q, eps: float, rng) -> TestVerdict:
    """Identity vs a known q: flatten q to uniform on [5k], then test uniformity.

    The flattening map shrinks TV distance by at most 16/25, so the collision
    test runs at distance 16*eps/25 on the 5k-symbol image.
    """
    gen = as_generator(rng)
    fmap = goldreich_map(q)
    ys = goldreich_sample(fmap, np.asarray(samples, dtype=np.int64), gen)
    return collision_uniformity_test(ys, fmap.image_size, 16.0 * eps / 25.0)


def centralized_sample_size(kind: str, k: int, eps: float, delta: float, c: float = 1.0) -> int:
    """Centralized sample counts N the player bounds are built around."""
    bits = math.log2(1.0 / delta)
    if kind == "learning":
        return math.ceil(c * (k + bits) / (eps * eps))
    if kind == "identity":
        return math.ceil(c * (math.sqrt(k * bits) + bits) / (eps * eps))
    raise ValueError("kind must be 'learning' or 'identity'")


def required_players(task: InferenceTask, ell: int, constants=None) -> int:
    """End-to-end player budgets of the simulate-and-infer pipeline.

    learning: ceil(c_L * (k/2^ell) * (k + log2(1/delta)) / eps^2)
    identity: ceil(c_T * (k/2^ell) * (sqrt(k log2(1/delta)) + log2(1/delta)) / eps^2)

    The k/2^ell factor is clamped at 1: with enough bits per message a single
    player's sample is already a perfect simulation.
    """
    cfg = const.resolve(constants)
    squeeze = max(1.0, task.k / (1 << ell))
    bits = math.log2(1.0 / task.delta)
    if task.kind == "learning":
        return math.ceil(cfg.c_L * squeeze * (task.k + bits) / (task.eps**2))
    return math.ceil(
        cfg.c_T * squeeze * (math.sqrt(task.k * bits) + bits) / (task.eps**2)
    )


def task_for_player_budget(
    kind: str,
    k: int,
    eps: float,
    delta: float,
    ell: int,
    players: int,
    reference: Optional[Distribution] = None,
) -> InferenceTask:
    """Largest task that fits a player budget.

    Picks the largest centralized sample count N whose block count
    ceil(C(N, delta) * N) fits in players // (4m) blocks, where C is the
    default overshoot.  Raises when even N = 1 does not fit.
    """
    layout = BlockLayout.build(k, ell)
    budget = players // layout.players

    def blocks_for(n: int) -> int:
        return math.ceil(hoeffding_overshoot(n, delta) * n)

    if budget < 1 or blocks_for(1) > budget:
        raise ValueError(
            f"player budget {players} cannot fund a single simulated sample"
        )
    lo, hi = 1, max(1, budget // 4)
    while blocks_for(hi) <= budget:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if blocks_for(mid) <= budget:
            lo = mid
        else:
            hi = mid
    return InferenceTask(
        kind=kind, k=k, eps=eps, delta=delta,
        centralized_samples=lo, reference=reference,
    )


@dataclass(frozen=True)
class InferenceReport:
    estimate: Optional[Distribution]
    verdict: Optional[TestVerdict]
    players_used: int
    simulated_count: int
    used_fallback: bool


def simulate_and_infer_report(task: InferenceTask, ell: int, p_stream, rng) -> InferenceReport:
    """simulate_and_infer with bookkeeping (players, fallback) attached."""
    gen = as_generator(rng)
    source = as_source(p_stream)
    layout = BlockLayout.build(task.k, ell)
    m = layout.m
    blocks = task.blocks
    players = blocks * layout.players

    samples = np.asarray(source.take(players, gen), dtype=np.int64).reshape(blocks, 4 * m)
    keep = gen.random((blocks, 4 * m)) < 0.5

    part_of = layout.part_of()
    pair_part = np.arange(2 * m) % m
    sender_samples = samples[:, 0::2]
    sender_live = (part_of[sender_samples] == pair_part) & keep[:, 0::2]
    verif_live = (part_of[samples[:, 1::2]] == pair_part) & keep[:, 1::2]
    rows = np.arange(blocks)
    live_pair = np.argmax(sender_live, axis=1)
    ok = (sender_live.sum(axis=1) == 1) & ~verif_live[rows, live_pair]
    simulated = sender_samples[rows, live_pair][ok]

    n = task.centralized_samples
    if simulated.size < n:
        if task.kind == "learning":
            return InferenceReport(Distribution.uniform(task.k), None, players,
                                   int(simulated.size), True)
        verdict = TestVerdict(accept=True, statistic=0.0, threshold=0.0)
        return InferenceReport(None, verdict, players, int(simulated.size), True)

    head = simulated[:n]
    if task.kind == "learning":
        return InferenceReport(empirical_learn(head, task.k), None, players,
                               int(simulated.size), False)
    verdict = centralized_identity_test(head, task.reference, task.eps, gen)
    return InferenceReport(None, verdict, players, int(simulated.size), False)


def simulate_and_infer(task: InferenceTask, ell: int, p_stream, rng):
    """Run the pipeline; returns a Distribution (learning) or TestVerdict (identity)."""
    report = simulate_and_infer_report(task, ell, p_stream, rng)
    return report.estimate if task.kind == "learning" else report.verdict
