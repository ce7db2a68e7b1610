"""Experiment harness: error-rate farms, calibration, and scaling sweeps.

The farms do not push individual messages through the wire format.  Each
protocol's per-block behaviour has an exact closed-form law (verified by
transcript enumeration in the simulator tests), so a trial draws directly
from that law: Bernoulli aborts for the plain simulator, Binomial success
counts for simulate-and-infer, and Poissonized per-part counts for the
public-coin testers.  This keeps calibration runs fast while remaining
distributionally identical to the full pipeline.

Reports serialize without the wall_time field so that identical configs
produce byte-identical files; timing stays available on the in-memory rows.
"""

from __future__ import annotations

import io
import csv as csv_mod
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import constants as const
from .blocksim import BlockLayout, players_for_full_sim, success_prob_exact
from .dist import Distribution, paninski_family, sample_iid
from .flatten import goldreich_map, goldreich_pushforward
from .gf2m import field as gf_field
from .infer import (
    InferenceTask,
    centralized_identity_test,
    centralized_sample_size,
    task_for_player_budget,
)
from .paramid import effective_support, fold_labels, fold_to_support
from .publiccoin import (
    amplify_count,
    block_player_count,
    norm_gate_bound,
    padded_size,
    test_gamma,
    vote_thresholds,
    vote_thresholds_fourwise,
)
from .rng import RngStream

PROTOCOLS = ("private-sim", "simulate-infer", "public", "public-4wise",
             "param-identity")
OUTPUT_FORMATS = ("csv", "json")
WILSON_Z = 1.959963984540054  # two-sided 95%

# Columns of serialized reports, in order.  wall_time is intentionally not
# serialized; see the module docstring.
CSV_COLUMNS = (
    "protocol", "k", "ell", "eps", "delta", "trials", "master_seed",
    "players_used", "type1_rate", "type1_wilson_upper",
    "type2_rate", "type2_wilson_upper",
)

_SEARCH_CAP = 1 << 26


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    k: int
    ell: int
    eps: float
    delta: float
    trials: int
    master_seed: int = 0
    constants: dict | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        for name in ("k", "ell", "trials"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("eps", "delta"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.output_format not in OUTPUT_FORMATS:
            raise ValueError(f"output_format must be one of {OUTPUT_FORMATS}")
        const.resolve(self.constants)  # rejects unknown constant names early


@dataclass(frozen=True)
class ReportRow:
    protocol: str
    k: int
    ell: int
    eps: float
    delta: float
    trials: int
    master_seed: int
    players_used: int
    type1_rate: float
    type2_rate: float
    type1_wilson_upper: float
    type2_wilson_upper: float
    wall_time: float

    def __post_init__(self):
        for rate, upper in ((self.type1_rate, self.type1_wilson_upper),
                            (self.type2_rate, self.type2_wilson_upper)):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
            if upper < rate:
                raise ValueError("the Wilson upper bound cannot undercut its rate")

    def as_record(self) -> dict:
        return {name: getattr(self, name) for name in CSV_COLUMNS}


def wilson_upper(successes: int, trials: int, z: float = WILSON_Z) -> float:
    """Upper end of the Wilson score interval for a Binomial proportion."""
    if trials <= 0:
        return 1.0
    phat = successes / trials
    zz = z * z
    denom = 1.0 + zz / trials
    center = phat + zz / (2.0 * trials)
    half = z * math.sqrt(phat * (1.0 - phat) / trials + zz / (4.0 * trials**2))
    return min(1.0, (center + half) / denom)


def _require_even(k: int) -> None:
    if k % 2:
        raise ValueError("far instances are paired perturbations; k must be even")


def _balanced_labels(gen, blocks: int, padded: int, num_parts: int) -> np.ndarray:
    template = np.repeat(np.arange(num_parts, dtype=np.int64), padded // num_parts)
    labels = np.tile(template, (blocks, 1))
    gen.permuted(labels, axis=1, out=labels)
    return labels


def _poisson_block_bits(gen, labels, image_probs, num_parts, m, gamma,
                        gate_bound=None):
    """One amplification round: per-block Poissonized l2 bits.

    labels has one partition per row over the (possibly padded) image
    domain; image_probs carries the true per-symbol masses of the real
    symbols.  The per-part reference is the exact induced one, so padding
    symbols only dilute the partition, never the statistic.
    """
    real = image_probs.size
    onehot = labels[:, :real, None] == np.arange(num_parts)
    ref = onehot.sum(axis=1) / real
    part_mass = np.einsum("brl,r->bl", onehot, image_probs)
    counts = gen.poisson(lam=m * part_mass)
    stats = (np.square(counts - m * ref) - counts).sum(axis=-1)
    bits = stats <= m * m * gamma * gamma / 2.0
    if gate_bound is not None:
        gated = np.sqrt(np.square(ref).sum(axis=-1)) > gate_bound
        if gated.any():
            bits = bits.copy()
            bits[gated] = gen.random(int(gated.sum())) < 0.5
    return bits


def _far_instance(k: int, eps: float, gen) -> Distribution:
    signs = np.where(gen.random(k // 2) < 0.5, -1.0, 1.0)
    return paninski_family(k, eps, signs)


def _rates_private_sim(cfg, cons, players):
    alpha = cfg.delta
    if players is None:
        players = players_for_full_sim(cfg.k, cfg.ell, alpha)
    if (1 << cfg.ell) >= cfg.k:
        return 0.0, 0.0, players  # direct send never aborts
    layout = BlockLayout.build(cfg.k, cfg.ell)
    groups = players // layout.players
    if groups == 0:
        return 1.0, 0.0, players
    rho = success_prob_exact(Distribution.uniform(cfg.k), layout)
    abort_prob = (1.0 - rho) ** groups
    aborts = 0
    for t in range(cfg.trials):
        gen = RngStream(cfg.master_seed, t).generator
        aborts += gen.random() < abort_prob
    return aborts / cfg.trials, 0.0, players


def _rates_simulate_infer(cfg, cons, players):
    _require_even(cfg.k)
    layout = BlockLayout.build(cfg.k, cfg.ell)
    uniform = Distribution.uniform(cfg.k)
    if players is None:
        task = InferenceTask(
            kind="identity", k=cfg.k, eps=cfg.eps, delta=cfg.delta,
            centralized_samples=centralized_sample_size(
                "identity", cfg.k, cfg.eps, cfg.delta, c=cons.c_T),
            reference=uniform,
        )
    else:
        try:
            task = task_for_player_budget("identity", cfg.k, cfg.eps,
                                          cfg.delta, cfg.ell, players,
                                          reference=uniform)
        except ValueError:
            return 1.0, 1.0, players
    used = task.blocks * layout.players
    rho_null = success_prob_exact(uniform, layout)
    n = task.centralized_samples
    type1 = type2 = 0
    for t in range(cfg.trials):
        base = RngStream(cfg.master_seed, t)
        null_gen = base.substream(0).generator
        hits = null_gen.binomial(task.blocks, rho_null)
        if hits >= n:
            samples = sample_iid(uniform, n, null_gen)
            verdict = centralized_identity_test(samples, uniform, cfg.eps, null_gen)
            type1 += not verdict.accept
        far_gen = base.substream(1).generator
        far = _far_instance(cfg.k, cfg.eps, far_gen)
        hits = far_gen.binomial(task.blocks, success_prob_exact(far, layout))
        if hits >= n:
            samples = sample_iid(far, n, far_gen)
            verdict = centralized_identity_test(samples, uniform, cfg.eps, far_gen)
            type2 += verdict.accept
        else:
            type2 += 1  # the fallback accepts
    return type1 / cfg.trials, type2 / cfg.trials, used


def _rates_public(cfg, cons, players):
    _require_even(cfg.k)
    num_parts = 1 << cfg.ell
    theta1, theta2, _ = vote_thresholds(cons.c)
    blocks = amplify_count(cfg.delta, theta1, theta2, cons)
    if players is None:
        m = block_player_count(cfg.k, cfg.ell, cfg.eps, cons)
    else:
        m = players // blocks
        if m < 1:
            return 1.0, 1.0, players
    used = blocks * m
    gamma = test_gamma(cfg.k, cfg.ell, cfg.eps)
    cut = (theta1 + 1.0 - theta2) / 2.0
    image = 5 * cfg.k
    padded = padded_size(image, num_parts)
    fmap = goldreich_map(Distribution.uniform(cfg.k))
    null_probs = np.full(image, 1.0 / image)
    type1 = type2 = 0
    for t in range(cfg.trials):
        base = RngStream(cfg.master_seed, t)
        null_gen = base.substream(0).generator
        labels = _balanced_labels(null_gen, blocks, padded, num_parts)
        bits = _poisson_block_bits(null_gen, labels, null_probs, num_parts, m, gamma)
        type1 += bits.mean() < cut
        far_gen = base.substream(1).generator
        far_probs = goldreich_pushforward(fmap, _far_instance(cfg.k, cfg.eps, far_gen)).probs
        labels = _balanced_labels(far_gen, blocks, padded, num_parts)
        bits = _poisson_block_bits(far_gen, labels, far_probs, num_parts, m, gamma)
        type2 += bits.mean() >= cut
    return type1 / cfg.trials, type2 / cfg.trials, used


def _fourwise_labels(gen, blocks: int, image: int, ell: int) -> np.ndarray:
    m_bits = math.ceil(math.log2(image)) + ell
    gf = gf_field(m_bits)
    coeffs = gen.integers(0, 1 << m_bits, size=(blocks, 4), dtype=np.int64)
    points = np.arange(image, dtype=np.int64)
    vals = coeffs[:, 3][:, None]
    for j in (2, 1, 0):
        vals = gf.mul(vals, points[None, :]) ^ coeffs[:, j][:, None]
    return vals >> (m_bits - ell)


def _rates_public_fourwise(cfg, cons, players):
    _require_even(cfg.k)
    num_parts = 1 << cfg.ell
    theta1, theta2, _ = vote_thresholds_fourwise(cons.c)
    blocks = amplify_count(cfg.delta, theta1, theta2, cons)
    if players is None:
        m = block_player_count(cfg.k, cfg.ell, cfg.eps, cons)
    else:
        m = players // blocks
        if m < 1:
            return 1.0, 1.0, players
    used = blocks * m
    gamma = test_gamma(cfg.k, cfg.ell, cfg.eps)
    cut = (theta1 + 1.0 - theta2) / 2.0
    gate = norm_gate_bound(num_parts)
    image = 5 * cfg.k
    fmap = goldreich_map(Distribution.uniform(cfg.k))
    null_probs = np.full(image, 1.0 / image)
    type1 = type2 = 0
    for t in range(cfg.trials):
        base = RngStream(cfg.master_seed, t)
        null_gen = base.substream(0).generator
        labels = _fourwise_labels(null_gen, blocks, image, cfg.ell)
        bits = _poisson_block_bits(null_gen, labels, null_probs, num_parts, m,
                                   gamma, gate_bound=gate)
        type1 += bits.mean() < cut
        far_gen = base.substream(1).generator
        far_probs = goldreich_pushforward(fmap, _far_instance(cfg.k, cfg.eps, far_gen)).probs
        labels = _fourwise_labels(far_gen, blocks, image, cfg.ell)
        bits = _poisson_block_bits(far_gen, labels, far_probs, num_parts, m,
                                   gamma, gate_bound=gate)
        type2 += bits.mean() >= cut
    return type1 / cfg.trials, type2 / cfg.trials, used


def zipf_reference(k: int) -> Distribution:
    """The heavy-headed reference the param-identity farm tests against."""
    weights = 1.0 / (1.0 + np.arange(k))
    return Distribution(weights / weights.sum())


def _paramid_far(q: np.ndarray, support, eps: float) -> Distribution:
    """Shift eps of mass onto the heaviest support symbol, draining the other
    support symbols proportionally, so the whole discrepancy stays inside S."""
    idx = np.asarray(support.indices)
    head = idx[np.argmax(q[idx])]
    donors = idx[idx != head]
    pool = q[donors].sum()
    if pool < eps:
        raise ValueError("support too light to host an eps-far instance")
    p = q.copy()
    p[head] += eps
    p[donors] -= eps * q[donors] / pool
    return Distribution(p)


def _rates_param_identity(cfg, cons, players):
    q = zipf_reference(cfg.k)
    support = effective_support(q.probs, cfg.eps)
    folded_q = fold_to_support(q.probs, support.indices)
    labels_map = fold_labels(cfg.k, support.indices)
    far = _paramid_far(q.probs, support, cfg.eps)
    folded_far = Distribution(np.bincount(labels_map, weights=far.probs,
                                          minlength=len(support) + 1))
    # The protocol flattens the folded reference, then the uniformity tester
    # flattens its own input once more; both maps act on exact masses here.
    fmap1 = goldreich_map(folded_q)
    domain1 = 5 * (len(support) + 1)
    run_eps = cfg.eps / 3.0
    fmap2 = goldreich_map(Distribution.uniform(domain1))
    image = 5 * domain1
    null_probs = np.full(image, 1.0 / image)
    far_probs = goldreich_pushforward(
        fmap2, goldreich_pushforward(fmap1, folded_far)).probs
    num_parts = 1 << cfg.ell
    theta1, theta2, _ = vote_thresholds(cons.c)
    blocks = amplify_count(cfg.delta, theta1, theta2, cons)
    if players is None:
        m = block_player_count(domain1, cfg.ell, run_eps, cons)
    else:
        m = players // blocks
        if m < 1:
            return 1.0, 1.0, players
    used = blocks * m
    gamma = test_gamma(domain1, cfg.ell, run_eps)
    cut = (theta1 + 1.0 - theta2) / 2.0
    padded = padded_size(image, num_parts)
    type1 = type2 = 0
    for t in range(cfg.trials):
        base = RngStream(cfg.master_seed, t)
        null_gen = base.substream(0).generator
        labels = _balanced_labels(null_gen, blocks, padded, num_parts)
        bits = _poisson_block_bits(null_gen, labels, null_probs, num_parts, m, gamma)
        type1 += bits.mean() < cut
        far_gen = base.substream(1).generator
        labels = _balanced_labels(far_gen, blocks, padded, num_parts)
        bits = _poisson_block_bits(far_gen, labels, far_probs, num_parts, m, gamma)
        type2 += bits.mean() >= cut
    return type1 / cfg.trials, type2 / cfg.trials, used


_FARMS = {
    "private-sim": _rates_private_sim,
    "simulate-infer": _rates_simulate_infer,
    "public": _rates_public,
    "public-4wise": _rates_public_fourwise,
    "param-identity": _rates_param_identity,
}


def error_rates(config: ExperimentConfig, players: int | None = None):
    """(type1_rate, type2_rate, players_used) for a config, optionally with a
    fixed player budget instead of the protocol's own."""
    cons = const.resolve(config.constants)
    return _FARMS[config.protocol](config, cons, players)


def run_config(config: ExperimentConfig) -> list[ReportRow]:
    """Execute the config's trial farm; deterministic given master_seed."""
    start = time.perf_counter()
    type1, type2, used = error_rates(config)
    elapsed = time.perf_counter() - start
    row = ReportRow(
        protocol=config.protocol, k=config.k, ell=config.ell, eps=config.eps,
        delta=config.delta, trials=config.trials,
        master_seed=config.master_seed, players_used=used,
        type1_rate=type1, type2_rate=type2,
        type1_wilson_upper=wilson_upper(round(type1 * config.trials), config.trials),
        type2_wilson_upper=wilson_upper(round(type2 * config.trials), config.trials),
        wall_time=elapsed,
    )
    return [row]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv_mod.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        record = row.as_record()
        writer.writerow([record[name] for name in CSV_COLUMNS])
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps([row.as_record() for row in rows], indent=2) + "\n"


def calibrate_min_players(protocol: str, k: int, ell: int, eps: float,
                          target_delta: float, trials: int, rng,
                          constants=None, cap: int = _SEARCH_CAP) -> int:
    """Smallest tested player count whose both Wilson uppers meet the target.

    Doubling search brackets a passing budget, bisection tightens it; each
    candidate gets its own substream of rng, so results are reproducible.
    """
    if not 0.0 < target_delta < 1.0:
        raise ValueError("target_delta must lie in (0, 1)")
    base = rng if isinstance(rng, RngStream) else RngStream(int(rng), 0)
    counter = 0

    def passes(n: int) -> bool:
        nonlocal counter
        seed_stream = base.substream(counter)
        counter += 1
        config = ExperimentConfig(
            protocol=protocol, k=k, ell=ell, eps=eps, delta=target_delta,
            trials=trials, master_seed=seed_stream.seed,
            constants=constants,
        )
        type1, type2, _ = error_rates(config, players=n)
        return (
            wilson_upper(round(type1 * trials), trials) <= target_delta
            and wilson_upper(round(type2 * trials), trials) <= target_delta
        )

    n = 4
    while not passes(n):
        n *= 2
        if n > cap:
            raise ValueError(f"player search exceeded the cap of {cap}")
    lo, hi = n // 2, n
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class SweepResult:
    rows: tuple  # (protocol, k, n_star) in sweep order
    slopes: dict  # protocol -> fitted log-log slope

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv_mod.writer(buf, lineterminator="\n")
        writer.writerow(("protocol", "k", "n_star", "loglog_slope"))
        for protocol, k, n_star in self.rows:
            writer.writerow((protocol, k, n_star, self.slopes[protocol]))
        return buf.getvalue()


def scaling_sweep(protocols, k_list, ell: int, eps: float, target_delta: float,
                  rng, trials: int = 48, constants=None) -> SweepResult:
    """Calibrate each protocol over the k grid and fit log-log slopes."""
    ks = list(k_list)
    if len(ks) < 3:
        raise ValueError("k_list needs at least 3 values for a slope fit")
    base = rng if isinstance(rng, RngStream) else RngStream(int(rng), 0)
    rows = []
    slopes = {}
    for p_index, protocol in enumerate(protocols):
        stars = []
        for k_index, k in enumerate(ks):
            sub = base.substream(1000 * p_index + k_index)
            n_star = calibrate_min_players(protocol, k, ell, eps, target_delta,
                                           trials, sub, constants=constants)
            rows.append((protocol, k, n_star))
            stars.append(n_star)
        slope, _ = np.polyfit(np.log(np.asarray(ks, dtype=float)),
                              np.log(np.asarray(stars, dtype=float)), 1)
        slopes[protocol] = float(slope)
    return SweepResult(rows=tuple(rows), slopes=slopes)
