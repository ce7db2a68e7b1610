"""Acceptance gates: one test per release criterion, each printing a
pass/fail line with its runtime against a pinned budget.

These tests are intentionally independent of the unit suites: closed forms
are recomputed inline, brute-force oracles are local to this file, and the
random seeds are frozen so reruns reproduce the same verdicts.
"""

import itertools
import math
import time

import numpy as np

from smpinfer.bench import ExperimentConfig, run_config, scaling_sweep
from smpinfer.blocksim import (
    BlockLayout,
    basic_protocol_spec,
    block_protocol_spec,
    full_sim_trials,
    players_for_full_sim,
)
from smpinfer.dist import Distribution, paninski_family, tv_distance
from smpinfer.flatten import goldreich_map, goldreich_pushforward
from smpinfer.gf2m import field
from smpinfer.moments import (
    anticoncentration_estimate,
    collision_prob_exact,
    moment_lab,
    sigma_sums,
)
from smpinfer.paramid import kappa
from smpinfer.publiccoin import amplify, amplify_count
from smpinfer.rng import RngStream
from smpinfer.smp import apply_referee_flip, message_marginals


def _report(name: str, budget: float, started: float, failures: list):
    elapsed = time.perf_counter() - started
    if elapsed > budget:
        failures.append(f"runtime {elapsed:.1f}s exceeded the {budget:.0f}s budget")
    status = "FAIL" if failures else "PASS"
    print(f"[{status}] {name} ({elapsed:.1f}s / {budget:.0f}s)")
    assert not failures, f"{name}: " + "; ".join(failures)


def _expect(failures: list, ok: bool, message: str):
    if not ok:
        failures.append(message)


# --- criterion 1 helpers: exact outcome laws by transcript enumeration ---

def _simplex_grid(k: int, steps: int = 10):
    """Every probability vector on [k] whose entries are multiples of 1/steps."""
    for cuts in itertools.combinations(range(steps + k - 1), k - 1):
        counts = []
        prev = -1
        for c in cuts:
            counts.append(c - prev - 1)
            prev = c
        counts.append(steps + k - 2 - prev)
        yield np.array(counts, dtype=np.float64) / steps


def _transcript_atoms(marginals):
    """All transcripts with positive probability, as (messages, probs)."""
    supports = [np.flatnonzero(m > 0.0) for m in marginals]
    mesh = np.meshgrid(*supports, indexing="ij")
    msgs = np.stack([g.ravel() for g in mesh], axis=1)
    probs = np.ones(len(msgs))
    for col in range(msgs.shape[1]):
        probs *= marginals[col][msgs[:, col]]
    return msgs, probs


def _basic_outcome_law(p):
    """P[output = i] for the 2k-player indicator protocol, by enumeration."""
    k = p.size
    msgs, probs = _transcript_atoms(message_marginals(basic_protocol_spec(k), p))
    senders = msgs[:, 0::2]
    verifiers = msgs[:, 1::2]
    rows = np.arange(len(msgs))
    first = senders.argmax(axis=1)
    ok = (senders.sum(axis=1) == 1) & (verifiers[rows, first] == 0)
    return np.bincount(first[ok], weights=probs[ok], minlength=k)


def _block_outcome_law(p, layout):
    """P[output = i] for the coded block protocol, referee zeroing included."""
    spec = block_protocol_spec(layout)
    msgs, probs = _transcript_atoms(apply_referee_flip(message_marginals(spec, p)))
    m = layout.m
    senders = msgs[:, 0::2]
    verifiers = msgs[:, 1::2]
    rows = np.arange(len(msgs))
    live = senders != 0
    t = live.argmax(axis=1)
    ok = (live.sum(axis=1) == 1) & (verifiers[rows, t] == 0)
    symbol_of = np.full((m, 1 << layout.ell), -1, dtype=np.int64)
    for j, (start, stop) in enumerate(layout.parts):
        for x in range(start, stop):
            symbol_of[j, layout.code(j, x)] = x
    outputs = symbol_of[t[ok] % m, senders[rows, t][ok]]
    return np.bincount(outputs, weights=probs[ok], minlength=layout.k)


def _check_conditional(failures, label, law, p, success_expected):
    success = law.sum()
    _expect(failures, abs(success - success_expected) <= 1e-9,
            f"{label}: success {success:.12f} != {success_expected:.12f}")
    if success_expected > 1e-12:
        _expect(failures, np.abs(law / success - p).max() <= 1e-9,
                f"{label}: conditional law deviates from the source")


def test_criterion_01_exact_simulation_laws():
    """Enumerated transcripts reproduce the closed-form outcome laws."""
    started = time.perf_counter()
    failures = []
    for k in (2, 3, 4):
        layouts = [BlockLayout.build(k, 1), BlockLayout.build(k, 2)]
        for p in _simplex_grid(k):
            label = f"k={k} p={np.round(p, 1)}"
            _check_conditional(failures, f"basic {label}", _basic_outcome_law(p),
                               p, float(np.prod(1.0 - p)))
            for layout in layouts:
                masses = np.array([p[a:b].sum() for a, b in layout.parts])
                expected = float(np.prod((1.0 - masses / 2.0) ** 2))
                law = _block_outcome_law(p, layout)
                _check_conditional(failures, f"block ell={layout.ell} {label}",
                                   law, p, expected)
            if failures:
                break
        if failures:
            break
    _report("criterion 1: exact transcript enumeration", 30.0, started, failures)


def test_criterion_02_full_simulation_fidelity():
    """The grouped simulator meets its abort budget and samples faithfully."""
    started = time.perf_counter()
    failures = []
    p = np.arange(1, 11) / 55.0
    trials = 103_000
    outcomes = full_sim_trials(p, 2, 0.25, trials, RngStream(20260814, 2).generator)
    accepted = outcomes[outcomes >= 0]
    _expect(failures, players_for_full_sim(10, 2, 0.25) == 320,
            f"player count {players_for_full_sim(10, 2, 0.25)} != 320")
    abort_rate = 1.0 - accepted.size / trials
    _expect(failures, abort_rate <= 0.25, f"abort rate {abort_rate:.4f} > 0.25")
    _expect(failures, accepted.size >= 100_000,
            f"only {accepted.size} accepted runs, need 100000")
    empirical = np.bincount(accepted, minlength=10) / accepted.size
    gap = tv_distance(empirical, p)
    _expect(failures, gap <= 0.02, f"conditional TV {gap:.4f} > 0.02")
    _report("criterion 2: grouped simulator fidelity", 60.0, started, failures)


# --- criterion 3/4 helpers ---

def _balanced_labelings(k: int, parts: int):
    size = k // parts

    def rec(pos, remaining):
        if pos == k:
            yield ()
            return
        for lab in range(parts):
            if remaining[lab]:
                remaining[lab] -= 1
                for rest in rec(pos + 1, remaining):
                    yield (lab,) + rest
                remaining[lab] += 1

    yield from rec(0, [size] * parts)


def _sigma_brute(delta):
    """O(k^4) reference: bucket quadruple products by distinct-index count."""
    arr = np.asarray(delta, dtype=np.float64)
    k = arr.size
    grids = np.meshgrid(*([np.arange(k)] * 4), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    prods = arr[idx[:, 0]] * arr[idx[:, 1]] * arr[idx[:, 2]] * arr[idx[:, 3]]
    ndistinct = np.ones(len(idx), dtype=np.int64)
    for j in range(1, 4):
        fresh = np.ones(len(idx), dtype=bool)
        for i in range(j):
            fresh &= idx[:, j] != idx[:, i]
        ndistinct += fresh
    return tuple(float(prods[ndistinct == j].sum()) for j in (1, 2, 3, 4))


def test_criterion_03_projection_moments():
    """Projected-perturbation moments match their predictions at scale."""
    started = time.perf_counter()
    failures = []
    k, parts, eps = 12, 3, 0.3
    delta = paninski_family(k, eps, np.ones(k // 2)).probs - 1.0 / k
    report = moment_lab(delta, k, parts, "balanced", 1_000_000, RngStream(30, 0))
    for r, mean in enumerate(report.mean_per_part):
        bar = 4.0 * report.std_errors["per_part"][r]
        _expect(failures, abs(mean) <= bar,
                f"part {r} mean {mean:.2e} outside 4 standard errors {bar:.2e}")
    predicted = (1.0 - collision_prob_exact(k, parts)) * float(np.square(delta).sum())
    _expect(failures, abs(report.predicted_sq - predicted) <= 1e-12,
            "library prediction drifted from the closed form")
    rel = abs(report.mean_sq_norm - predicted) / predicted
    _expect(failures, rel <= 0.02,
            f"mean square norm off by {100 * rel:.2f}% (cap 2%)")
    _expect(failures, report.mean_fourth_norm <= report.predicted_fourth_bound,
            "fourth moment exceeded its bound")
    for kk, pp in ((4, 2), (6, 2), (6, 3), (8, 2), (8, 4), (9, 3), (10, 2), (10, 5)):
        labelings = list(_balanced_labelings(kk, pp))
        together = sum(lab[0] == lab[1] for lab in labelings) / len(labelings)
        exact = collision_prob_exact(kk, pp)
        _expect(failures, abs(together - exact) <= 1e-12,
                f"collision probability mismatch at k={kk}, parts={pp}")
    _report("criterion 3: projection moments at 1e6 partitions", 120.0, started, failures)


def test_criterion_04_quadruple_sum_closed_forms():
    """Closed-form quadruple sums agree with O(k^4) brute force."""
    started = time.perf_counter()
    failures = []
    gen = RngStream(40, 0).generator
    for trial in range(100):
        k = int(gen.integers(2, 11))
        delta = gen.normal(size=k)
        delta -= delta.mean()
        ours = sigma_sums(delta)
        brute = _sigma_brute(delta)
        worst = max(abs(a - b) for a, b in zip(ours, brute))
        _expect(failures, worst <= 1e-9,
                f"trial {trial} (k={k}): max deviation {worst:.2e}")
        if failures:
            break
    _report("criterion 4: quadruple-sum closed forms", 10.0, started, failures)


def test_criterion_05_anticoncentration_rate():
    """Projected far instances keep enough mass past the detection bar."""
    started = time.perf_counter()
    failures = []
    k, parts, eps = 24, 4, 0.3
    delta = paninski_family(k, eps, np.ones(k // 2)).probs - 1.0 / k
    rate = anticoncentration_estimate(delta, k, parts, 100_000,
                                      eps ** 2 / (2 * k), RngStream(50, 0))
    _expect(failures, rate >= 1.0 / 82.0,
            f"exceedance rate {rate:.4f} below 1/82")
    _report("criterion 5: anticoncentration of projections", 60.0, started, failures)


def test_criterion_06_domain_flattening():
    """The flattening map uniformizes its reference and keeps distances."""
    started = time.perf_counter()
    failures = []
    gen = RngStream(60, 0).generator
    for trial in range(100):
        k = int(gen.integers(2, 33))
        q = Distribution(gen.dirichlet(np.ones(k)))
        fmap = goldreich_map(q)
        image = goldreich_pushforward(fmap, q).probs
        _expect(failures, np.abs(image - 1.0 / (5 * k)).max() <= 1e-9,
                f"trial {trial}: reference image is not uniform on 5k points")
        if failures:
            break
    for trial in range(50):
        # Grained references (4k q_i integral) keep each symbol's whole
        # deviation in its dedicated block, so the image distance is exactly
        # 4/5 of tv(p, q) and the 16/25 bound holds for every far p.
        k = int(gen.integers(2, 33))
        grains = np.bincount(gen.integers(0, k, size=3 * k), minlength=k) + 1
        q = Distribution(grains / (4.0 * k))
        p = gen.dirichlet(np.ones(k))
        gap = tv_distance(p, q.probs)
        fmap = goldreich_map(q)
        image_gap = tv_distance(goldreich_pushforward(fmap, p),
                                goldreich_pushforward(fmap, q))
        _expect(failures, image_gap >= (16.0 / 25.0) * gap - 1e-12,
                f"trial {trial}: image TV {image_gap:.6f} under (16/25)*{gap:.6f}")
        if failures:
            break
    _report("criterion 6: flattening map guarantees", 30.0, started, failures)


def test_criterion_07_fourwise_joint_uniformity():
    """Degree-3 polynomial hashing is exactly 4-wise uniform over GF(16)."""
    started = time.perf_counter()
    failures = []
    f = field(4)
    coeffs = np.indices((16, 16, 16, 16)).reshape(4, -1)
    points = (0, 1, 7, 9)
    packed = np.zeros(coeffs.shape[1], dtype=np.int64)
    for x in points:
        value = coeffs[3].copy()
        for c in (coeffs[2], coeffs[1], coeffs[0]):
            value = f.mul(value, np.full_like(value, x)) ^ c
        packed = (packed << 4) | value
    counts = np.bincount(packed, minlength=16 ** 4)
    _expect(failures, counts.size == 16 ** 4 and bool((counts == 1).all()),
            "joint evaluation law over four points is not exactly uniform")
    spot = RngStream(70, 0).generator.integers(0, 16, size=(20, 4))
    for row in spot:
        direct = f.poly_eval(row, np.array(points))
        horner = []
        for x in points:
            value = int(row[3])
            for c in (int(row[2]), int(row[1]), int(row[0])):
                value = int(f.mul(value, x)) ^ c
            horner.append(value)
        _expect(failures, list(direct) == horner,
                "library poly_eval disagrees with direct Horner evaluation")
    _report("criterion 7: exhaustive 4-wise uniformity", 10.0, started, failures)


def test_criterion_08_end_to_end_public_tester():
    """The shared-randomness tester meets its error budget at k=64."""
    started = time.perf_counter()
    failures = []
    config = ExperimentConfig(protocol="public", k=64, ell=2, eps=0.3,
                              delta=1.0 / 12.0, trials=2000, master_seed=2026)
    row = run_config(config)[0]
    _expect(failures, row.type1_wilson_upper <= 0.12,
            f"type I Wilson upper {row.type1_wilson_upper:.4f} > 0.12")
    _expect(failures, row.type2_wilson_upper <= 0.12,
            f"type II Wilson upper {row.type2_wilson_upper:.4f} > 0.12")
    _report("criterion 8: end-to-end public tester", 600.0, started, failures)


def test_criterion_09_player_scaling():
    """Calibrated player counts scale like sqrt(k) vs k^1.5 and separate."""
    started = time.perf_counter()
    failures = []
    result = scaling_sweep(("public", "simulate-infer"), (16, 32, 64), 1, 0.3,
                           0.25, RngStream(20260814, 0), trials=200)
    public = {k: n for proto, k, n in result.rows if proto == "public"}
    private = {k: n for proto, k, n in result.rows if proto == "simulate-infer"}
    _expect(failures, 0.7 <= result.slopes["public"] <= 1.3,
            f"public slope {result.slopes['public']:.3f} outside 1.0 +/- 0.3")
    _expect(failures, 1.2 <= result.slopes["simulate-infer"] <= 1.8,
            f"simulate-infer slope {result.slopes['simulate-infer']:.3f} "
            "outside 1.5 +/- 0.3")
    for k in (16, 32, 64):
        _expect(failures, public[k] < private[k],
                f"no public advantage at k={k}: {public[k]} >= {private[k]}")
    _report("criterion 9: player-count scaling", 3600.0, started, failures)


def _kappa_grid_oracle(arr, t, grid=9, rounds=60, starts=8):
    """Brute-force split search: coordinatewise grid, then exact
    one-coordinate updates from the several best grid points (single-start
    descent can stall on a non-global fixed point)."""

    def descend(c):
        for _ in range(rounds):
            for i in range(arr.size):
                rest = float(np.square(c).sum() - c[i] ** 2)
                if t <= 1.0:
                    c[i] = arr[i]
                else:
                    c[i] = min(arr[i], math.sqrt(rest / (t * t - 1.0)))
        return float((arr - c).sum() + t * math.sqrt(np.square(c).sum()))

    axes = [np.linspace(0.0, ai, grid) for ai in arr]
    mesh = np.meshgrid(*axes, indexing="ij")
    c = np.stack([g.ravel() for g in mesh], axis=1)
    cost = (arr.sum() - c.sum(axis=1)) + t * np.sqrt(np.square(c).sum(axis=1))
    order = np.argsort(cost)[:starts]
    return min(
        float(cost[order[0]]),
        min(descend(c[i].copy()) for i in order),
        descend(arr.astype(np.float64)),
    )


def test_criterion_10_split_functional():
    """The clipping search matches a brute-force split oracle to 1e-3."""
    started = time.perf_counter()
    failures = []
    gen = RngStream(100, 0).generator
    for trial in range(50):
        k = int(gen.integers(1, 5))
        arr = gen.uniform(0.0, 1.0, size=k)
        t = float(gen.uniform(0.0, 3.0))
        ours = kappa(arr, t)
        oracle = _kappa_grid_oracle(arr, t)
        _expect(failures, abs(ours - oracle) <= 1e-3,
                f"trial {trial} (k={k}, t={t:.3f}): kappa {ours:.6f} "
                f"vs oracle {oracle:.6f}")
        if failures:
            break
    _report("criterion 10: split functional vs grid oracle", 30.0, started, failures)


def test_criterion_11_vote_amplification():
    """Thresholded votes drive both error rates under the target."""
    started = time.perf_counter()
    failures = []
    theta1, theta2, delta = 0.7, 0.6, 0.05
    blocks = amplify_count(delta, theta1, theta2, {"C_amp": 8.0})
    _expect(failures, blocks == 385, f"vote count {blocks} != 385")
    gen = RngStream(110, 0).generator
    null_bits = gen.random((10_000, blocks)) < theta1
    far_bits = gen.random((10_000, blocks)) < 1.0 - theta2
    type1 = np.mean([not amplify(row, theta1, theta2).accept for row in null_bits])
    type2 = np.mean([amplify(row, theta1, theta2).accept for row in far_bits])
    bar = delta + 3.0 * math.sqrt(delta * (1.0 - delta) / 10_000)
    _expect(failures, type1 <= bar, f"type I rate {type1:.4f} > {bar:.4f}")
    _expect(failures, type2 <= bar, f"type II rate {type2:.4f} > {bar:.4f}")
    _report("criterion 11: vote amplification", 10.0, started, failures)
