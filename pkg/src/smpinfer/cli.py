"""Command line front end.

Every subcommand prints a small report, CSV by default (``--format json``
where it makes sense), either to stdout or to ``--out``.  Randomized
commands take a ``--seed`` that pins the whole run, so rerunning a command
with the same flags reproduces the report byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import time
from pathlib import Path

import click
import numpy as np

from . import constants as const
from ._kernels import available_backends
from .bench import (
    OUTPUT_FORMATS,
    PROTOCOLS,
    ExperimentConfig,
    calibrate_min_players,
    run_config,
    rows_to_csv,
    rows_to_json,
    scaling_sweep,
    zipf_reference,
)
from .blocksim import BlockLayout, block_sim_trials, full_sim_trials, groups_for_alpha, players_for_full_sim
from .dist import Distribution, paninski_family, tv_distance
from .infer import InferenceTask, centralized_sample_size, simulate_and_infer_report
from .moments import moment_lab
from .paramid import kappa, phi
from .rng import RngStream

_OPT_K = click.option("--k", type=int, default=16, show_default=True, help="Domain size.")
_OPT_ELL = click.option("--ell", type=int, default=2, show_default=True, help="Bits per player message.")
_OPT_EPS = click.option("--eps", type=float, default=0.3, show_default=True, help="Distance parameter.")
_OPT_SEED = click.option("--seed", type=int, default=0, show_default=True, help="Master seed for the run.")
_OPT_FORMAT = click.option("--format", "fmt", type=click.Choice(OUTPUT_FORMATS), default="csv",
                           show_default=True, help="Report serialization.")
_OPT_OUT = click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None,
                        help="Write the report to this path instead of stdout.")
_OPT_CONSTANTS = click.option("--constants", "constants_path",
                              type=click.Path(exists=True, dir_okay=False), default=None,
                              help="JSON file overriding the tuned protocol constants.")


def _trials_option(default: int, what: str):
    return click.option("--trials", type=int, default=default, show_default=True,
                        help=f"Number of {what}.")


def _load_constants(constants_path):
    if constants_path is None:
        return None
    return const.load_constants_file(constants_path)


def _table(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def _records(columns, rows) -> str:
    payload = [dict(zip(columns, row)) for row in rows]
    return json.dumps(payload, indent=2) + "\n"


def _serialize(columns, rows, fmt: str) -> str:
    return _table(columns, rows) if fmt == "csv" else _records(columns, rows)


def _emit(text: str, out) -> None:
    if out is None:
        click.echo(text, nl=False)
        return
    Path(out).write_text(text)
    click.echo(f"wrote {out}")


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise click.ClickException(message)


@click.group()
@click.version_option(package_name="smpinfer")
def main() -> None:
    """Simulate and test distributions under per-player message limits."""


@main.command()
@_OPT_K
@_OPT_ELL
@click.option("--delta", type=float, default=0.25, show_default=True,
              help="Abort budget for the simulation (at most this abort rate).")
@_trials_option(20000, "simulated protocol runs")
@_OPT_SEED
@_OPT_FORMAT
@_OPT_OUT
def simulate(k, ell, delta, trials, seed, fmt, out) -> None:
    """Run the blockwise sampling simulation and report its fidelity.

    The source distribution is the bundled Zipf-like example on k outcomes;
    the report compares the conditional outcome frequencies against it.
    """
    _check(trials > 0, "trials must be a positive integer")
    _check(0.0 < delta < 1.0, "delta must lie in (0, 1)")
    p = zipf_reference(k)
    gen = RngStream(seed, 0).generator
    outcomes = full_sim_trials(p, ell, delta, trials, gen)
    accepted = outcomes[outcomes >= 0]
    abort_rate = 1.0 - accepted.size / trials
    if accepted.size:
        empirical = np.bincount(accepted, minlength=k) / accepted.size
        cond_tv = tv_distance(empirical, p)
    else:
        cond_tv = float("nan")
    groups = groups_for_alpha(delta) if (1 << ell) < k else 0
    columns = ("k", "ell", "delta", "trials", "players", "groups", "abort_rate", "conditional_tv")
    row = (k, ell, delta, trials, players_for_full_sim(k, ell, delta), groups, abort_rate, cond_tv)
    _emit(_serialize(columns, [row], fmt), out)


@main.command()
@_OPT_K
@_OPT_ELL
@_OPT_EPS
@click.option("--delta", type=float, default=0.1, show_default=True,
              help="Failure budget for the learning guarantee.")
@_trials_option(200, "independent learning runs")
@_OPT_SEED
@_OPT_CONSTANTS
@_OPT_FORMAT
@_OPT_OUT
def learn(k, ell, eps, delta, trials, seed, constants_path, fmt, out) -> None:
    """Learn the example distribution through simulated messages.

    Each run simulates enough message blocks to feed the centralized
    empirical learner, then measures the TV error of the estimate.
    """
    _check(trials > 0, "trials must be a positive integer")
    cons = const.resolve(_load_constants(constants_path))
    p = zipf_reference(k)
    n = centralized_sample_size("learning", k, eps, delta, c=cons.c_L)
    task = InferenceTask(kind="learning", k=k, eps=eps, delta=delta, centralized_samples=n)
    base = RngStream(seed, 0)
    errors = []
    fallbacks = 0
    players = 0
    for t in range(trials):
        report = simulate_and_infer_report(task, ell, p, base.substream(t).generator)
        players = report.players_used
        fallbacks += int(report.used_fallback)
        errors.append(tv_distance(report.estimate, p))
    columns = ("k", "ell", "eps", "delta", "trials", "players",
               "fallback_rate", "mean_tv", "max_tv")
    row = (k, ell, eps, delta, trials, players,
           fallbacks / trials, float(np.mean(errors)), float(np.max(errors)))
    _emit(_serialize(columns, [row], fmt), out)


@main.command("test-identity")
@click.option("--protocol", type=click.Choice(PROTOCOLS), default="public", show_default=True,
              help="Which protocol family to exercise.")
@_OPT_K
@_OPT_ELL
@_OPT_EPS
@click.option("--delta", type=float, default=0.125, show_default=True,
              help="Target error probability for the tester.")
@_trials_option(400, "null and far instances each")
@_OPT_SEED
@_OPT_CONSTANTS
@_OPT_FORMAT
@_OPT_OUT
def test_identity(protocol, k, ell, eps, delta, trials, seed, constants_path, fmt, out) -> None:
    """Measure both error rates of a testing protocol at its own budget."""
    try:
        config = ExperimentConfig(protocol=protocol, k=k, ell=ell, eps=eps, delta=delta,
                                  trials=trials, master_seed=seed,
                                  constants=_load_constants(constants_path),
                                  output_format=fmt)
        rows = run_config(config)
    except ValueError as err:
        raise click.ClickException(str(err)) from err
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    _emit(text, out)


@main.command()
@_OPT_K
@_OPT_ELL
@_OPT_EPS
@_trials_option(20000, "random balanced partitions")
@_OPT_SEED
@_OPT_OUT
def moments(k, ell, eps, trials, seed, out) -> None:
    """Print moment diagnostics (JSON) for the paired-perturbation family.

    The perturbation moves eps/k of mass between the members of each
    consecutive pair, and the partition has 2**ell parts, so 2**ell must
    divide k.
    """
    _check(k % 2 == 0, "k must be even for the paired perturbation")
    num_parts = 1 << ell
    _check(k % num_parts == 0, "2**ell must divide k for balanced partitions")
    far = paninski_family(k, eps, np.ones(k // 2))
    delta_vec = far.probs - 1.0 / k
    try:
        report = moment_lab(delta_vec, k, num_parts, "balanced", trials, RngStream(seed, 0))
    except ValueError as err:
        raise click.ClickException(str(err)) from err
    _emit(report.to_json() + "\n", out)


@main.command("phi")
@_OPT_K
@_OPT_OUT
def phi_tables(k, out) -> None:
    """Tabulate the clipping functional and the support-size bound.

    Rows cover the uniform and Zipf-like references on k outcomes: kappa
    over a grid of trade-off weights t, and phi over a grid of slack
    values gamma.
    """
    t_grid = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    gamma_grid = tuple(round(0.1 * i, 1) for i in range(1, 10))
    rows = []
    for name, q in (("uniform", Distribution.uniform(k)), ("zipf", zipf_reference(k))):
        for t in t_grid:
            rows.append((name, "kappa", t, kappa(q.probs, t)))
        for gamma in gamma_grid:
            rows.append((name, "phi", gamma, phi(q, gamma)))
    _emit(_table(("dist", "quantity", "x", "value"), rows), out)


@main.command()
@click.option("--protocol", type=click.Choice(PROTOCOLS), default="public", show_default=True,
              help="Protocol to calibrate.")
@_OPT_K
@_OPT_ELL
@_OPT_EPS
@click.option("--delta", type=float, default=0.25, show_default=True,
              help="Both empirical error rates must clear this bar (Wilson upper bound).")
@_trials_option(200, "trials per candidate player count")
@_OPT_SEED
@_OPT_CONSTANTS
@_OPT_FORMAT
@_OPT_OUT
def calibrate(protocol, k, ell, eps, delta, trials, seed, constants_path, fmt, out) -> None:
    """Search for the smallest player count that meets the error target."""
    try:
        n_star = calibrate_min_players(protocol, k, ell, eps, delta, trials,
                                       RngStream(seed, 0),
                                       constants=_load_constants(constants_path))
    except ValueError as err:
        raise click.ClickException(str(err)) from err
    columns = ("protocol", "k", "ell", "eps", "target_delta", "trials", "n_star")
    row = (protocol, k, ell, eps, delta, trials, n_star)
    _emit(_serialize(columns, [row], fmt), out)


@main.command()
@click.option("--protocol", "protocols", type=click.Choice(PROTOCOLS), multiple=True,
              default=("public", "simulate-infer"), show_default=True,
              help="Protocols to sweep (repeatable).")
@click.option("--k", "k_list", type=int, multiple=True, default=(16, 32, 64), show_default=True,
              help="Domain sizes to sweep (repeatable, at least three).")
@_OPT_ELL
@_OPT_EPS
@click.option("--delta", type=float, default=0.25, show_default=True,
              help="Error target handed to each calibration.")
@_trials_option(200, "trials per candidate player count")
@_OPT_SEED
@_OPT_CONSTANTS
@_OPT_FORMAT
@_OPT_OUT
def sweep(protocols, k_list, ell, eps, delta, trials, seed, constants_path, fmt, out) -> None:
    """Calibrate protocols across domain sizes and fit log-log slopes."""
    try:
        result = scaling_sweep(protocols, k_list, ell, eps, delta, RngStream(seed, 0),
                               trials=trials, constants=_load_constants(constants_path))
    except ValueError as err:
        raise click.ClickException(str(err)) from err
    if fmt == "csv":
        _emit(result.to_csv(), out)
        return
    payload = {
        "rows": [{"protocol": p, "k": k, "n_star": n} for p, k, n in result.rows],
        "slopes": result.slopes,
    }
    _emit(json.dumps(payload, indent=2) + "\n", out)


@main.command("kernel-bench")
@_OPT_K
@_OPT_ELL
@_trials_option(200000, "simulated blocks per backend")
@_OPT_SEED
@_OPT_OUT
def kernel_bench(k, ell, trials, seed, out) -> None:
    """Time the block simulation kernels (numpy vs. compiled, if built)."""
    _check(trials > 0, "trials must be a positive integer")
    p = zipf_reference(k)
    layout = BlockLayout.build(k, ell)
    rows = []
    baseline = None
    for backend in available_backends():
        gen = RngStream(seed, 0).generator
        start = time.perf_counter()
        block_sim_trials(p, layout, trials, gen, backend=backend)
        elapsed = time.perf_counter() - start
        if baseline is None:
            baseline = elapsed
        rows.append((backend, trials, elapsed, baseline / elapsed))
    _emit(_table(("backend", "trials", "seconds", "speedup_vs_numpy"), rows), out)


if __name__ == "__main__":
    main()
