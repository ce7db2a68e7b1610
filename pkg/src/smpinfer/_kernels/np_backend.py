"""Pure numpy implementations of the two hot Monte Carlo kernels.

Both kernels consume generator doubles in a documented order so the compiled
backend can reproduce them bit for bit:

* block_trials: per trial, per player (senders and verifiers interleaved,
  player index ascending), one double for the sample then one for the
  referee's zeroing coin.
* balanced_z: per trial, k-1 doubles driving a Fisher-Yates shuffle of the
  fixed label template, positions i = k-1 down to 1 with j = floor(u*(i+1)).

The callers in smpinfer._kernels chunk long trial axes; chunking is invisible
because both backends are trial-major.
"""

from __future__ import annotations

import numpy as np


def block_trials(pcum, part_of, m, trials, gen):
    """Simulate `trials` runs of the 4m-player block protocol.

    pcum is the sample CDF over [k]; part_of maps each symbol to its part.
    Returns int64 outcomes, -1 for abort.
    """
    k = pcum.size
    pairs = 2 * m
    n = 2 * pairs
    u = gen.random((trials, n, 2))
    samples = np.minimum(np.searchsorted(pcum, u[..., 0], side="right"), k - 1)
    keep = u[..., 1] < 0.5

    pair_part = np.arange(pairs) % m
    sender_samples = samples[:, 0::2]
    sender_live = (part_of[sender_samples] == pair_part) & keep[:, 0::2]
    verif_live = (part_of[samples[:, 1::2]] == pair_part) & keep[:, 1::2]

    rows = np.arange(trials)
    live_count = sender_live.sum(axis=1)
    live_pair = np.argmax(sender_live, axis=1)
    ok = (live_count == 1) & ~verif_live[rows, live_pair]
    return np.where(ok, sender_samples[rows, live_pair], -1).astype(np.int64)


def balanced_z(delta, L, trials, gen):
    """Per-part sums of delta under `trials` random balanced label assignments.

    delta has length k with k divisible by L.  Returns a (trials, L) float64
    array whose row t is (sum of delta over part 0, ..., part L-1) for the
    t-th uniformly random balanced partition.
    """
    k = delta.size
    template = np.repeat(np.arange(L, dtype=np.int8), k // L)
    u = gen.random((trials, k - 1))
    labels = np.tile(template, (trials, 1))
    rows = np.arange(trials)
    for step, i in enumerate(range(k - 1, 0, -1)):
        j = np.minimum((u[:, step] * (i + 1)).astype(np.int64), i)
        tmp = labels[rows, i].copy()
        labels[rows, i] = labels[rows, j]
        labels[rows, j] = tmp
    z = np.empty((trials, L))
    for r in range(L):
        z[:, r] = np.where(labels == r, delta[np.newaxis, :], 0.0).sum(axis=1)
    return z
