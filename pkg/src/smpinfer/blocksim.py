"""Simulating one sample from a k-ary distribution with ell-bit messages.

The ladder of protocols:

* basic_sim_1bit: 2k players, one indicator bit per symbol, no referee
  randomness.  Succeeds with probability prod_i (1 - p_i).
* enhanced_sim_1bit: 4k players in two copies; the referee zeroes each
  nonzero bit with probability 1/2, which caps any symbol's effective
  hit rate at 1/2 and lifts the success probability to at least 1/4.
* block_sim: the ell-bit generalization; symbols are grouped into m =
  ceil(k / (2**ell - 1)) contiguous parts, each part served by two
  sender/verifier pairs, nonzero codes identifying symbols within a part.
* full_sim: enough independent block groups to push the abort rate below a
  target alpha.

All three randomized protocols output the conditional law p exactly given
a non-abort; only the abort probability depends on p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dist import Distribution, as_probs, sample_iid
from .rng import as_generator
from .smp import ProtocolSpec, SimulationOutcome


@dataclass(frozen=True)
class BlockLayout:
    """Partition of {0..k-1} into m contiguous parts of size <= 2**ell - 1.

    Within part j (covering [start_j, stop_j)), symbol x is encoded as the
    nonzero code x - start_j + 1; the all-zero message is reserved for
    "my sample is not in my part".
    """

    k: int
    ell: int
    parts: tuple

    @classmethod
    def build(cls, k: int, ell: int) -> "BlockLayout":
        """Balanced contiguous split: m = ceil(k/(2**ell - 1)) parts whose
        sizes differ by at most one (the trailing parts are the smaller ones).
        Balancing maximizes the success probability for near-uniform p."""
        if k < 1 or ell < 1:
            raise ValueError("need k >= 1 and ell >= 1")
        width = (1 << ell) - 1
        m = -(-k // width)
        base, extra = divmod(k, m)
        parts = []
        start = 0
        for j in range(m):
            size = base + (1 if j < extra else 0)
            parts.append((start, start + size))
            start += size
        return cls(k=k, ell=ell, parts=tuple(parts))

    def __post_init__(self):
        width = (1 << self.ell) - 1
        expect = 0
        for start, stop in self.parts:
            if start != expect or not (0 < stop - start <= width):
                raise ValueError("parts must tile [0, k) contiguously with size <= 2**ell - 1")
            expect = stop
        if expect != self.k:
            raise ValueError("parts must cover exactly [0, k)")

    @property
    def m(self) -> int:
        return len(self.parts)

    @property
    def players(self) -> int:
        return 4 * self.m

    def part_of(self) -> np.ndarray:
        out = np.empty(self.k, dtype=np.int64)
        for j, (start, stop) in enumerate(self.parts):
            out[start:stop] = j
        return out

    def code(self, j: int, symbol: int) -> int:
        start, stop = self.parts[j]
        return symbol - start + 1 if start <= symbol < stop else 0

    def symbol(self, j: int, code: int) -> int:
        start, stop = self.parts[j]
        sym = start + code - 1
        if not (1 <= code and sym < stop):
            raise ValueError(f"code {code} does not name a symbol of part {j}")
        return sym


@dataclass(frozen=True)
class SimulationReport:
    outcome: SimulationOutcome
    players_used: int
    groups_used: int


def basic_protocol_spec(k: int) -> ProtocolSpec:
    """2k players; pair i both send the indicator of holding symbol i."""

    def channel(i, sample, public):
        return 1 if sample == i // 2 else 0

    return ProtocolSpec(n=2 * k, ell=1, randomness_mode="private",
                        player_channel=channel, name=f"basic-1bit(k={k})")


def block_protocol_spec(layout: BlockLayout) -> ProtocolSpec:
    """4m players; all four players of part j send their sample's code in part j."""

    m = layout.m

    def channel(i, sample, public):
        return layout.code((i // 2) % m, sample)

    return ProtocolSpec(n=layout.players, ell=layout.ell, randomness_mode="private",
                        player_channel=channel,
                        name=f"block(k={layout.k}, ell={layout.ell})")


def enhanced_protocol_spec(k: int) -> ProtocolSpec:
    return block_protocol_spec(BlockLayout.build(k, 1))


def decode_basic(messages, k: int):
    """Referee rule for the basic protocol: unique hit, unvetoed."""
    hits = [i for i in range(k) if messages[2 * i] == 1]
    if len(hits) == 1 and messages[2 * hits[0] + 1] == 0:
        return hits[0]
    return None


def decode_block(messages, layout: BlockLayout):
    """Referee rule for block protocols, applied to post-zeroing messages.

    Accepts iff exactly one sender (even-position player) shows a nonzero
    code and its verifier shows zero; the output is the coded symbol.
    """
    m = layout.m
    live = [t for t in range(2 * m) if messages[2 * t] != 0]
    if len(live) != 1:
        return None
    t = live[0]
    if messages[2 * t + 1] != 0:
        return None
    return layout.symbol(t % m, messages[2 * t])


def part_masses(p, layout: BlockLayout) -> np.ndarray:
    probs = as_probs(p)
    return np.array([probs[start:stop].sum() for start, stop in layout.parts])


def success_prob_exact(p, layout: BlockLayout) -> float:
    """P[non-abort] for block_sim: prod_j (1 - p(S_j)/2)**2."""
    masses = part_masses(p, layout)
    return float(np.prod((1.0 - masses / 2.0) ** 2))


def basic_success_prob_exact(p) -> float:
    """P[non-abort] for basic_sim_1bit: prod_i (1 - p_i)."""
    return float(np.prod(1.0 - as_probs(p)))


def outcome_distribution(p, layout: BlockLayout) -> tuple[np.ndarray, float]:
    """Exact outcome law of block_sim: (per-symbol probabilities, abort prob).

    P[output = i] = p_i * success_prob_exact(p), so the conditional law given
    non-abort is p itself.
    """
    rho = success_prob_exact(p, layout)
    probs = as_probs(p) * rho
    return probs, 1.0 - rho


def block_sim_trials(p, layout: BlockLayout, trials: int, rng, backend=None) -> np.ndarray:
    """Vectorized i.i.d. runs of block_sim; returns symbols with -1 for abort."""
    gen = as_generator(rng)
    pcum = np.cumsum(as_probs(p))
    return _kernels.block_trials(pcum, layout.part_of(), layout.m, int(trials), gen,
                                 backend=backend)


def block_sim(p, layout: BlockLayout, rng) -> SimulationOutcome:
    """One run of the ell-bit block protocol (players, referee zeroing, decode)."""
    sym = int(block_sim_trials(p, layout, 1, rng)[0])
    return SimulationOutcome(symbol=None if sym < 0 else sym)


def basic_sim_1bit(p, rng) -> SimulationOutcome:
    """One run of the 2k-player indicator protocol (no referee randomness)."""
    gen = as_generator(rng)
    probs = as_probs(p)
    k = probs.size
    samples = sample_iid(probs, 2 * k, gen)
    messages = [1 if int(samples[i]) == i // 2 else 0 for i in range(2 * k)]
    return SimulationOutcome(symbol=decode_basic(messages, k))


def enhanced_sim_1bit(p, rng) -> SimulationOutcome:
    """One run of the two-copy 1-bit protocol (4k players)."""
    return block_sim(p, BlockLayout.build(as_probs(p).size, 1), rng)


def groups_for_alpha(alpha: float) -> int:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return 10 * math.ceil(math.log2(1.0 / alpha))


def players_for_full_sim(k: int, ell: int, alpha: float) -> int:
    """Player budget of full_sim before the direct-send shortcut."""
    m = math.ceil(k / ((1 << ell) - 1))
    return 4 * m * groups_for_alpha(alpha)


def full_sim(p, ell: int, alpha: float, rng) -> SimulationReport:
    """Simulate one sample with abort probability at most alpha.

    Runs independent block groups and decodes the first non-aborting one.
    Each group succeeds with probability > 1/4, so 10*ceil(log2(1/alpha))
    groups suffice.  When ell is large enough to address every symbol
    (2**ell >= k) a single player just transmits its sample.
    """
    gen = as_generator(rng)
    probs = as_probs(p)
    k = probs.size
    if (1 << ell) >= k:
        sym = int(sample_iid(probs, 1, gen)[0])
        return SimulationReport(outcome=SimulationOutcome(symbol=sym),
                                players_used=1, groups_used=0)
    layout = BlockLayout.build(k, ell)
    groups = groups_for_alpha(alpha)
    outcomes = block_sim_trials(probs, layout, groups, gen)
    hits = np.flatnonzero(outcomes >= 0)
    sym = int(outcomes[hits[0]]) if hits.size else None
    return SimulationReport(outcome=SimulationOutcome(symbol=sym),
                            players_used=groups * layout.players,
                            groups_used=groups)


def full_sim_trials(p, ell: int, alpha: float, trials: int, rng) -> np.ndarray:
    """Vectorized full_sim outcomes (symbols, -1 for abort), trial-major."""
    gen = as_generator(rng)
    probs = as_probs(p)
    k = probs.size
    if (1 << ell) >= k:
        return sample_iid(probs, trials, gen)
    layout = BlockLayout.build(k, ell)
    groups = groups_for_alpha(alpha)
    flat = block_sim_trials(probs, layout, trials * groups, gen)
    per_run = flat.reshape(int(trials), groups)
    any_hit = (per_run >= 0).any(axis=1)
    first = np.argmax(per_run >= 0, axis=1)
    picked = per_run[np.arange(int(trials)), first]
    return np.where(any_hit, picked, -1)
