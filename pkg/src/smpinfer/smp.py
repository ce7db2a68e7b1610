"""One-shot simultaneous-message protocols: runtime and exact enumeration.

A protocol has n players; player i holds one sample and sends a single
ell-bit message to a referee, chosen by a channel function.  Channels here
are deterministic given the sample (and the shared public realization, when
the protocol uses one), which is what makes exact transcript enumeration
tractable: the message law factorizes across players.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .dist import as_probs, sample_iid
from .rng import as_generator

DEFAULT_ATOM_BUDGET = 2**24


class Transcript(NamedTuple):
    """The referee's view: one message per player, plus any public realization."""

    messages: tuple
    public_realization: object = None

    def to_json(self) -> str:
        # One byte per message, hex-encoded; ell <= 8 covers every protocol here.
        return json.dumps({"messages": bytes(self.messages).hex()})

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        payload = json.loads(text)
        return cls(messages=tuple(bytes.fromhex(payload["messages"])))


@dataclass(frozen=True)
class SimulationOutcome:
    """Result of one simulation attempt: a symbol, or an abort."""

    symbol: Optional[int]

    @property
    def aborted(self) -> bool:
        return self.symbol is None


@dataclass
class ProtocolSpec:
    """Static description of a simultaneous-message protocol.

    player_channel(i, sample, public) -> int message in [0, 2**ell).  For
    private-coin protocols the public argument is None.  public_draw, when
    set, samples the shared realization once per run.
    """

    n: int
    ell: int
    randomness_mode: str
    player_channel: Callable[[int, int, object], int]
    public_draw: Optional[Callable] = None
    name: str = field(default="")

    def __post_init__(self):
        if self.randomness_mode not in ("private", "public"):
            raise ValueError("randomness_mode must be 'private' or 'public'")
        if self.randomness_mode == "public" and self.public_draw is None:
            raise ValueError("public protocols need a public_draw")
        if self.n < 1 or self.ell < 1:
            raise ValueError("need at least one player and one message bit")


def run_protocol(spec: ProtocolSpec, p, rng) -> Transcript:
    """Execute one round: draw samples, apply channels, collect messages."""
    gen = as_generator(rng)
    public = spec.public_draw(gen) if spec.public_draw is not None else None
    samples = sample_iid(p, spec.n, gen)
    limit = 1 << spec.ell
    messages = []
    for i in range(spec.n):
        msg = int(spec.player_channel(i, int(samples[i]), public))
        if not 0 <= msg < limit:
            raise ValueError(f"player {i} emitted {msg}, outside [0, 2**{spec.ell})")
        messages.append(msg)
    return Transcript(messages=tuple(messages), public_realization=public)


def message_marginals(spec: ProtocolSpec, p) -> list[np.ndarray]:
    """Per-player message distributions under i.i.d. samples from p.

    Only valid for private-coin protocols with deterministic channels; the
    messages are then mutually independent and these marginals determine the
    whole transcript law.
    """
    if spec.randomness_mode != "private":
        raise ValueError("marginals factorize only for private-coin protocols")
    probs = as_probs(p)
    size = 1 << spec.ell
    out = []
    for i in range(spec.n):
        marg = np.zeros(size)
        for x, px in enumerate(probs):
            marg[spec.player_channel(i, x, None)] += px
        out.append(marg)
    return out


def flip_nonzero_marginal(marg: np.ndarray, flip_prob: float = 0.5) -> np.ndarray:
    """Exact effect on one message marginal of the referee's zeroing step.

    The referee independently replaces each nonzero message with 0 with
    probability flip_prob; on a single player's marginal this moves
    flip_prob of all nonzero mass onto 0.
    """
    out = marg * (1.0 - flip_prob)
    out[0] = marg[0] + flip_prob * (1.0 - marg[0])
    return out


def apply_referee_flip(marginals: list[np.ndarray], flip_prob: float = 0.5) -> list[np.ndarray]:
    """Referee-side transform over transcript law, in marginal form.

    Flips are independent across players, so independence of messages is
    preserved and the transform acts marginal by marginal.
    """
    return [flip_nonzero_marginal(m, flip_prob) for m in marginals]


def enumerate_transcripts(
    spec: ProtocolSpec,
    p,
    referee_flip: bool = False,
    max_atoms: int = DEFAULT_ATOM_BUDGET,
) -> dict[Transcript, float]:
    """Exact transcript distribution as {Transcript: probability}.

    Enumerates the product of per-player message supports.  The atom count
    (product of support sizes, at most 2**(ell*n)) must stay within
    max_atoms; larger protocols raise rather than thrash.

    With referee_flip=True the returned law is the one the referee decodes
    from after its zeroing step.
    """
    marginals = message_marginals(spec, p)
    if referee_flip:
        marginals = apply_referee_flip(marginals)
    supports = [np.flatnonzero(m > 0.0) for m in marginals]
    atoms = 1
    for s in supports:
        atoms *= s.size
        if atoms > max_atoms:
            raise ValueError(
                f"transcript enumeration needs {atoms}+ atoms, over the "
                f"max_atoms budget of {max_atoms}"
            )
    result: dict[Transcript, float] = {}
    # Iterative odometer over the support product; recursion depth stays 0.
    idx = [0] * spec.n
    while True:
        prob = 1.0
        msgs = []
        for i in range(spec.n):
            m = int(supports[i][idx[i]])
            msgs.append(m)
            prob *= marginals[i][m]
        result[Transcript(messages=tuple(msgs))] = prob
        pos = spec.n - 1
        while pos >= 0:
            idx[pos] += 1
            if idx[pos] < supports[pos].size:
                break
            idx[pos] = 0
            pos -= 1
        if pos < 0:
            break
    return result
