"""Tunable constants hidden inside the asymptotic player bounds.

The protocols are stated up to absolute constants; concrete runs need real
numbers.  Defaults live in data/default_constants.json and were produced by
the calibration harness in smpinfer.bench (the file records the seed).  Any
constant can be overridden per call or via the CLI --constants file.

Meaning of the knobs:

* c      - per-block far-detection probability parameter of the public
           tester; sets the vote thresholds theta1/theta2 and the per-block
           failure budget delta'.
* C_blk  - multiplier on the per-block player count m = ceil(C_blk * k /
           (2**(ell/2) * eps**2)).
* C_amp  - multiplier inside the amplification block count
           N = ceil(C_amp * log2(1/delta) / (theta1+theta2-1)**2).
* C_l2   - multiplier in the l2 tester's sample-size rule of thumb
           m >= C_l2 * ||q||_2 / gamma'**2 * log(1/delta').
* c_L    - constant in the learning player bound.
* c_T    - constant in the identity-testing player bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

_FIELDS = ("c", "C_blk", "C_amp", "C_l2", "c_L", "c_T")


@dataclass(frozen=True)
class Constants:
    c: float
    C_blk: float
    C_amp: float
    C_l2: float
    c_L: float
    c_T: float

    def override(self, overrides: dict | None) -> "Constants":
        if not overrides:
            return self
        unknown = set(overrides) - set(_FIELDS)
        if unknown:
            raise ValueError(f"unknown constants: {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in _FIELDS}


def _load_defaults() -> tuple[Constants, dict]:
    text = resources.files("smpinfer.data").joinpath("default_constants.json").read_text()
    payload = json.loads(text)
    values = {name: float(payload[name]) for name in _FIELDS}
    return Constants(**values), payload


DEFAULTS, DEFAULTS_METADATA = _load_defaults()


def resolve(constants=None, overrides: dict | None = None) -> Constants:
    """Normalize the (constants, overrides) calling convention used package-wide."""
    base = constants if constants is not None else DEFAULTS
    if isinstance(base, dict):
        base = DEFAULTS.override(base)
    return base.override(overrides)


def load_constants_file(path) -> Constants:
    with open(path) as fh:
        payload = json.load(fh)
    return DEFAULTS.override({k: v for k, v in payload.items() if k in _FIELDS})
