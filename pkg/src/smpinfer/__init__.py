"""smpinfer: distribution simulation and testing under per-player message limits.

Players each hold one i.i.d. sample and may send only ell bits to a central
referee.  This package implements exact simulation protocols built on that
constraint, communication-frugal learning and identity-testing pipelines on
top of them, the public-randomness partition testers (fully random and
4-wise derandomized), and the moment/anticoncentration tooling used to
validate them, plus a benchmarking CLI.
"""

__version__ = "0.1.0"

from .dist import Distribution, l2_distance, paninski_family, pushforward, sample_iid, tv_distance
from .rng import RngStream, derive_seed

__all__ = [
    "Distribution",
    "RngStream",
    "derive_seed",
    "l2_distance",
    "paninski_family",
    "pushforward",
    "sample_iid",
    "tv_distance",
]
