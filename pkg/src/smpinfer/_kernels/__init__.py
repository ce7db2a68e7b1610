"""Kernel backend selection.

The compiled Cython kernels are used when importable; otherwise the numpy
fallback takes over.  SMPINFER_KERNEL_BACKEND=numpy or =cython forces a
choice (forcing cython raises if the extension is missing).  Both backends
follow the same generator draw order, so picking one is a pure speed
decision: results are bit-identical.
"""

from __future__ import annotations

import os

import numpy as np

from . import np_backend

_CHUNK_DOUBLES = 1 << 23  # soft cap on doubles materialized per kernel call


def _load_backend():
    forced = os.environ.get("SMPINFER_KERNEL_BACKEND", "").lower()
    if forced == "numpy":
        return np_backend, "numpy"
    try:
        from . import _cyext
    except ImportError:
        if forced == "cython":
            raise ImportError(
                "SMPINFER_KERNEL_BACKEND=cython but the compiled extension "
                "smpinfer._kernels._cyext is not available"
            )
        return np_backend, "numpy"
    return _cyext, "cython"


_backend, _backend_name = _load_backend()


def backend_name() -> str:
    return _backend_name


def get_backend(name: str):
    """Fetch a backend module by name, for benchmarks and equivalence tests."""
    if name == "numpy":
        return np_backend
    if name == "cython":
        from . import _cyext

        return _cyext
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        from . import _cyext  # noqa: F401
    except ImportError:
        return names
    return names + ["cython"]


def _chunks(trials: int, per_trial_doubles: int):
    step = max(1, _CHUNK_DOUBLES // max(1, per_trial_doubles))
    done = 0
    while done < trials:
        take = min(step, trials - done)
        yield done, take
        done += take


def block_trials(pcum, part_of, m, trials, gen, backend=None) -> np.ndarray:
    """Chunked dispatch to the selected backend's block_trials."""
    mod = _backend if backend is None else get_backend(backend)
    pcum = np.ascontiguousarray(pcum, dtype=np.float64)
    part_of = np.ascontiguousarray(part_of, dtype=np.int64)
    out = np.empty(trials, dtype=np.int64)
    for start, take in _chunks(trials, 8 * m):
        out[start : start + take] = mod.block_trials(pcum, part_of, m, take, gen)
    return out


def balanced_z(delta, L, trials, gen, backend=None) -> np.ndarray:
    """Chunked dispatch to the selected backend's balanced_z."""
    mod = _backend if backend is None else get_backend(backend)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    out = np.empty((trials, L), dtype=np.float64)
    for start, take in _chunks(trials, delta.size):
        out[start : start + take] = mod.balanced_z(delta, L, take, gen)
    return out
