"""Kernel backend selection.

The hot loops (branch-tree traversal, hybrid shot walks) exist twice: as
numba ``@njit`` kernels and as vectorised numpy code. Numba is used when it
imports cleanly unless ``QLBM_DISABLE_NUMBA`` is set to a truthy value.
"""

from __future__ import annotations

import os
import warnings

_TRUTHY = {"1", "true", "yes", "on"}

try:
    import numba

    _HAVE_NUMBA = True
    # numba probes for TBB before falling back to OpenMP; the probe failure is noise
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get("QLBM_DISABLE_NUMBA", "").strip().lower() in _TRUTHY


def numba_available() -> bool:
    return _HAVE_NUMBA


def default_backend() -> str:
    if _HAVE_NUMBA and not numba_disabled_by_env():
        return "numba"
    return "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}; expected 'numba' or 'numpy'")
    if backend == "numba" and not _HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    return backend


def default_threads() -> int:
    raw = os.environ.get("QLBM_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def set_threads(n: int | None) -> int:
    """Cap the number of numba worker threads; returns the value in effect."""
    if n is None:
        n = default_threads()
    if _HAVE_NUMBA:
        limit = numba.config.NUMBA_NUM_THREADS
        n = max(1, min(int(n), limit))
        numba.set_num_threads(n)
        return n
    return 1
