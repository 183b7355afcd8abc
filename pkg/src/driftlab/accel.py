"""Numba acceleration toggle.

Hot kernels ship in two versions: a numba ``@njit`` build and a pure
numpy/scipy build. The numba build is used when numba imports cleanly and the
environment variable ``DRIFTLAB_DISABLE_NUMBA`` is unset/falsy. Results are
identical to floating-point round-off; ``benchmarks/bench_kernels.py`` compares
the two.
"""

from __future__ import annotations

import os

_ENV_FLAG = "DRIFTLAB_DISABLE_NUMBA"

try:
    import numba as _numba

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover - import guard
    _numba = None
    _HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")


_ENABLED = _HAVE_NUMBA and not _env_disabled()


def numba_enabled() -> bool:
    """True when the jitted kernel path is active."""
    return _ENABLED


def jit_kernel(func):
    """Compile ``func`` with numba when enabled, else return it unchanged.

    Kernels are written in nopython-compatible style so the same source runs
    under both paths; the numpy fallback additionally has vectorized twins for
    the loops that would be prohibitively slow in the interpreter.
    """
    if _ENABLED:
        return _numba.njit(cache=True, nogil=True, fastmath=False)(func)
    return func
