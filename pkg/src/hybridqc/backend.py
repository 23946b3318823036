"""Execution backend selection for the hot numerical kernels.

Two interchangeable kernel implementations exist: numba-jitted loops and
pure-numpy array code.  The jitted path is the default whenever numba
imports cleanly; setting the environment variable ``HYBRIDQC_NO_NUMBA`` to
``1``/``true``/``yes``/``on`` forces the numpy path.  Both paths produce
bit-identical transported fields, so the choice only affects speed.

``HYBRIDQC_THREADS`` caps the numba thread count.  It must take effect
before numba spins up its thread pool, which is why this module is imported
first by the package ``__init__``.  Per-run results do not depend on the
thread count: every parallel kernel is a pure elementwise map, and all
reductions happen in (deterministic, single-threaded) numpy.
"""

from __future__ import annotations

import os
import sys
import warnings


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


THREADS_VAR = "HYBRIDQC_THREADS"
DISABLE_VAR = "HYBRIDQC_NO_NUMBA"

_requested_threads = os.environ.get(THREADS_VAR, "").strip()
if _requested_threads and "numba" not in sys.modules:
    # numba reads NUMBA_NUM_THREADS once, at import time.
    os.environ.setdefault("NUMBA_NUM_THREADS", _requested_threads)

NUMBA_DISABLED = _env_flag(DISABLE_VAR)

if not NUMBA_DISABLED:
    # An outdated TBB install downgrades the threading layer with a warning
    # when the pool first launches (which can happen long after import); the
    # fallback layers behave identically for our kernels, so silence it for
    # the whole process.
    warnings.filterwarnings("ignore", message=".*TBB.*")
    try:
        from numba import njit, prange  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised only without numba
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:  # pragma: no cover - trivial shims

    def njit(*args, **kwargs):  # type: ignore[no-redef]
        """No-op decorator standing in for numba.njit on the numpy path."""

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap

    def prange(*args):  # type: ignore[no-redef]
        return range(*args)


def backend_name() -> str:
    """Human-readable name of the active kernel backend."""

    return "numba" if NUMBA_ENABLED else "numpy"


def thread_count() -> int:
    """Number of threads the jitted kernels will use (1 on the numpy path)."""

    if not NUMBA_ENABLED:
        return 1
    import numba

    return int(numba.get_num_threads())
