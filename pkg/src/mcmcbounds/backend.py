"""Backend selection for the hot numerical kernels.

Two interchangeable engines exist for every hot loop: a numba-jitted one
and a pure-numpy one.  The active engine is chosen by the environment
variable ``MCMCBOUNDS_BACKEND``:

  * ``numba``  -- force the jitted engine (error if numba is missing)
  * ``numpy``  -- force the pure-numpy engine
  * unset / ``auto`` -- numba when importable, numpy otherwise

Both engines consume the same per-chain random streams and produce
bit-identical simulation output; ``benchmarks/bench_backends.py`` compares
their speed.
"""

from __future__ import annotations

import os

ENV_VAR = "MCMCBOUNDS_BACKEND"

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def active_backend() -> str:
    """Return the engine to use right now: ``"numba"`` or ``"numpy"``."""
    choice = os.environ.get(ENV_VAR, "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if choice == "numba":
        if not HAS_NUMBA:
            raise RuntimeError(
                f"{ENV_VAR}=numba requested but numba is not importable"
            )
        return "numba"
    if choice == "numpy":
        return "numpy"
    raise ValueError(f"unrecognized {ENV_VAR}={choice!r} (use numba|numpy|auto)")


def use_numba() -> bool:
    return active_backend() == "numba"


def set_num_threads(n: int) -> None:
    """Clamp and apply the numba thread count.

    Thread count only affects wall time; simulation output never depends
    on it (every chain owns its output slot and its own random stream).
    """
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if HAS_NUMBA:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
