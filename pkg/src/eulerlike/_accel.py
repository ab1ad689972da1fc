"""Backend switch for the hot loops.

Set ``EULERLIKE_DISABLE_NUMBA=1`` to force the pure-numpy kernels (also the
automatic fallback when numba is not importable).  ``set_backend`` overrides
the choice at runtime, which the benchmark and the backend-parity tests use.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_DISABLED = os.environ.get("EULERLIKE_DISABLE_NUMBA", "").strip() not in ("", "0")

HAVE_NUMBA = numba is not None
_backend = "numba" if (HAVE_NUMBA and not _DISABLED) else "numpy"


def njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _backend = _backend, name
    return prev
