"""Kernel backend selection.

The hot numeric loops live in :mod:`pexplain.kernels` in two variants: a
pure-numpy one and a numba ``@njit`` one. The environment variable
``PE_BACKEND`` picks which variant is active:

  PE_BACKEND=numba   force numba (ImportError if unavailable)
  PE_BACKEND=numpy   force the pure-numpy fallback
  unset / auto       numba when importable, numpy otherwise

The flag is read once at import time; ``pe bench-backend`` times both
variants side by side regardless of the flag.
"""
import os

_FLAG = os.environ.get("PE_BACKEND", "auto").lower()

if _FLAG not in ("auto", "numba", "numpy"):
    raise ValueError(f"PE_BACKEND must be auto|numba|numpy, got {_FLAG!r}")


def _try_numba():
    try:
        from numba import njit  # noqa: F401
        return True
    except ImportError:
        return False


HAVE_NUMBA = _try_numba()

if _FLAG == "numba" and not HAVE_NUMBA:
    raise ImportError("PE_BACKEND=numba but numba is not importable")

USE_NUMBA = HAVE_NUMBA if _FLAG == "auto" else (_FLAG == "numba")


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
