"""Backend selection for the numeric kernels.

``DISTEVAL_BACKEND=numpy`` forces the pure-numpy path; the default is numba
when it imports cleanly.  The choice is made once, at import time.
"""

import os

_requested = os.environ.get("DISTEVAL_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"DISTEVAL_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with our default options, or identity without numba."""
    opts = dict(cache=True, nogil=True, error_model="numpy")
    opts.update(kwargs)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    if args and callable(args[0]):
        return numba.njit(**opts)(args[0])
    return numba.njit(*args, **opts)
