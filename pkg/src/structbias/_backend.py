"""Backend selection for the compiled kernels.

Set ``STRUCTBIAS_NUMBA=0`` in the environment before import to route the
public kernels through their pure-numpy implementations. The numba
versions stay importable either way so both paths can be compared.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on the environment
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("STRUCTBIAS_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("0", "false", "no", "off")


def njit(fn):
    """Compile ``fn`` in nopython mode when numba is present."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
