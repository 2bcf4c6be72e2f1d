"""Numba acceleration switch.

Hot kernels ship in two flavours: an ``@njit`` version and a pure
numpy/python fallback. Set ``SGFSIS_NO_NUMBA=1`` to force the fallback
(useful on platforms without a working numba, and for the benchmark).
Both paths produce bitwise-identical results.
"""

import os

_ENV_FLAG = "SGFSIS_NO_NUMBA"


def numba_enabled():
    return os.environ.get(_ENV_FLAG, "") in ("", "0")
