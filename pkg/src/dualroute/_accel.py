"""Numba switch.

Hot kernels exist twice: a numba ``@njit`` version and a pure-numpy one.
``DUALROUTE_NUMBA=0`` in the environment selects the numpy path at import;
``USE_NUMBA`` can also be flipped at runtime (tests do this).
"""
import os

ENV_FLAG = "DUALROUTE_NUMBA"

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorate(func):
            return func

        return decorate


def _flag_enabled():
    value = os.environ.get(ENV_FLAG, "1").strip().lower()
    return value not in {"0", "false", "no", "off"}


USE_NUMBA = NUMBA_AVAILABLE and _flag_enabled()


def backend():
    return "numba" if USE_NUMBA else "numpy"
