"""Numba switch.

Hot kernels are compiled with numba when it is importable and the
``CKD_DISABLE_NUMBA`` environment variable is unset (or "0"). Otherwise the
pure-numpy implementations in :mod:`ckd.kernels` are used. The flag is read
once, at import time.
"""

import os

_flag = os.environ.get("CKD_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("numba disabled by CKD_DISABLE_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


def backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
