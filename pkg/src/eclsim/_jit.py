"""Optional numba dependency.

Set ``ECLSIM_DISABLE_NUMBA=1`` to force the pure-numpy kernels.
"""
import os

_disabled = os.environ.get("ECLSIM_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    if HAVE_NUMBA:
        return _njit(*args, cache=True, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


DEFAULT_BACKEND = "numba" if HAVE_NUMBA else "numpy"
