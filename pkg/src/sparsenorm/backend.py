"""Kernel backend selection.

The environment variable ``SPARSENORM_BACKEND`` picks the implementation of
the batched kernels:

* ``auto`` (default) - numba when importable, else numpy
* ``numba``          - require the jitted kernels
* ``numpy``          - force the pure-numpy fallback

The choice is resolved once at import time; ``kernels`` is the active module.
"""

import os


def load_kernels(name):
    """Import a kernel module by backend name ('numpy' or 'numba')."""
    if name == "numpy":
        from . import _kernels_numpy
        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba
        return _kernels_numba
    raise ValueError(f"unknown backend {name!r} (expected 'numpy' or 'numba')")


def available_backends():
    names = ["numpy"]
    try:
        import numba  # noqa: F401
        names.append("numba")
    except ImportError:
        pass
    return names


def _resolve():
    pref = os.environ.get("SPARSENORM_BACKEND", "auto").strip().lower()
    if pref in ("", "auto"):
        try:
            return load_kernels("numba")
        except ImportError:
            return load_kernels("numpy")
    return load_kernels(pref)


kernels = _resolve()
ACTIVE = kernels.NAME
