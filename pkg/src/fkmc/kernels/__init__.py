"""Hot kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time from ``FKMC_BACKEND`` (``numba`` or
``numpy``).  Without the variable, numba is used when it imports cleanly and
``NUMBA_DISABLE_JIT`` is not set.
"""

import os

from . import _numpy

BACKENDS = ("numba", "numpy")


def _select():
    want = os.environ.get("FKMC_BACKEND", "").strip().lower()
    if want and want not in BACKENDS:
        raise ImportError(f"FKMC_BACKEND must be one of {BACKENDS}, got {want!r}")
    if want == "numpy" or os.environ.get("NUMBA_DISABLE_JIT", "0") not in ("", "0"):
        return "numpy", _numpy
    try:
        from . import _numba
    except ImportError:
        if want == "numba":
            raise
        return "numpy", _numpy
    return "numba", _numba


BACKEND, _impl = _select()


def get_backend(name):
    """Return the kernel module for ``name`` regardless of the active choice."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ValueError(f"unknown backend {name!r}")


normals = _impl.normals
uniforms = _impl.uniforms
increments = _impl.increments
trace_constant = _impl.trace_constant
cholesky_batch = _impl.cholesky_batch
kahan_sum = _impl.kahan_sum
thomas = _impl.thomas
philox4x32 = _impl.philox4x32
quantile = _impl.quantile

__all__ = [
    "BACKEND",
    "get_backend",
    "normals",
    "uniforms",
    "increments",
    "trace_constant",
    "cholesky_batch",
    "kahan_sum",
    "thomas",
    "philox4x32",
    "quantile",
]
