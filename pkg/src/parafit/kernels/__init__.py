"""Residual-update kernels with a compiled core and a numpy fallback.

The compiled extension (``_core``, Cython) is preferred; if it was not built
the numpy implementation (``_core_py``) is used instead.  Set
``PARAFIT_KERNELS=python`` or ``PARAFIT_KERNELS=compiled`` to force a backend.
"""
import os

from . import _core_py

LS, QUANTILE, HUBER, SVR, HINGE, SQHINGE = range(6)

#: loss name -> (kernel loss id, ProblemSpec parameter field or None)
LOSS_IDS = {
    "least_squares": (LS, None),
    "quantile": (QUANTILE, "tau"),
    "huber": (HUBER, "delta"),
    "svr": (SVR, "epsilon"),
    "hinge": (HINGE, None),
    "squared_hinge": (SQHINGE, None),
}

try:
    from . import _core
except ImportError:
    _core = None


def get_backend(name):
    """Return the kernel module for ``name`` ('compiled' or 'python')."""
    if name == "python":
        return _core_py
    if name == "compiled":
        if _core is None:
            raise ImportError("compiled kernel extension is not available")
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    return ("python",) if _core is None else ("compiled", "python")


_forced = os.environ.get("PARAFIT_KERNELS")
if _forced:
    _impl = get_backend(_forced)
else:
    _impl = _core if _core is not None else _core_py

BACKEND = "compiled" if _impl is _core else "python"

regression_r = _impl.regression_r
classification_r = _impl.classification_r
logistic_r = _impl.logistic_r
