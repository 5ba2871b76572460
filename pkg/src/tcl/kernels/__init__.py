"""Hot kernels with a compiled backend and a pure-numpy fallback.

The compiled module is used when it was built and ``TCL_PURE_PYTHON`` is not
set to a truthy value. ``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _pykernels

_force_pure = os.environ.get("TCL_PURE_PYTHON", "").lower() in {"1", "true", "yes"}

_impl = _pykernels
BACKEND = "python"
if not _force_pure:
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def available_backends():
    """Return a mapping name -> module for every importable backend."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


def infonce_rows(logits, partner, valid):
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    partner = np.ascontiguousarray(partner, dtype=np.intp)
    valid = np.ascontiguousarray(valid, dtype=np.uint8)
    return _impl.infonce_rows(logits, partner, valid)


def dense_rows(x, weight, bias, relu=False):
    return _impl.dense_rows(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(weight, dtype=np.float64),
        np.ascontiguousarray(bias, dtype=np.float64).reshape(-1),
        relu,
    )


def softmax_rows(x):
    return _impl.softmax_rows(np.ascontiguousarray(x, dtype=np.float64))
