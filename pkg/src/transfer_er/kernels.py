"""Backend selection for the solver kernels.

The compiled extension is preferred; the numpy fallback is used when it
cannot be imported or when ``TRANSFER_ER_PURE`` is set to a truthy value.
``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _pykernels

_FORCE_PURE = os.environ.get("TRANSFER_ER_PURE", "").lower() in ("1", "true", "yes")

try:
    if _FORCE_PURE:
        raise ImportError("pure backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def _prep(X, src_a, src_b):
    return (np.ascontiguousarray(X, dtype=np.float64),
            np.ascontiguousarray(src_a, dtype=np.int64),
            np.ascontiguousarray(src_b, dtype=np.int64))


def forward(X, src_a, src_b, w0, W, impl=None):
    impl = impl or _impl
    X, src_a, src_b = _prep(X, src_a, src_b)
    return impl.forward(X, src_a, src_b, np.ascontiguousarray(w0, dtype=np.float64),
                        np.ascontiguousarray(W, dtype=np.float64))


def backward(X, src_a, src_b, r, n_sources, impl=None):
    impl = impl or _impl
    X, src_a, src_b = _prep(X, src_a, src_b)
    return impl.backward(X, src_a, src_b, np.ascontiguousarray(r, dtype=np.float64),
                         int(n_sources))


def soft_threshold(v, tau, impl=None):
    impl = impl or _impl
    return impl.soft_threshold(np.asarray(v, dtype=np.float64), float(tau))


def available_backends():
    """Map of backend name to module, for tests and benchmarks."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
