"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is used. :func:`use_backend` switches explicitly (tests, benchmarks).
"""

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

BACKEND = "compiled" if _ckernels is not None else "python"
_impl = _BACKENDS[BACKEND]


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select ``"compiled"`` or ``"python"``; returns the previous backend name."""
    global BACKEND, _impl
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    prev, BACKEND, _impl = BACKEND, name, _BACKENDS[name]
    return prev


def align_rows(X, T):
    return _impl.align_rows(X, T)


def l1_pairs(gt, x0, thetas, phis):
    return _impl.l1_pairs(gt, x0, thetas, phis)


def l1_grid(gt, x0, cos_t, sin_t, cos_p, sin_p):
    return _impl.l1_grid(gt, x0, cos_t, sin_t, cos_p, sin_p)
