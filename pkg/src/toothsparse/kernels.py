"""Kernel backend selection.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy fallback in ``_pykernels`` is used.  Setting ``TOOTHSPARSE_PURE_PYTHON=1``
forces the fallback.  ``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels

if os.environ.get("TOOTHSPARSE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "compiled" if _impl is not _pykernels else "python"

nearest = _impl.nearest
cpd_posterior = _impl.cpd_posterior
weighted_sq_distance = _impl.weighted_sq_distance
admm_bpdn = _impl.admm_bpdn
fnv1a64 = _impl.fnv1a64


def backends():
    """Map of available backend name -> kernel module."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["compiled"] = _ckernels
    except ImportError:
        pass
    return out
