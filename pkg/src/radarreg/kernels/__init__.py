"""Mixture evaluation kernels with a compiled core and a numpy fallback.

The compiled Cython extension (``_gmmkern``) is preferred when it imported
successfully; otherwise the pure-numpy reference (``_reference``) is used.
Set ``RADARREG_BACKEND=python`` or ``=native`` to force a choice, or call
:func:`set_backend` at runtime (used by the parity tests and the backend
benchmark).  Both backends implement identical signatures and agree to
floating-point roundoff.
"""

from __future__ import annotations

import os

from . import _reference

try:
    from . import _gmmkern
except ImportError:  # pragma: no cover - depends on build environment
    _gmmkern = None

BACKEND = ""
gmm_nll = None
msm_residuals = None
msm_linearize = None


def available_backends() -> tuple[str, ...]:
    return ("native", "python") if _gmmkern is not None else ("python",)


def set_backend(name: str) -> str:
    """Select the kernel backend ('native' or 'python'); returns the choice."""
    global BACKEND, gmm_nll, msm_residuals, msm_linearize
    if name == "native":
        if _gmmkern is None:
            raise RuntimeError("compiled kernel backend is not available")
        impl = _gmmkern
    elif name == "python":
        impl = _reference
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name
    gmm_nll = impl.gmm_nll
    msm_residuals = impl.msm_residuals
    msm_linearize = impl.msm_linearize
    return BACKEND


_requested = os.environ.get("RADARREG_BACKEND", "").strip().lower()
if _requested:
    set_backend(_requested)
else:
    set_backend("native" if _gmmkern is not None else "python")
