"""Hot-loop kernels with a compiled core and a pure numpy fallback.

The compiled Cython extension is preferred when importable; set the
environment variable ``PFSOLVE_KERNELS`` to ``numpy`` or ``cython`` to force
a backend (``cython`` raises if the extension is missing). The active choice
is exposed as ``BACKEND``.
"""

from __future__ import annotations

import os

_requested = os.environ.get("PFSOLVE_KERNELS", "auto").lower()

if _requested not in ("auto", "cython", "numpy"):
    raise ValueError(
        f"PFSOLVE_KERNELS must be auto, cython or numpy, got {_requested!r}"
    )

if _requested in ("auto", "cython"):
    try:
        from . import _cy as _impl

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _np as _impl

        BACKEND = "numpy"
else:
    from . import _np as _impl

    BACKEND = "numpy"

tanh_fwd = _impl.tanh_fwd
tanh_bwd = _impl.tanh_bwd
softplus_fwd = _impl.softplus_fwd
softplus_bwd = _impl.softplus_bwd
sq_norm = _impl.sq_norm
scale_inplace = _impl.scale_inplace
adamw_update = _impl.adamw_update


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        from . import _cy  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the backend module by name (used by the kernel benchmark)."""
    if name == "numpy":
        from . import _np

        return _np
    if name == "cython":
        from . import _cy

        return _cy
    raise ValueError(f"unknown kernel backend {name!r}")
