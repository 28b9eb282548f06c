"""Hot raster kernels, compiled when available.

The Cython extension ``raintrack._kernels`` is used if it was built; otherwise
the scipy-backed implementations in ``raintrack._pykernels`` are used. Set
``RAINTRACK_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

HAVE_CYTHON = _compiled is not None

if HAVE_CYTHON and os.environ.get("RAINTRACK_PURE_PYTHON", "") in ("", "0"):
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"


def label(mask, connectivity=8, backend=None):
    """Connected labeling of a 2-D boolean mask.

    Returns ``(labels, n)`` with labels ``1..n`` numbered in raster order of
    each region's first cell and 0 for background.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity!r}")
    impl = _select(backend)
    return impl.label(np.ascontiguousarray(mask, dtype=np.uint8), connectivity)


def dilate_square(mask, radius, backend=None):
    """Dilate a 2-D boolean mask by a ``(2*radius+1)`` square; returns bool."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    impl = _select(backend)
    out = impl.dilate_square(np.ascontiguousarray(mask, dtype=np.uint8), int(radius))
    return np.asarray(out, dtype=bool)


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if not HAVE_CYTHON:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")
