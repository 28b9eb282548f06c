"""Fallback raster kernels built on scipy.ndimage (same contracts as ``_kernels``)."""

import numpy as np
from scipy import ndimage

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def label(mask, connectivity=8):
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_STRUCTURES[connectivity])
    labels = labels.astype(np.int32, copy=False)
    if n > 1:
        # enforce raster order of first cell regardless of scipy internals
        flat = labels.ravel()
        first = np.full(n + 1, flat.size, dtype=np.int64)
        nz = np.flatnonzero(flat)
        np.minimum.at(first, flat[nz], nz)
        order = np.argsort(first[1:], kind="stable")
        remap = np.zeros(n + 1, dtype=np.int32)
        remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
        labels = remap[labels]
    return labels, int(n)


def dilate_square(mask, radius):
    mask = np.asarray(mask, dtype=np.uint8)
    if radius <= 0:
        return mask.copy()
    size = 2 * radius + 1
    out = ndimage.maximum_filter1d(mask, size, axis=1, mode="constant", cval=0)
    return ndimage.maximum_filter1d(out, size, axis=0, mode="constant", cval=0)
