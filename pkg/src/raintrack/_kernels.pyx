# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled raster kernels: connected labeling and square dilation."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t root = x
    cdef Py_ssize_t nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


cdef inline void _union(Py_ssize_t[::1] parent, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a < b:
        parent[b] = a
    elif b < a:
        parent[a] = b


def label(const cnp.uint8_t[:, ::1] mask, int connectivity=8):
    """Label connected True regions; ids 1..n follow raster order of each region's first cell."""
    cdef Py_ssize_t ny = mask.shape[0]
    cdef Py_ssize_t nx = mask.shape[1]
    cdef Py_ssize_t r, c, lab, nxt_lab = 1, n = 0
    cdef bint diag = connectivity == 8
    out_arr = np.zeros((ny, nx), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] out = out_arr
    parent_arr = np.zeros(ny * nx // 2 + 2, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    final_arr = np.zeros(ny * nx // 2 + 2, dtype=np.intp)
    cdef Py_ssize_t[::1] final = final_arr
    cdef Py_ssize_t root

    with nogil:
        for r in range(ny):
            for c in range(nx):
                if not mask[r, c]:
                    continue
                lab = 0
                if c > 0 and out[r, c - 1]:
                    lab = out[r, c - 1]
                if r > 0:
                    if out[r - 1, c]:
                        if lab:
                            _union(parent, lab, out[r - 1, c])
                        else:
                            lab = out[r - 1, c]
                    if diag:
                        if c > 0 and out[r - 1, c - 1]:
                            if lab:
                                _union(parent, lab, out[r - 1, c - 1])
                            else:
                                lab = out[r - 1, c - 1]
                        if c + 1 < nx and out[r - 1, c + 1]:
                            if lab:
                                _union(parent, lab, out[r - 1, c + 1])
                            else:
                                lab = out[r - 1, c + 1]
                if not lab:
                    lab = nxt_lab
                    parent[lab] = lab
                    nxt_lab += 1
                out[r, c] = <cnp.int32_t>lab

        # roots are the minimum provisional label of each region, which is the
        # label of its first raster cell, so numbering roots in order is raster order
        for lab in range(1, nxt_lab):
            root = _find(parent, lab)
            if root == lab:
                n += 1
                final[lab] = n
            else:
                final[lab] = final[root]
        for r in range(ny):
            for c in range(nx):
                if out[r, c]:
                    out[r, c] = <cnp.int32_t>final[out[r, c]]
    return out_arr, n


def dilate_square(const cnp.uint8_t[:, ::1] mask, int radius):
    """Binary dilation by a (2*radius+1)^2 square, clipped at the grid edge."""
    cdef Py_ssize_t ny = mask.shape[0]
    cdef Py_ssize_t nx = mask.shape[1]
    cdef Py_ssize_t r, c, lo, hi, cnt
    cdef Py_ssize_t R = radius
    tmp_arr = np.zeros((ny, nx), dtype=np.uint8)
    out_arr = np.zeros((ny, nx), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] tmp = tmp_arr
    cdef cnp.uint8_t[:, ::1] out = out_arr
    if R <= 0:
        out_arr[...] = np.asarray(mask)
        return out_arr
    with nogil:
        for r in range(ny):
            cnt = 0
            hi = R if R < nx - 1 else nx - 1
            for c in range(hi + 1):
                cnt += mask[r, c] != 0
            for c in range(nx):
                if cnt:
                    tmp[r, c] = 1
                hi = c + R + 1
                lo = c - R
                if hi < nx:
                    cnt += mask[r, hi] != 0
                if lo >= 0:
                    cnt -= mask[r, lo] != 0
        for c in range(nx):
            cnt = 0
            hi = R if R < ny - 1 else ny - 1
            for r in range(hi + 1):
                cnt += tmp[r, c]
            for r in range(ny):
                if cnt:
                    out[r, c] = 1
                hi = r + R + 1
                lo = r - R
                if hi < ny:
                    cnt += tmp[hi, c]
                if lo >= 0:
                    cnt -= tmp[lo, c]
    return out_arr
