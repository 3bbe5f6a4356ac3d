# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled z-buffer triangle fill.

Expression-for-expression identical to the NumPy fallback in
_fallback.py (see its docstring for the contract); compiled with
-ffp-contract=off so no multiply-add fusion perturbs the arithmetic.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def fill(double[:, ::1] verts, int[:, ::1] bbox, unsigned char[::1] labels,
         double[:, ::1] inv_buf, unsigned char[:, ::1] label_buf,
         int row_start, int row_end):
    cdef Py_ssize_t t, x, y
    cdef int x_lo, x_hi, y_lo, y_hi
    cdef double x0, y0, iz0, x1, y1, iz1, x2, y2, iz2
    cdef double dx01, dy01, dx12, dy12, dx20, dy20, area2
    cdef double px, py, e0, e1, e2, inv_z
    cdef bint incl0, incl1, incl2, inside
    cdef unsigned char lab
    cdef Py_ssize_t ntri = verts.shape[0]

    with nogil:
        for t in range(ntri):
            x_lo = bbox[t, 0]
            x_hi = bbox[t, 1]
            y_lo = bbox[t, 2]
            y_hi = bbox[t, 3]
            if y_lo < row_start:
                y_lo = row_start
            if y_hi > row_end:
                y_hi = row_end
            if x_lo >= x_hi or y_lo >= y_hi:
                continue
            x0 = verts[t, 0]
            y0 = verts[t, 1]
            iz0 = verts[t, 2]
            x1 = verts[t, 3]
            y1 = verts[t, 4]
            iz1 = verts[t, 5]
            x2 = verts[t, 6]
            y2 = verts[t, 7]
            iz2 = verts[t, 8]
            lab = labels[t]
            dx01 = x1 - x0
            dy01 = y1 - y0
            dx12 = x2 - x1
            dy12 = y2 - y1
            dx20 = x0 - x2
            dy20 = y0 - y2
            area2 = dx01 * (y2 - y0) - dy01 * (x2 - x0)
            incl0 = dy01 < 0.0 or (dy01 == 0.0 and dx01 > 0.0)
            incl1 = dy12 < 0.0 or (dy12 == 0.0 and dx12 > 0.0)
            incl2 = dy20 < 0.0 or (dy20 == 0.0 and dx20 > 0.0)

            for y in range(y_lo, y_hi):
                py = y + 0.5
                for x in range(x_lo, x_hi):
                    px = x + 0.5
                    e0 = dx01 * (py - y0) - dy01 * (px - x0)
                    e1 = dx12 * (py - y1) - dy12 * (px - x1)
                    e2 = dx20 * (py - y2) - dy20 * (px - x2)
                    inside = (
                        (e0 > 0.0 or (e0 == 0.0 and incl0))
                        and (e1 > 0.0 or (e1 == 0.0 and incl1))
                        and (e2 > 0.0 or (e2 == 0.0 and incl2))
                    )
                    if inside:
                        inv_z = (e1 * iz0 + e2 * iz1 + e0 * iz2) / area2
                        if inv_z > inv_buf[y, x]:
                            inv_buf[y, x] = inv_z
                            label_buf[y, x] = lab
