"""NumPy implementation of the z-buffer triangle fill.

Must stay expression-for-expression identical to the compiled kernel in
_fill.pyx: every per-pixel quantity is computed with the same operations
in the same order, so masks and depth buffers match bit for bit across
backends.
"""

import numpy as np


def fill(verts, bbox, labels, inv_buf, label_buf, row_start, row_end):
    """Rasterize triangles into rows [row_start, row_end) of the buffers.

    verts: (T, 9) float64, per triangle x0,y0,iz0,x1,y1,iz1,x2,y2,iz2 with
        positive screen-space doubled area (canonicalized by the caller).
    bbox: (T, 4) int32 half-open pixel bounds x_lo, x_hi, y_lo, y_hi,
        already clamped to the image.
    labels: (T,) uint8 part labels.
    inv_buf: (H, W) float64 inverse-depth buffer, background 0.
    label_buf: (H, W) uint8 label buffer, background 0.

    Triangles are processed in order; a later triangle only wins a pixel
    with strictly greater inverse depth, so the first triangle wins ties.
    Pixels are sampled at centers (x + 0.5, y + 0.5) with a top-left fill
    rule: an edge-on-pixel counts as inside only for edges going up
    (dy < 0) or exactly horizontal and going right (dy == 0, dx > 0).
    """
    for t in range(verts.shape[0]):
        x_lo = int(bbox[t, 0])
        x_hi = int(bbox[t, 1])
        y_lo = max(int(bbox[t, 2]), row_start)
        y_hi = min(int(bbox[t, 3]), row_end)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        x0, y0, iz0, x1, y1, iz1, x2, y2, iz2 = verts[t]
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

        px = np.arange(x_lo, x_hi, dtype=np.float64) + 0.5
        py = (np.arange(y_lo, y_hi, dtype=np.float64) + 0.5)[:, None]
        e0 = dx01 * (py - y0) - dy01 * (px - x0)
        e1 = dx12 * (py - y1) - dy12 * (px - x1)
        e2 = dx20 * (py - y2) - dy20 * (px - x2)
        inside = (
            ((e0 > 0.0) | ((e0 == 0.0) & incl0))
            & ((e1 > 0.0) | ((e1 == 0.0) & incl1))
            & ((e2 > 0.0) | ((e2 == 0.0) & incl2))
        )
        inv_z = (e1 * iz0 + e2 * iz1 + e0 * iz2) / area2

        buf_view = inv_buf[y_lo:y_hi, x_lo:x_hi]
        lab_view = label_buf[y_lo:y_hi, x_lo:x_hi]
        upd = inside & (inv_z > buf_view)
        buf_view[upd] = inv_z[upd]
        lab_view[upd] = labels[t]
