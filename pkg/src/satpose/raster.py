"""Z-buffer rasterization of the part-labeled mesh, and the mask losses.

render_mask draws the mesh under a pose into a label image: every pixel
takes the part label of the nearest covering triangle, with background
label 0 where nothing projects. The rasterization is deterministic by
construction: pixel centers at (x + 0.5, y + 0.5), a top-left fill rule
for shared edges, a strict depth test so the first triangle drawn wins
ties, and a near-plane clip at 1e-3 m for geometry that straddles the
camera plane. Identical inputs produce bit-identical masks regardless
of thread count or kernel backend.

The loss functions (segmentation cross entropy, discriminator BCE, the
adversarial term, and the combined monitoring objective) are pure
numerical routines over probability grids; no network is involved here.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._kernels import fill
from .errors import EmptyBatch, ShapeMismatch, ZeroPoseError
from .geometry import CameraIntrinsics, LabeledMesh, Pose, quat_to_rotmat
from .heatmap import AdaptiveWingParams, adaptive_wing_loss

__all__ = [
    "NEAR_PLANE_M",
    "FineMask",
    "MaskProbabilities",
    "SampleTerms",
    "render_mask",
    "downsample_majority",
    "mask_cross_entropy",
    "discriminator_bce",
    "adversarial_loss",
    "total_objective",
]

NEAR_PLANE_M = 1e-3

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class FineMask:
    """Per-pixel part labels: 0 background, 1..5 the satellite parts."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError("mask labels must be a 2D array")
        if arr.size and arr.max() > 5:
            raise ValueError("mask labels must be in 0..5")
        arr.flags.writeable = False
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class MaskProbabilities:
    """Per-pixel distribution over the 6 classes: (6, H, W) in [0, 1]."""

    probs: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.probs, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 6:
            raise ValueError("probabilities must have shape (6, H, W)")
        if arr.size:
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
            sums = arr.sum(axis=0)
            if np.max(np.abs(sums - 1.0)) > 1e-6:
                raise ValueError("per-pixel channel sums must equal 1")
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)


def _clip_near(poly, zn):
    """Clip a camera-space polygon against the plane z >= zn."""
    out = []
    n = len(poly)
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        a_in = a[2] >= zn
        b_in = b[2] >= zn
        if a_in:
            out.append(a)
        if a_in != b_in:
            s = (zn - a[2]) / (b[2] - a[2])
            out.append(a + s * (b - a))
    return out


def _prepare(pose: Pose, mesh: LabeledMesh, camera: CameraIntrinsics, height: int, width: int):
    """Transform, clip, project, and canonicalize triangles for the fill.

    Returns (verts, bbox, labels): verts is (T, 9) float64 rows
    x0,y0,iz0,x1,y1,iz1,x2,y2,iz2 with positive doubled screen area,
    bbox is (T, 4) int32 half-open x_lo,x_hi,y_lo,y_hi clamped to the
    image, labels is (T,) uint8.
    """
    R = quat_to_rotmat(pose.rotation)
    cam = mesh.vertices @ R.T + pose.translation
    tris = mesh.triangles
    if tris.shape[0] == 0:
        return (
            np.zeros((0, 9), dtype=np.float64),
            np.zeros((0, 4), dtype=np.int32),
            np.zeros((0,), dtype=np.uint8),
        )

    corners = cam[tris]  # (T, 3, 3)
    front = corners[:, :, 2] >= NEAR_PLANE_M
    n_front = front.sum(axis=1)

    tri_pts = []
    tri_labels = []
    full = n_front == 3
    if np.any(full):
        tri_pts.append(corners[full])
        tri_labels.append(mesh.labels[full])
    for idx in np.flatnonzero((n_front > 0) & ~full):
        poly = _clip_near(list(corners[idx]), NEAR_PLANE_M)
        for k in range(1, len(poly) - 1):
            tri_pts.append(np.array([poly[0], poly[k], poly[k + 1]])[None])
            tri_labels.append(mesh.labels[idx : idx + 1])
    if not tri_pts:
        return (
            np.zeros((0, 9), dtype=np.float64),
            np.zeros((0, 4), dtype=np.int32),
            np.zeros((0,), dtype=np.uint8),
        )
    pts = np.concatenate(tri_pts, axis=0)  # (T', 3, 3)
    labels = np.concatenate(tri_labels, axis=0).astype(np.uint8)

    z = pts[:, :, 2]
    u = camera.fx * pts[:, :, 0] / z + camera.cx
    v = camera.fy * pts[:, :, 1] / z + camera.cy
    iz = 1.0 / z

    # canonicalize winding so the doubled screen-space area is positive
    area2 = (u[:, 1] - u[:, 0]) * (v[:, 2] - v[:, 0]) - (v[:, 1] - v[:, 0]) * (
        u[:, 2] - u[:, 0]
    )
    flip = area2 < 0.0
    order = np.tile(np.array([0, 1, 2]), (u.shape[0], 1))
    order[flip] = np.array([0, 2, 1])
    u = np.take_along_axis(u, order, axis=1)
    v = np.take_along_axis(v, order, axis=1)
    iz = np.take_along_axis(iz, order, axis=1)
    keep = np.abs(area2) > 1e-12

    # candidate pixels have centers x + 0.5 inside [u_min, u_max]
    x_lo = np.ceil(u.min(axis=1) - 0.5)
    x_hi = np.floor(u.max(axis=1) - 0.5) + 1.0
    y_lo = np.ceil(v.min(axis=1) - 0.5)
    y_hi = np.floor(v.max(axis=1) - 0.5) + 1.0
    x_lo = np.clip(x_lo, 0, width).astype(np.int32)
    x_hi = np.clip(x_hi, 0, width).astype(np.int32)
    y_lo = np.clip(y_lo, 0, height).astype(np.int32)
    y_hi = np.clip(y_hi, 0, height).astype(np.int32)
    keep &= (x_lo < x_hi) & (y_lo < y_hi)

    verts = np.empty((int(keep.sum()), 9), dtype=np.float64)
    verts[:, 0::3] = u[keep]
    verts[:, 1::3] = v[keep]
    verts[:, 2::3] = iz[keep]
    bbox = np.column_stack([x_lo[keep], x_hi[keep], y_lo[keep], y_hi[keep]]).astype(
        np.int32
    )
    return verts, bbox, labels[keep]


def render_mask(
    pose: Pose,
    mesh: LabeledMesh,
    camera: CameraIntrinsics,
    height: int | None = None,
    width: int | None = None,
    n_threads: int = 1,
):
    """Rasterize the mesh under `pose` into (FineMask, depth buffer).

    The depth buffer holds the nearest surface depth in meters per pixel
    and 0.0 where the background shows through. Geometry entirely behind
    the near plane is culled; an empty mesh renders all background.
    Thread count only splits the image into row bands and never changes
    the output.
    """
    if pose.is_zero:
        raise ZeroPoseError("cannot render the zero pose")
    height = camera.height if height is None else int(height)
    width = camera.width if width is None else int(width)
    if height < 1 or width < 1:
        raise ValueError("image dimensions must be positive")
    if n_threads < 1:
        raise ValueError("n_threads must be >= 1")

    verts, bbox, labels = _prepare(pose, mesh, camera, height, width)
    inv_buf = np.zeros((height, width), dtype=np.float64)
    label_buf = np.zeros((height, width), dtype=np.uint8)

    if verts.shape[0]:
        if n_threads == 1:
            fill(verts, bbox, labels, inv_buf, label_buf, 0, height)
        else:
            bounds = np.linspace(0, height, n_threads + 1).astype(int)
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                futures = [
                    pool.submit(
                        fill, verts, bbox, labels, inv_buf, label_buf,
                        int(bounds[i]), int(bounds[i + 1]),
                    )
                    for i in range(n_threads)
                    if bounds[i] < bounds[i + 1]
                ]
                for f in futures:
                    f.result()

    covered = inv_buf > 0.0
    depth = np.zeros_like(inv_buf)
    depth[covered] = 1.0 / inv_buf[covered]
    return FineMask(label_buf), depth


def downsample_majority(labels: np.ndarray, factor: int) -> np.ndarray:
    """Shrink a label image by taking the majority label per block.

    Ties resolve to the smallest label, so the result is deterministic.
    """
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError("labels must be a 2D array")
    f = int(factor)
    if f < 1 or arr.shape[0] % f or arr.shape[1] % f:
        raise ValueError("factor must divide both image dimensions")
    if f == 1:
        return arr.copy()
    h, w = arr.shape[0] // f, arr.shape[1] // f
    blocks = arr.reshape(h, f, w, f).transpose(0, 2, 1, 3).reshape(h, w, f * f)
    counts = np.stack([(blocks == lab).sum(axis=2) for lab in range(6)], axis=0)
    return np.argmax(counts, axis=0).astype(arr.dtype)


def _probs_array(pred) -> np.ndarray:
    if isinstance(pred, MaskProbabilities):
        return pred.probs
    return np.asarray(pred, dtype=np.float64)


def _labels_array(target) -> np.ndarray:
    if isinstance(target, FineMask):
        return target.labels
    return np.asarray(target)


def mask_cross_entropy(pred, target):
    """Segmentation cross entropy and its gradient.

    Mean over pixels of -log(p[label]) with probabilities floored at
    1e-12 before the log. Accepts MaskProbabilities / FineMask or raw
    arrays of the same shapes. Returns (loss, gradient wrt pred).
    """
    probs = _probs_array(pred)
    labels = _labels_array(target)
    if probs.ndim != 3 or probs.shape[0] != 6:
        raise ShapeMismatch("predicted probabilities must be (6, H, W)")
    if labels.shape != probs.shape[1:]:
        raise ShapeMismatch(
            f"target shape {labels.shape} does not match prediction {probs.shape[1:]}"
        )
    idx = labels.astype(np.intp)[None]
    sel = np.take_along_axis(probs, idx, axis=0)[0]
    floored = np.maximum(sel, _PROB_FLOOR)
    n = float(sel.size)
    loss = float(np.mean(-np.log(floored)))

    grad = np.zeros_like(probs)
    g = np.where(sel >= _PROB_FLOOR, -1.0 / (n * floored), 0.0)
    np.put_along_axis(grad, idx, g[None], axis=0)
    return loss, grad


def discriminator_bce(d_on_source: np.ndarray, d_on_target: np.ndarray) -> float:
    """Two-term discriminator loss over matching probability grids.

    Source pixels are scored toward 1, target pixels toward 0:
    -(1/HW) sum [log d_src + log(1 - d_tgt)], values clamped into
    (0, 1) before the logs.
    """
    d_src = np.asarray(d_on_source, dtype=np.float64)
    d_tgt = np.asarray(d_on_target, dtype=np.float64)
    if d_src.shape != d_tgt.shape:
        raise ShapeMismatch(
            f"grid shapes differ: {d_src.shape} vs {d_tgt.shape}"
        )
    s = np.clip(d_src, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    t = np.clip(d_tgt, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    return float(-np.mean(np.log(s) + np.log1p(-t)))


def adversarial_loss(d_on_target: np.ndarray) -> float:
    """Fooling term: -(1/HW) sum log d_tgt, clamped into (0, 1)."""
    d_tgt = np.asarray(d_on_target, dtype=np.float64)
    if d_tgt.ndim != 2:
        raise ShapeMismatch("discriminator grid must be 2D")
    t = np.clip(d_tgt, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    return float(-np.mean(np.log(t)))


@dataclass(frozen=True)
class SampleTerms:
    """Per-sample inputs to the monitoring objective.

    A supervised sample carries heatmap and mask pairs; an excluded
    (zero-pose) sample leaves them None and contributes only its
    adversarial term through disc_pred.
    """

    heatmap_pred: object = None
    heatmap_true: object = None
    mask_pred: object = None
    mask_true: object = None
    disc_pred: object = None

    def __post_init__(self):
        if (self.heatmap_pred is None) != (self.heatmap_true is None):
            raise ValueError("heatmap prediction and target must come together")
        if (self.mask_pred is None) != (self.mask_true is None):
            raise ValueError("mask prediction and target must come together")


def total_objective(
    source_samples,
    target_samples,
    lambda_m: float = 1.0,
    lambda_a: float = 0.01,
    wing: AdaptiveWingParams | None = None,
) -> float:
    """Combined monitoring objective over a source and a target batch.

    heat(source) + lambda_m * mask(source) + heat(target) +
    lambda_m * mask(target) + lambda_a * adversarial(target), where each
    term is the mean of its per-sample losses and absent terms (for
    example excluded samples with no labels) contribute nothing.
    Raises EmptyBatch only when both batches are empty.
    """
    source_samples = list(source_samples)
    target_samples = list(target_samples)
    if not source_samples and not target_samples:
        raise EmptyBatch("monitoring objective needs at least one sample")
    if wing is None:
        wing = AdaptiveWingParams()

    def heat_terms(samples):
        return [
            adaptive_wing_loss(s.heatmap_pred, s.heatmap_true, wing)[0]
            for s in samples
            if s.heatmap_pred is not None
        ]

    def mask_terms(samples):
        return [
            mask_cross_entropy(s.mask_pred, s.mask_true)[0]
            for s in samples
            if s.mask_pred is not None
        ]

    def mean(vals):
        return float(np.mean(vals)) if vals else 0.0

    adv = [
        adversarial_loss(s.disc_pred) for s in target_samples if s.disc_pred is not None
    ]
    total = (
        mean(heat_terms(source_samples))
        + lambda_m * mean(mask_terms(source_samples))
        + mean(heat_terms(target_samples))
        + lambda_m * mean(mask_terms(target_samples))
        + lambda_a * mean(adv)
    )
    return float(total)
