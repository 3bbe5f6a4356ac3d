"""Robust pose recovery from 2D-3D correspondences.

Pipeline: a three-point minimal solver (Grunert's distance formulation,
reduced to a quartic solved by companion-matrix eigenvalues and polished
with Newton steps), seeded RANSAC over correspondence triples, and an
iteratively reweighted Levenberg-Marquardt refinement of the Huber
reprojection cost

    sum_k phi_delta(|| project(P_k) - p_k ||)

over a 6-parameter local pose update (axis-angle increment composed
onto the quaternion, plus a translation step).  The inlier count under
the pixel threshold tau is the confidence used downstream to accept or
reject pseudo-labels.

All randomness flows through the rng_seed in RansacParams; identical
inputs and seed produce a bit-identical result.  With few enough
correspondences the sampler enumerates every distinct triple (in a
seed-shuffled order) instead of drawing repeats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    NoSolution,
    ZeroPoseError,
)
from .geometry import CameraIntrinsics, Pose, Quaternion, quat_to_rotmat, rotmat_to_quat

__all__ = [
    "Correspondence",
    "RansacParams",
    "PnPResult",
    "RefineResult",
    "p3p_minimal",
    "refine_huber",
    "ransac_pnp",
    "count_inliers",
]


@dataclass(frozen=True)
class Correspondence:
    """One putative 2D-3D match with an optional detector confidence."""

    image_point: tuple[float, float]
    object_point: tuple[float, float, float]
    confidence: float = 1.0

    def __post_init__(self):
        u, v = self.image_point
        x, y, z = self.object_point
        vals = (u, v, x, y, z, self.confidence)
        if not all(math.isfinite(float(s)) for s in vals):
            raise ValueError("correspondence coordinates must be finite")
        object.__setattr__(self, "image_point", (float(u), float(v)))
        object.__setattr__(self, "object_point", (float(x), float(y), float(z)))
        object.__setattr__(self, "confidence", float(self.confidence))


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 256
    inlier_threshold_px: float = 5.0
    min_inliers: int = 4
    rng_seed: int = 0
    huber_delta_px: float = 5.0
    refine_iterations: int = 20

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.inlier_threshold_px > 0:
            raise ValueError("inlier_threshold_px must be positive")
        if not self.huber_delta_px > 0:
            raise ValueError("huber_delta_px must be positive")
        if self.refine_iterations < 0:
            raise ValueError("refine_iterations must be >= 0")


@dataclass(frozen=True)
class PnPResult:
    pose: Pose
    inlier_mask: np.ndarray
    n_in: int
    final_cost: float

    def __post_init__(self):
        mask = np.asarray(self.inlier_mask, dtype=bool)
        mask.flags.writeable = False
        object.__setattr__(self, "inlier_mask", mask)
        if self.n_in != int(mask.sum()):
            raise ValueError("n_in must equal the number of set mask bits")
        if self.final_cost < 0:
            raise ValueError("final_cost must be non-negative")


@dataclass(frozen=True)
class RefineResult:
    pose: Pose
    final_cost: float
    diverged_behind_camera: bool = False


def _corr_arrays(corrs) -> tuple[np.ndarray, np.ndarray]:
    pts2d = np.array([c.image_point for c in corrs], dtype=np.float64)
    pts3d = np.array([c.object_point for c in corrs], dtype=np.float64)
    return pts2d, pts3d


def _rays(pts2d: np.ndarray, camera: CameraIntrinsics) -> np.ndarray:
    """Unit bearing vectors through the pixels (camera frame)."""
    d = np.empty((pts2d.shape[0], 3), dtype=np.float64)
    d[:, 0] = (pts2d[:, 0] - camera.cx) / camera.fx
    d[:, 1] = (pts2d[:, 1] - camera.cy) / camera.fy
    d[:, 2] = 1.0
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _quartic_roots(coeffs: np.ndarray) -> np.ndarray:
    """Real roots of batched quartics via companion eigenvalues.

    coeffs: (B, 5) highest power first, leading coefficient non-tiny.
    Returns (B, 4) real parts with NaN where a root is complex, after a
    few Newton polishing steps on the original polynomial.
    """
    b = coeffs.shape[0]
    monic = coeffs / coeffs[:, :1]
    comp = np.zeros((b, 4, 4), dtype=np.float64)
    comp[:, 1, 0] = 1.0
    comp[:, 2, 1] = 1.0
    comp[:, 3, 2] = 1.0
    comp[:, :, 3] = -monic[:, ::-1][:, :4]  # -a0, -a1, -a2, -a3 column
    roots = np.linalg.eigvals(comp)  # (B, 4) complex

    real = np.real(roots)
    imag = np.abs(np.imag(roots))
    # near-multiple roots surface as conjugate pairs with small imaginary
    # parts; keep those and let downstream validity checks discard fakes
    ok = imag <= 1e-2 * (1.0 + np.abs(real))

    c4, c3, c2, c1, c0 = (coeffs[:, i : i + 1] for i in range(5))
    x = real
    for _ in range(8):
        f = (((c4 * x + c3) * x + c2) * x + c1) * x + c0
        df = ((4.0 * c4 * x + 3.0 * c3) * x + 2.0 * c2) * x + c1
        step = np.where(np.abs(df) > 1e-30, f / np.where(df == 0, 1.0, df), 0.0)
        x = x - step
    return np.where(ok, x, np.nan)


def _p3p_batch(pts3d: np.ndarray, rays: np.ndarray):
    """Grunert P3P over stacked triples.

    pts3d, rays: (B, 3, 3).  Returns (Rs, ts, valid) with up to 4
    candidates per triple: Rs (B, 4, 3, 3), ts (B, 4, 3), valid (B, 4).

    Distance equations with s2 = u*s1, s3 = v*s1 reduce to a quartic in
    v; u follows rationally, the ray scales s_i follow from the law of
    cosines, and absolute orientation maps the object triple onto the
    recovered camera-frame triple.
    """
    P1, P2, P3 = pts3d[:, 0], pts3d[:, 1], pts3d[:, 2]
    f1, f2, f3 = rays[:, 0], rays[:, 1], rays[:, 2]

    a2 = np.sum((P2 - P3) ** 2, axis=1)
    b2 = np.sum((P1 - P3) ** 2, axis=1)
    c2 = np.sum((P1 - P2) ** 2, axis=1)
    cos_a = np.sum(f2 * f3, axis=1)
    cos_b = np.sum(f1 * f3, axis=1)
    cos_g = np.sum(f1 * f2, axis=1)

    bad = b2 <= 0
    b2 = np.where(bad, 1.0, b2)
    A = a2 / b2
    B = c2 / b2

    n2 = (A - B) - 1.0
    n1 = -2.0 * cos_b * (A - B)
    n0 = (A - B) + 1.0
    d1 = -2.0 * cos_a
    d0 = 2.0 * cos_g
    e2 = -B
    e1 = 2.0 * cos_b * B
    e0 = 1.0 - B

    c4 = n2 * n2 + d1 * d1 * e2
    c3 = 2 * n2 * n1 - 2 * cos_g * n2 * d1 + d1 * d1 * e1 + 2 * d1 * d0 * e2
    c2q = (
        n1 * n1
        + 2 * n2 * n0
        - 2 * cos_g * (n2 * d0 + n1 * d1)
        + d1 * d1 * e0
        + 2 * d1 * d0 * e1
        + d0 * d0 * e2
    )
    c1 = 2 * n1 * n0 - 2 * cos_g * (n1 * d0 + n0 * d1) + 2 * d1 * d0 * e0 + d0 * d0 * e1
    c0 = n0 * n0 - 2 * cos_g * n0 * d0 + d0 * d0 * e0

    coeffs = np.stack([c4, c3, c2q, c1, c0], axis=1)
    scale = np.max(np.abs(coeffs), axis=1)
    bad |= ~np.isfinite(scale) | (scale <= 0)
    bad |= np.abs(c4) <= 1e-12 * np.where(scale > 0, scale, 1.0)
    coeffs[bad] = np.array([1.0, 0.0, 0.0, 0.0, 1.0])  # rootless placeholder

    v = _quartic_roots(coeffs)  # (B, 4)

    denom_u = 2.0 * (cos_g[:, None] - v * cos_a[:, None])
    n_of_v = (
        (A - B)[:, None] * (1.0 + v * v - 2.0 * v * cos_b[:, None])
        + 1.0
        - v * v
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        u = n_of_v / denom_u
        den_s1 = 1.0 + v * v - 2.0 * v * cos_b[:, None]
        s1 = np.sqrt(np.where(den_s1 > 0, b2[:, None] / np.where(den_s1 > 0, den_s1, 1.0), np.nan))
    s2 = u * s1
    s3 = v * s1

    valid = (
        np.isfinite(v)
        & (np.abs(denom_u) > 1e-9)
        & np.isfinite(s1)
        & (s1 > 0)
        & (s2 > 0)
        & (s3 > 0)
        & ~bad[:, None]
    )

    # camera-frame points for every candidate: X_i = s_i * f_i
    X = np.stack(
        [
            s1[..., None] * f1[:, None, :],
            s2[..., None] * f2[:, None, :],
            s3[..., None] * f3[:, None, :],
        ],
        axis=2,
    )  # (B, 4, 3 points, 3)

    Pm = pts3d.mean(axis=1)  # (B, 3)
    Pc = pts3d - Pm[:, None, :]
    Xm = X.mean(axis=2)  # (B, 4, 3)
    Xc = X - Xm[:, :, None, :]

    bsz = pts3d.shape[0]
    H = np.einsum("bia,bkic->bkac", Pc, Xc)  # (B, 4, 3, 3)
    Hf = H.reshape(-1, 3, 3)
    okm = valid.reshape(-1) & np.all(np.isfinite(Hf), axis=(1, 2))
    Rf = np.zeros_like(Hf)
    if np.any(okm):
        U, _, Vt = np.linalg.svd(Hf[okm])
        V = Vt.transpose(0, 2, 1)
        det = np.linalg.det(V @ U.transpose(0, 2, 1))
        D = np.zeros((det.shape[0], 3, 3))
        D[:, 0, 0] = 1.0
        D[:, 1, 1] = 1.0
        D[:, 2, 2] = det
        Rf[okm] = V @ D @ U.transpose(0, 2, 1)
    Rs = Rf.reshape(bsz, 4, 3, 3)
    ts = Xm - np.einsum("bkij,bj->bki", Rs, Pm)
    valid &= okm.reshape(bsz, 4)
    return Rs, ts, valid


def _project_stack(Rs: np.ndarray, ts: np.ndarray, pts3d: np.ndarray, camera: CameraIntrinsics):
    """Project N points under M poses: returns uv (M, N, 2) and depth (M, N)."""
    X = np.einsum("mij,nj->mni", Rs, pts3d) + ts[:, None, :]
    z = X[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * X[..., 0] / z + camera.cx
        v = camera.fy * X[..., 1] / z + camera.cy
    return np.stack([u, v], axis=-1), z


def _reproj_jacobian(X: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """d(u,v)/d(omega, dt) for a left pose increment, per camera point.

    X: (N, 3) points already in the camera frame (positive depth).
    Chains the pinhole derivative with dX/d(omega, dt) = [-[X]x | I].
    """
    inv_z = 1.0 / X[:, 2]
    Jp = np.zeros((X.shape[0], 2, 3))
    Jp[:, 0, 0] = fx * inv_z
    Jp[:, 0, 2] = -fx * X[:, 0] * inv_z * inv_z
    Jp[:, 1, 1] = fy * inv_z
    Jp[:, 1, 2] = -fy * X[:, 1] * inv_z * inv_z
    Jx = np.zeros((X.shape[0], 3, 6))
    Jx[:, 0, 1] = X[:, 2]
    Jx[:, 0, 2] = -X[:, 1]
    Jx[:, 1, 0] = -X[:, 2]
    Jx[:, 1, 2] = X[:, 0]
    Jx[:, 2, 0] = X[:, 1]
    Jx[:, 2, 1] = -X[:, 0]
    Jx[:, :, 3:] = np.eye(3)
    return np.einsum("nij,njk->nik", Jp, Jx)


def _polish_candidate(R, t, pts3d, pts2d, camera, iterations=6):
    """Gauss-Newton sharpening of a minimal-solver candidate.

    Quartic roots recovered through eigenvalues carry enough error near
    root clusters to miss a tight reprojection bound; a few Newton steps
    on the actual 3-point reprojection residual restore full precision.
    Returns (q, t) or None when the candidate leaves the visible half
    space or the solve breaks down.
    """
    q = rotmat_to_quat(R)
    t = np.array(t, dtype=np.float64)
    for _ in range(int(iterations)):
        Rm = quat_to_rotmat(q)
        X = pts3d @ Rm.T + t
        if np.any(X[:, 2] <= 0):
            return None
        u = camera.fx * X[:, 0] / X[:, 2] + camera.cx
        v = camera.fy * X[:, 1] / X[:, 2] + camera.cy
        e = np.stack([u, v], axis=1) - pts2d
        if np.max(np.abs(e)) < 1e-10:
            break
        J = _reproj_jacobian(X, camera.fx, camera.fy).reshape(-1, 6)
        try:
            dx, *_ = np.linalg.lstsq(J, -e.reshape(-1), rcond=None)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(dx)):
            return None
        dq = Quaternion.from_rotvec(dx[:3])
        q = dq * q
        t = quat_to_rotmat(dq) @ t + dx[3:]
    return q, t


def p3p_minimal(corrs, camera: CameraIntrinsics) -> list[Pose]:
    """Solve the three-point pose problem; 0 to 4 pose candidates.

    Every returned pose reprojects the three points onto their image
    points within 1e-6 px.  Raises DegenerateConfiguration for collinear
    object points or a quartic with no real (usable) roots.
    """
    corrs = list(corrs)
    if len(corrs) != 3:
        raise ValueError("the minimal solver needs exactly 3 correspondences")
    pts2d, pts3d = _corr_arrays(corrs)

    cross = np.cross(pts3d[1] - pts3d[0], pts3d[2] - pts3d[0])
    span = max(float(np.max(np.abs(pts3d - pts3d[0]))), 1e-30)
    if np.linalg.norm(cross) <= 1e-10 * span * span:
        raise DegenerateConfiguration("object points are collinear")

    rays = _rays(pts2d, camera)
    Rs, ts, valid = _p3p_batch(pts3d[None, :, :], rays[None, :, :])
    if not np.any(valid):
        raise DegenerateConfiguration("no real roots for this configuration")

    poses: list[Pose] = []
    R_ok = Rs[0][valid[0]]
    t_ok = ts[0][valid[0]]
    for i in range(R_ok.shape[0]):
        polished = _polish_candidate(R_ok[i], t_ok[i], pts3d, pts2d, camera)
        if polished is None:
            continue
        q, t = polished
        uv, z = _project_stack(quat_to_rotmat(q)[None], t[None], pts3d, camera)
        err = np.linalg.norm(uv[0] - pts2d, axis=1)
        if np.all(z[0] > 0) and np.all(err <= 1e-6):
            pose = Pose.valid(q, t)
            dup = any(
                abs(q.dot(p.rotation)) > 1.0 - 1e-9
                and np.linalg.norm(pose.translation - p.translation) < 1e-6
                for p in poses
            )
            if not dup:
                poses.append(pose)
    return poses


def _huber_cost(res_norm: np.ndarray, delta: float) -> float:
    quad = res_norm <= delta
    cost = np.where(quad, 0.5 * res_norm**2, delta * (res_norm - 0.5 * delta))
    return float(cost.sum())


def count_inliers(pose: Pose, corrs, camera: CameraIntrinsics, tau: float):
    """Inliers under strict reprojection threshold: residual < tau.

    Behind-camera points are outliers.  Returns (n_in, mask).
    """
    if pose.is_zero:
        raise ZeroPoseError("cannot count inliers for the zero pose")
    pts2d, pts3d = _corr_arrays(corrs)
    R = quat_to_rotmat(pose.rotation)
    uv, z = _project_stack(R[None], pose.translation[None], pts3d, camera)
    res = np.linalg.norm(uv[0] - pts2d, axis=1)
    mask = (z[0] > 0) & np.isfinite(res) & (res < tau)
    return int(mask.sum()), mask


def refine_huber(
    initial: Pose,
    corrs,
    camera: CameraIntrinsics,
    delta: float,
    iterations: int,
) -> RefineResult:
    """Minimize the Huber reprojection cost from an initial pose.

    Iteratively reweighted Levenberg-Marquardt on a local 6-parameter
    update (axis-angle rotation increment applied on the left, plus a
    translation step).  Steps that do not reduce the cost are rejected,
    so the cost is non-increasing across accepted steps.  A step that
    drives any object point to non-positive depth is rejected and
    flagged; the best iterate found so far is returned in that case.
    """
    if initial.is_zero:
        raise ZeroPoseError("cannot refine the zero pose")
    pts2d, pts3d = _corr_arrays(corrs)
    if pts3d.shape[0] < 3:
        raise ValueError("refinement needs at least 3 correspondences")

    q = initial.rotation
    t = np.array(initial.translation, dtype=np.float64)
    R = quat_to_rotmat(q)
    X = pts3d @ R.T + t
    if np.any(X[:, 2] <= 0):
        raise ValueError("initial pose puts correspondences behind the camera")

    fx, fy = camera.fx, camera.fy

    def residuals(Xc):
        u = fx * Xc[:, 0] / Xc[:, 2] + camera.cx
        v = fy * Xc[:, 1] / Xc[:, 2] + camera.cy
        e = np.stack([u, v], axis=1) - pts2d
        return e, np.linalg.norm(e, axis=1)

    e, rn = residuals(X)
    cost = _huber_cost(rn, delta)
    lam = 1e-3
    diverged = False

    for _ in range(int(iterations)):
        J = _reproj_jacobian(X, fx, fy)  # (N, 2, 6)

        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(rn <= delta, 1.0, delta / np.where(rn == 0, 1.0, rn))
        Jw = J * w[:, None, None]
        H6 = np.einsum("nij,nik->jk", Jw, J)
        g = np.einsum("nij,ni->j", Jw, e)

        stepped = False
        for _ in range(8):
            Hd = H6 + lam * np.diag(np.diag(H6)) + 1e-12 * np.eye(6)
            try:
                dx = np.linalg.solve(Hd, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            dq = Quaternion.from_rotvec(dx[:3])
            Rd = quat_to_rotmat(dq)
            q_new = dq * q
            t_new = Rd @ t + dx[3:]
            R_new = quat_to_rotmat(q_new)
            X_new = pts3d @ R_new.T + t_new
            if np.any(X_new[:, 2] <= 0):
                diverged = True
                lam *= 10.0
                continue
            e_new, rn_new = residuals(X_new)
            cost_new = _huber_cost(rn_new, delta)
            if cost_new < cost:
                q, t, R, X = q_new, t_new, R_new, X_new
                e, rn, cost = e_new, rn_new, cost_new
                lam = max(lam / 3.0, 1e-12)
                stepped = True
            else:
                lam *= 10.0
            break
        if not stepped and lam > 1e12:
            break

    return RefineResult(Pose.valid(q, t), cost, diverged)


def _sample_triples(n: int, params: RansacParams, rng: np.random.Generator) -> np.ndarray:
    """Triple index sets, seed-deterministic; exhaustive when small enough."""
    total = n * (n - 1) * (n - 2) // 6
    if total <= max(params.max_iterations, 4096):
        combos = np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64)
        order = rng.permutation(total)
        combos = combos[order]
        return combos[: params.max_iterations]
    out = np.empty((params.max_iterations, 3), dtype=np.int64)
    for i in range(params.max_iterations):
        out[i] = rng.choice(n, size=3, replace=False)
    return out


def ransac_pnp(corrs, camera: CameraIntrinsics, params: RansacParams) -> PnPResult:
    """Seeded RANSAC + minimal solver + Huber refinement on the inliers.

    Candidates are scored by the count of reprojection residuals
    strictly below the inlier threshold; the best candidate's inliers
    are refined, and the mask/count are recomputed against the refined
    pose.  Raises NoSolution when no candidate reaches the minimum
    inlier count (at least 4).
    """
    corrs = list(corrs)
    n = len(corrs)
    if n < 4:
        raise ValueError("ransac_pnp needs at least 4 correspondences")
    pts2d, pts3d = _corr_arrays(corrs)
    tau = params.inlier_threshold_px

    rng = np.random.default_rng(params.rng_seed)
    triples = _sample_triples(n, params, rng)

    rays = _rays(pts2d, camera)
    Rs, ts, valid = _p3p_batch(pts3d[triples], rays[triples])
    flat_ok = valid.reshape(-1)
    if not np.any(flat_ok):
        raise NoSolution("no usable minimal-solver candidate")
    R_all = Rs.reshape(-1, 3, 3)[flat_ok]
    t_all = ts.reshape(-1, 3)[flat_ok]

    uv, z = _project_stack(R_all, t_all, pts3d, camera)
    res2 = np.sum((uv - pts2d[None, :, :]) ** 2, axis=2)
    inl = (z > 0) & np.isfinite(res2) & (res2 < tau * tau)
    counts = inl.sum(axis=1)
    best = int(np.argmax(counts))  # first max in candidate order
    best_n = int(counts[best])
    if best_n < max(4, params.min_inliers):
        raise NoSolution(f"best candidate has {best_n} inliers")

    q0 = rotmat_to_quat(R_all[best])
    pose0 = Pose.valid(q0, t_all[best])
    inlier_corrs = [c for c, keep in zip(corrs, inl[best]) if keep]
    refined = refine_huber(
        pose0, inlier_corrs, camera, params.huber_delta_px, params.refine_iterations
    )
    n_in, mask = count_inliers(refined.pose, corrs, camera, tau)
    return PnPResult(refined.pose, mask, n_in, refined.final_cost)
