"""Poses, quaternions, the pinhole camera model, and landmark projection.

Conventions
-----------
* Quaternions are scalar-first (w, x, y, z), unit norm, canonicalized to
  w >= 0 so each rotation has one representative of the double cover.
* Rotations are active, body frame to camera frame: X_cam = R @ X_body + t.
* The camera is an ideal pinhole with zero skew:
  u = fx * X/Z + cx, v = fy * Y/Z + cy, depth = Z.

A pose is either a valid rigid transform or the zero sentinel used to
mark samples excluded from training; the zero pose can never be
projected or rendered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, NotARotation, ZeroPoseError

__all__ = [
    "Quaternion",
    "Pose",
    "CameraIntrinsics",
    "LandmarkSet",
    "LabeledMesh",
    "PART_NAMES",
    "quat_to_rotmat",
    "rotmat_to_quat",
    "project_points",
    "pose_distance_free",
]

# Part categories shared by the mesh, the rasterizer and the mask palette.
# Label 0 is reserved for background in rendered masks.
PART_NAMES = {
    1: "antenna1",
    2: "antenna2",
    3: "antenna3",
    4: "solar_panel",
    5: "body",
}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, scalar-first, canonicalized so w >= 0.

    The constructor normalizes its arguments, so any finite non-zero
    4-vector is accepted; after construction the stored components are
    unit norm within 1e-9 (exactly, up to rounding of the division).
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        w, x, y, z = float(self.w), float(self.x), float(self.y), float(self.z)
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if not math.isfinite(n) or n < 1e-12:
            raise ValueError(f"quaternion norm {n!r} is not a usable magnitude")
        w, x, y, z = w / n, x / n, y / n, z / n
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        w, x, y, z = np.asarray(a, dtype=np.float64).reshape(4)
        return cls(float(w), float(x), float(y), float(z))

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=np.float64).reshape(3)
        n = float(np.linalg.norm(axis))
        if n < 1e-12:
            raise ValueError("axis has zero length")
        half = 0.5 * float(angle_rad)
        s = math.sin(half) / n
        return cls(math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_rotvec(cls, rv) -> "Quaternion":
        """Quaternion of an axis-angle 3-vector (angle = vector norm)."""
        rv = np.asarray(rv, dtype=np.float64).reshape(3)
        angle = float(np.linalg.norm(rv))
        half = 0.5 * angle
        if angle < 1e-9:
            # sin(angle/2)/angle via series; avoids 0/0 at the identity
            k = 0.5 - angle * angle / 48.0
        else:
            k = math.sin(half) / angle
        return cls(math.cos(half), rv[0] * k, rv[1] * k, rv[2] * k)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        """Hamilton product; rotmat(a * b) == rotmat(a) @ rotmat(b)."""
        aw, ax, ay, az = self.w, self.x, self.y, self.z
        bw, bx, by, bz = other.w, other.x, other.y, other.z
        return Quaternion(
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        )


class Pose:
    """Element of SE(3) (rotation quaternion + translation in meters) or zero.

    The zero variant is a sentinel for rejected/excluded samples; it has
    no rotation or translation and may not be projected or rendered.
    """

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Quaternion | None, translation=None):
        if (rotation is None) != (translation is None):
            raise ValueError("pose needs both rotation and translation, or neither")
        if rotation is None:
            object.__setattr__(self, "rotation", None)
            object.__setattr__(self, "translation", None)
            return
        t = np.asarray(translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", _readonly(t))

    def __setattr__(self, name, value):
        raise AttributeError("Pose is immutable")

    @classmethod
    def valid(cls, rotation: Quaternion, translation) -> "Pose":
        return cls(rotation, translation)

    @classmethod
    def zero(cls) -> "Pose":
        return cls(None, None)

    @property
    def is_zero(self) -> bool:
        return self.rotation is None

    def rotation_matrix(self) -> np.ndarray:
        if self.is_zero:
            raise ZeroPoseError("zero pose has no rotation matrix")
        return quat_to_rotmat(self.rotation)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        if self.is_zero or other.is_zero:
            return self.is_zero and other.is_zero
        return (
            self.rotation == other.rotation
            and bool(np.all(self.translation == other.translation))
        )

    def __hash__(self):
        if self.is_zero:
            return hash(("Pose", "zero"))
        return hash(("Pose", self.rotation, tuple(self.translation)))

    def __repr__(self):
        if self.is_zero:
            return "Pose.zero()"
        t = self.translation
        return f"Pose(q=({self.rotation.w:.6g}, {self.rotation.x:.6g}, {self.rotation.y:.6g}, {self.rotation.z:.6g}), t=({t[0]:.6g}, {t[1]:.6g}, {t[2]:.6g}))"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal lengths and principal point in pixels, zero skew."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (int(self.width) > 0 and int(self.height) > 0):
            raise ValueError("image dimensions must be positive")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics rescaled to a new working resolution."""
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(
            self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height
        )


class LandmarkSet:
    """Ordered 3D landmarks in the satellite body frame (meters).

    The ordering is part of the contract: heatmap channel k always
    corresponds to landmark k, everywhere in the pipeline.
    """

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("landmarks must be an (N, 3) array")
        if pts.shape[0] < 4:
            raise ValueError("at least 4 landmarks are required for pose solving")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmarks must be finite")
        object.__setattr__(self, "points", _readonly(pts))

    def __setattr__(self, name, value):
        raise AttributeError("LandmarkSet is immutable")

    def __len__(self) -> int:
        return self.points.shape[0]


class LabeledMesh:
    """Triangle mesh with a part label per triangle.

    Labels are the five part categories (1..5, see PART_NAMES).
    Degenerate (zero-area) triangles are dropped at construction;
    `dropped_degenerate` records how many.
    """

    __slots__ = ("vertices", "triangles", "labels", "dropped_degenerate")

    def __init__(self, vertices, triangles, labels):
        verts = np.asarray(vertices, dtype=np.float64)
        tris = np.asarray(triangles, dtype=np.int64)
        labs = np.asarray(labels, dtype=np.uint8)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError("vertices must be an (V, 3) array")
        if tris.size == 0:
            tris = tris.reshape(0, 3)
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must be a (T, 3) index array")
        if labs.shape != (tris.shape[0],):
            raise ValueError("one part label per triangle is required")
        if not np.all(np.isfinite(verts)):
            raise ValueError("vertices must be finite")
        if tris.size and (tris.min() < 0 or tris.max() >= verts.shape[0]):
            raise ValueError("triangle index out of range")
        if labs.size and (labs.min() < 1 or labs.max() > 5):
            raise ValueError("part labels must be in 1..5")

        if tris.size:
            a = verts[tris[:, 0]]
            area2 = np.linalg.norm(
                np.cross(verts[tris[:, 1]] - a, verts[tris[:, 2]] - a), axis=1
            )
            keep = area2 > 1e-12
        else:
            keep = np.zeros(0, dtype=bool)
        dropped = int(tris.shape[0] - np.count_nonzero(keep))
        object.__setattr__(self, "vertices", _readonly(verts))
        object.__setattr__(self, "triangles", _readonly(tris[keep]))
        object.__setattr__(self, "labels", _readonly(labs[keep]))
        object.__setattr__(self, "dropped_degenerate", dropped)

    def __setattr__(self, name, value):
        raise AttributeError("LabeledMesh is immutable")

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]


def quat_to_rotmat(q: Quaternion) -> np.ndarray:
    """3x3 rotation matrix of a unit quaternion."""
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def rotmat_to_quat(R) -> Quaternion:
    """Quaternion of a rotation matrix via the max-trace (Shepperd) branch.

    Selecting the largest of (trace, R00, R11, R22) keeps the divisor
    away from zero for every rotation, including angles near 180 deg.

    Raises NotARotation if R is not orthonormal with det +1 within 1e-6.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise NotARotation(f"expected a 3x3 matrix, got shape {R.shape}")
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err > 1e-6 or not np.isfinite(err):
        raise NotARotation(f"matrix is not orthonormal (max |R^T R - I| = {err:.3g})")
    if np.linalg.det(R) < 0:
        raise NotARotation("matrix has negative determinant (a reflection)")

    tr = R[0, 0] + R[1, 1] + R[2, 2]
    choices = [tr, R[0, 0], R[1, 1], R[2, 2]]
    case = int(np.argmax(choices))
    if case == 0:
        s = math.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif case == 1:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif case == 2:
        s = math.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    return Quaternion(w, x, y, z)


def transform_points(pose: Pose, points) -> np.ndarray:
    """Map body-frame points into the camera frame: X_cam = R @ X + t."""
    if pose.is_zero:
        raise ZeroPoseError("cannot transform points with the zero pose")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    R = quat_to_rotmat(pose.rotation)
    return pts @ R.T + pose.translation


def project_points(pose: Pose, points, camera: CameraIntrinsics) -> np.ndarray:
    """Project body-frame points through the pinhole camera.

    Returns an (N, 3) array of rows (u, v, depth); coordinates may fall
    outside the image bounds (no clipping).  Raises BehindCamera with the
    first offending index if any transformed point has depth <= 0.
    """
    cam_pts = transform_points(pose, points)
    depths = cam_pts[:, 2]
    bad = np.nonzero(depths <= 0.0)[0]
    if bad.size:
        raise BehindCamera(int(bad[0]))
    u = camera.fx * cam_pts[:, 0] / depths + camera.cx
    v = camera.fy * cam_pts[:, 1] / depths + camera.cy
    return np.column_stack([u, v, depths])


def pose_distance_free(pose_a: Pose, pose_b: Pose) -> tuple[float, float]:
    """Rotation angle (radians, in [0, pi]) and translation distance (meters).

    The absolute dot product resolves the quaternion double cover.
    Raises ZeroPoseError if either pose is the zero sentinel.
    """
    if pose_a.is_zero or pose_b.is_zero:
        raise ZeroPoseError("pose distance is undefined for the zero pose")
    d = abs(pose_a.rotation.dot(pose_b.rotation))
    angle = 2.0 * math.acos(min(1.0, max(0.0, d)))
    dist = float(np.linalg.norm(pose_a.translation - pose_b.translation))
    return angle, dist
