"""Shared synthetic-data builders for the test suite.

Everything here is deterministic: random inputs always come from a
seeded numpy Generator created inside the test or builder.
"""

import numpy as np
import pytest

from satpose.geometry import (
    CameraIntrinsics,
    LabeledMesh,
    LandmarkSet,
    Pose,
    Quaternion,
)

# Eleven body-frame landmarks for a toy satellite: the eight body-box
# corners, the two outer solar-panel corners, and the antenna tip.
LANDMARKS_11 = np.array(
    [
        [-0.4, -0.4, -0.3],
        [0.4, -0.4, -0.3],
        [0.4, 0.4, -0.3],
        [-0.4, 0.4, -0.3],
        [-0.4, -0.4, 0.3],
        [0.4, -0.4, 0.3],
        [0.4, 0.4, 0.3],
        [-0.4, 0.4, 0.3],
        [1.1, -0.3, 0.0],
        [1.1, 0.3, 0.0],
        [0.0, 0.0, 0.55],
    ],
    dtype=np.float64,
)


def default_camera() -> CameraIntrinsics:
    """The 640x400 working-resolution test camera."""
    return CameraIntrinsics(fx=640.0, fy=640.0, cx=320.0, cy=200.0, width=640, height=400)


def random_quaternion(rng: np.random.Generator) -> Quaternion:
    """Uniform random rotation (normalized 4D normal deviate)."""
    v = rng.normal(size=4)
    return Quaternion(float(v[0]), float(v[1]), float(v[2]), float(v[3]))


def random_pose(rng: np.random.Generator, depth_range=(3.0, 10.0)) -> Pose:
    """Random rotation with camera distance ||t|| in depth_range."""
    q = random_quaternion(rng)
    d = rng.uniform(*depth_range)
    x = rng.uniform(-0.5, 0.5)
    y = rng.uniform(-0.5, 0.5)
    z = np.sqrt(d * d - x * x - y * y)
    return Pose.valid(q, [x, y, z])


def _box(xmin, xmax, ymin, ymax, zmin, zmax):
    verts = np.array(
        [
            [xmin, ymin, zmin],
            [xmax, ymin, zmin],
            [xmax, ymax, zmin],
            [xmin, ymax, zmin],
            [xmin, ymin, zmax],
            [xmax, ymin, zmax],
            [xmax, ymax, zmax],
            [xmin, ymax, zmax],
        ]
    )
    tris = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # zmin face
            [4, 5, 6], [4, 6, 7],  # zmax face
            [0, 1, 5], [0, 5, 4],  # ymin face
            [3, 7, 6], [3, 6, 2],  # ymax face
            [0, 4, 7], [0, 7, 3],  # xmin face
            [1, 2, 6], [1, 6, 5],  # xmax face
        ]
    )
    return verts, tris


def _quad(p0, p1, p2, p3):
    verts = np.array([p0, p1, p2, p3], dtype=np.float64)
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return verts, tris


def toy_satellite_mesh() -> LabeledMesh:
    """Body box, one solar-panel wing, three small antenna fins.

    Geometry matches tests/fixtures/toy_satellite.obj so loader tests can
    compare against this builder.
    """
    parts = []
    v, t = _box(-0.4, 0.4, -0.4, 0.4, -0.3, 0.3)
    parts.append((v, t, 5))
    v, t = _quad([0.45, -0.3, 0.0], [1.1, -0.3, 0.0], [1.1, 0.3, 0.0], [0.45, 0.3, 0.0])
    parts.append((v, t, 4))
    v, t = _quad([-0.05, 0.0, 0.3], [0.05, 0.0, 0.3], [0.05, 0.0, 0.55], [-0.05, 0.0, 0.55])
    parts.append((v, t, 1))
    v, t = _quad([0.0, 0.3, -0.05], [0.0, 0.5, -0.05], [0.0, 0.5, 0.05], [0.0, 0.3, 0.05])
    parts.append((v, t, 2))
    v, t = _quad([0.0, -0.5, -0.05], [0.0, -0.3, -0.05], [0.0, -0.3, 0.05], [0.0, -0.5, 0.05])
    parts.append((v, t, 3))

    all_verts = []
    all_tris = []
    all_labels = []
    offset = 0
    for v, t, label in parts:
        all_verts.append(v)
        all_tris.append(t + offset)
        all_labels.extend([label] * len(t))
        offset += len(v)
    return LabeledMesh(np.vstack(all_verts), np.vstack(all_tris), all_labels)


@pytest.fixture
def camera() -> CameraIntrinsics:
    return default_camera()


@pytest.fixture
def landmarks() -> LandmarkSet:
    return LandmarkSet(LANDMARKS_11)


@pytest.fixture
def toy_mesh() -> LabeledMesh:
    return toy_satellite_mesh()
