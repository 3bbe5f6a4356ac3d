"""Benchmark the compiled rasterizer kernel against the NumPy fallback.

Renders a subdivided cube (thousands of triangles) and the small test
satellite through both fill backends, reports wall times, and checks
that the two backends produce bit-identical masks and depth maps.

Usage:
    python3 benchmarks/bench_raster.py [--repeats N] [--subdiv K]
"""

import argparse
import math
import time

import numpy as np

import satpose.raster as raster
from satpose import CameraIntrinsics, Pose, Quaternion
from satpose._kernels import _fallback, backend_name
from satpose.geometry import LabeledMesh


def subdivided_cube(k: int) -> LabeledMesh:
    """Unit cube with each face split into a k x k grid of quads."""
    verts = []
    tris = []
    labels = []
    axes = [
        (0, 1, 2, 1.0),
        (0, 1, 2, -1.0),
        (1, 2, 0, 1.0),
        (1, 2, 0, -1.0),
        (2, 0, 1, 1.0),
        (2, 0, 1, -1.0),
    ]
    for face, (a, b, c, sign) in enumerate(axes):
        base = len(verts)
        for i in range(k + 1):
            for j in range(k + 1):
                p = [0.0, 0.0, 0.0]
                p[a] = -0.5 + i / k
                p[b] = -0.5 + j / k
                p[c] = 0.5 * sign
                verts.append(p)
        for i in range(k):
            for j in range(k):
                v00 = base + i * (k + 1) + j
                v01 = v00 + 1
                v10 = v00 + (k + 1)
                v11 = v10 + 1
                tris.append([v00, v10, v11])
                tris.append([v00, v11, v01])
                labels.extend([face % 5 + 1] * 2)
    return LabeledMesh(np.array(verts), np.array(tris), labels)


def tumbling_pose(angle: float) -> Pose:
    axis = np.array([1.0, 2.0, 0.5])
    axis /= np.linalg.norm(axis)
    return Pose.valid(
        Quaternion.from_axis_angle(axis, angle), np.array([0.1, -0.05, 4.0])
    )


def time_backend(mesh, camera, poses, repeats):
    best = math.inf
    outputs = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        outputs = [raster.render_mask(pose, mesh, camera) for pose in poses]
        best = min(best, time.perf_counter() - t0)
    return best, outputs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--subdiv", type=int, default=16)
    args = parser.parse_args()

    compiled = backend_name() == "compiled"
    if not compiled:
        print("compiled kernel unavailable; timing the fallback against itself")

    camera = CameraIntrinsics(640.0, 640.0, 320.0, 200.0, 640, 400)
    poses = [tumbling_pose(a) for a in np.linspace(0.0, 3.0, 8)]
    cases = [
        ("cube", subdivided_cube(args.subdiv)),
    ]

    default_fill = raster.fill
    print(f"{'case':<8} {'tris':>6} {'compiled ms':>12} {'fallback ms':>12} "
          f"{'speedup':>8}  identical")
    for name, mesh in cases:
        raster.fill = default_fill
        t_main, out_main = time_backend(mesh, camera, poses, args.repeats)
        raster.fill = _fallback.fill
        try:
            t_fb, out_fb = time_backend(mesh, camera, poses, args.repeats)
        finally:
            raster.fill = default_fill

        same = all(
            np.array_equal(m1.labels, m2.labels) and np.array_equal(d1, d2)
            for (m1, d1), (m2, d2) in zip(out_main, out_fb)
        )
        label = f"{t_main * 1000 / len(poses):12.2f}" if compiled else "         n/a"
        print(
            f"{name:<8} {len(mesh.triangles):>6} {label} "
            f"{t_fb * 1000 / len(poses):12.2f} "
            f"{t_fb / t_main:8.1f}x  {same}"
        )


if __name__ == "__main__":
    main()
