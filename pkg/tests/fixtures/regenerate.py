"""Regenerate the committed fixtures and golden files.

Run from the repository root:

    python3 tests/fixtures/regenerate.py

The golden files freeze the byte-exact output of `satpose simulate` and
`satpose score` under the fixture config (seed 42) on the 30-sample
synthetic dataset. Regenerating them is only legitimate when an
intentional format or algorithm change invalidates the old goldens.
"""

import os
import sys

import numpy as np

FIXTURES = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.dirname(FIXTURES))  # for conftest

from conftest import LANDMARKS_11, toy_satellite_mesh  # noqa: E402

from satpose import LandmarkSet, Pose, Quaternion  # noqa: E402
from satpose.cli import main  # noqa: E402
from satpose.io import (  # noqa: E402
    DatasetRecord,
    atomic_write_text,
    save_dataset,
    save_landmarks,
    save_poses,
    PoseRecord,
)
from satpose.mesh import save_mesh  # noqa: E402

CONFIG_TEXT = """\
{
  "camera": {
    "fx": 640.0,
    "fy": 640.0,
    "cx": 320.0,
    "cy": 200.0,
    "width": 640,
    "height": 400
  },
  "heatmap": {"stride": 4, "sigma": 2.0},
  "ransac": {"max_iterations": 256, "inlier_threshold_px": 5.0},
  "selftrain": {"n_th": 8, "rounds": 3},
  "predictor": {
    "sigma_px": 6.0,
    "p_out": 0.3,
    "outlier_px": 50.0,
    "gamma": 0.5,
    "sigma_min": 0.25
  },
  "seed": 42
}
"""


def make_dataset(n, seed):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        t = np.array(
            [rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2), rng.uniform(5.0, 9.0)]
        )
        records.append(
            DatasetRecord(
                filename=f"s{i:04d}",
                quaternion=Quaternion(*q),
                translation=t,
                domain="synthetic",
            )
        )
    return records


def run():
    mesh_path = os.path.join(FIXTURES, "toy_satellite.obj")
    landmarks_path = os.path.join(FIXTURES, "landmarks.json")
    config_path = os.path.join(FIXTURES, "config.json")
    dataset_path = os.path.join(FIXTURES, "sim_dataset.json")
    gt_poses_path = os.path.join(FIXTURES, "sim_gt_poses.json")
    golden_dir = os.path.join(FIXTURES, "golden")
    os.makedirs(golden_dir, exist_ok=True)

    save_mesh(mesh_path, toy_satellite_mesh())
    save_landmarks(landmarks_path, LandmarkSet(LANDMARKS_11))
    atomic_write_text(config_path, CONFIG_TEXT)

    records = make_dataset(30, 303)
    save_dataset(dataset_path, records)
    save_poses(
        gt_poses_path,
        [PoseRecord(rec.filename, rec.pose) for rec in records],
    )

    rc = main(
        [
            "simulate",
            "--config", config_path,
            "--dataset", dataset_path,
            "--landmarks", landmarks_path,
            "--mesh", mesh_path,
            "--rounds", "3",
            "--out-dir", golden_dir,
        ]
    )
    assert rc == 0, f"simulate failed with exit code {rc}"

    rc = main(
        [
            "score",
            "--pred", os.path.join(golden_dir, "final_labels.json"),
            "--gt", gt_poses_path,
            "--out", os.path.join(golden_dir, "scores.csv"),
        ]
    )
    assert rc == 0, f"score failed with exit code {rc}"
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    run()
