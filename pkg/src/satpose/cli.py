"""Command-line surface: project, render, solve, pseudo-label, simulate, score.

Exit codes: 0 success, 1 validation or domain error, 2 I/O error. Every
output file is written atomically, and the subcommands that consume
randomness print their effective seed so a run can be reproduced
bit-exactly.

Config resolution: --config wins, then the SATPOSE_CONFIG environment
variable, then built-in defaults (a 640x400 camera with 640 px focals
centered at (320, 200)). --seed overrides the config seed everywhere.
"""

from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import os
import sys
from dataclasses import replace

from . import io as sio
from .config import RunConfig, load_config
from .errors import ConfigError, NoSolution, SatposeError
from .geometry import CameraIntrinsics, Pose, project_points
from .mesh import load_mesh
from .metrics import aggregate, pose_score
from .pnp import Correspondence, ransac_pnp
from .raster import render_mask
from .selftrain import (
    SelfTrainContext,
    SyntheticPredictor,
    generate_pseudo_label,
    run_self_training,
    stable_seed,
)

__all__ = ["main"]

_DEFAULT_CAMERA = dict(fx=640.0, fy=640.0, cx=320.0, cy=200.0, width=640, height=400)


def _resolve_config(args) -> RunConfig:
    path = getattr(args, "config", None) or os.environ.get("SATPOSE_CONFIG")
    if path:
        cfg = load_config(path)
    else:
        cfg = RunConfig(camera=CameraIntrinsics(**_DEFAULT_CAMERA))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=int(args.seed))
    return cfg


def _require(value, flag: str, config_key: str):
    if value is None:
        raise ConfigError(f"{flag} (or '{config_key}' in the config) is required")
    return value


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _pose_obj(pose: Pose) -> dict:
    if pose.is_zero:
        return {"zero": True}
    return {
        "quaternion": [float(x) for x in pose.rotation.as_array()],
        "translation": [float(x) for x in pose.translation],
    }


# -- subcommands ----------------------------------------------------------------


def _cmd_project(args) -> int:
    cfg = _resolve_config(args)
    landmarks = sio.load_landmarks(
        _require(args.landmarks or cfg.paths.landmarks, "--landmarks", "paths.landmarks")
    )
    records = sio.load_poses(args.pose_file)
    rows = []
    for rec in records:
        if rec.pose.is_zero:
            print(f"skipping zero pose: {rec.sample_id}", file=sys.stderr)
            continue
        projected = project_points(rec.pose, landmarks.points, cfg.camera)
        for k, (u, v, d) in enumerate(projected):
            rows.append((rec.sample_id, k, u, v, d))
    sio.save_keypoints_csv(args.out, rows)
    print(f"wrote {len(rows)} keypoints to {args.out}")
    return 0


def _cmd_render(args) -> int:
    cfg = _resolve_config(args)
    mesh = load_mesh(_require(args.mesh or cfg.paths.mesh, "--mesh", "paths.mesh"))
    records = sio.load_poses(args.pose_file)
    os.makedirs(args.out_dir, exist_ok=True)
    n = 0
    for rec in records:
        if rec.pose.is_zero:
            print(f"skipping zero pose: {rec.sample_id}", file=sys.stderr)
            continue
        mask, depth = render_mask(rec.pose, mesh, cfg.camera, n_threads=args.threads)
        sio.save_mask_png(os.path.join(args.out_dir, f"{rec.sample_id}.png"), mask)
        if args.depth:
            sio.save_depth(os.path.join(args.out_dir, f"{rec.sample_id}.depth"), depth)
        n += 1
    print(f"rendered {n} masks to {args.out_dir}")
    return 0


def _cmd_solve(args) -> int:
    cfg = _resolve_config(args)
    landmarks = sio.load_landmarks(
        _require(args.landmarks or cfg.paths.landmarks, "--landmarks", "paths.landmarks")
    )
    rows = sio.load_keypoints_csv(args.keypoints)

    by_sample: dict[str, list] = {}
    order = []
    for sid, k, u, v, _depth in rows:
        if sid not in by_sample:
            by_sample[sid] = []
            order.append(sid)
        if not 0 <= k < len(landmarks):
            raise ValueError(f"sample '{sid}': kp_index {k} outside the landmark set")
        by_sample[sid].append((k, u, v))

    params = _ransac_params(cfg)
    out = []
    for sid in order:
        entries = by_sample[sid]
        if len(entries) < 4:
            raise ValueError(
                f"sample '{sid}' has {len(entries)} keypoints; "
                "pose solving requires at least 4 correspondences"
            )
        corrs = [
            Correspondence((u, v), tuple(landmarks.points[k])) for k, u, v in entries
        ]
        sample_params = replace(params, rng_seed=stable_seed(cfg.seed, "ransac", sid))
        try:
            result = ransac_pnp(corrs, cfg.camera, sample_params)
            pose, n_in = result.pose, result.n_in
        except NoSolution:
            pose, n_in = Pose.zero(), 0
        obj = {"sample_id": sid, "n_in": int(n_in)}
        obj.update(_pose_obj(pose))
        out.append(obj)
    sio.atomic_write_text(args.out, _json_text(out))
    print(f"effective seed: {cfg.seed}")
    print(f"solved {len(out)} samples to {args.out}")
    return 0


def _ransac_params(cfg: RunConfig):
    from .pnp import RansacParams

    r = cfg.ransac
    return RansacParams(
        max_iterations=r.max_iterations,
        inlier_threshold_px=r.inlier_threshold_px,
        min_inliers=r.min_inliers,
        rng_seed=cfg.seed,
        huber_delta_px=r.huber_delta_px,
        refine_iterations=r.refine_iterations,
    )


def _cmd_pseudo_label(args) -> int:
    cfg = _resolve_config(args)
    landmarks = sio.load_landmarks(
        _require(args.landmarks or cfg.paths.landmarks, "--landmarks", "paths.landmarks")
    )
    names = sorted(n for n in os.listdir(args.heatmaps) if n.endswith(".hm"))
    if not names:
        raise ValueError(f"no .hm heatmap files in {args.heatmaps}")
    ctx = SelfTrainContext(
        camera=cfg.camera,
        landmarks=landmarks,
        mesh=None,
        ransac=_ransac_params(cfg),
        n_th=cfg.selftrain.n_th,
        stride=cfg.heatmap.stride,
        sigma=cfg.heatmap.sigma,
        seed=cfg.seed,
        confidence_min=cfg.selftrain.confidence_min,
    )
    out = []
    for name in names:
        sid = name[: -len(".hm")]
        hm = sio.load_heatmap(os.path.join(args.heatmaps, name), cfg.heatmap.stride)
        label = generate_pseudo_label(ctx, sid, (hm, None))
        obj = {
            "sample_id": sid,
            "accepted": bool(label.accepted),
            "n_in": int(label.n_in),
        }
        obj.update(_pose_obj(label.pose))
        out.append(obj)
    sio.atomic_write_text(args.out, _json_text(out))
    n_acc = sum(1 for o in out if o["accepted"])
    print(f"effective seed: {cfg.seed}")
    print(f"pseudo-labeled {len(out)} samples ({n_acc} accepted) to {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    landmarks = sio.load_landmarks(
        _require(args.landmarks or cfg.paths.landmarks, "--landmarks", "paths.landmarks")
    )
    mesh = load_mesh(_require(args.mesh or cfg.paths.mesh, "--mesh", "paths.mesh"))
    records = sio.load_dataset(args.dataset, cfg.dataset.field_map)
    if not records:
        raise ValueError("dataset is empty")
    gt_poses = {rec.filename: rec.pose for rec in records}
    sample_ids = [rec.filename for rec in records]

    rounds = args.rounds if args.rounds is not None else cfg.selftrain.rounds
    pred_cfg = cfg.predictor
    predictor = SyntheticPredictor(
        camera=cfg.camera,
        landmarks=landmarks,
        mesh=mesh,
        gt_poses=gt_poses,
        stride=cfg.heatmap.stride,
        sigma=cfg.heatmap.sigma,
        sigma_px=pred_cfg.sigma_px,
        p_out=pred_cfg.p_out,
        outlier_px=pred_cfg.outlier_px,
        gamma=pred_cfg.gamma,
        sigma_min=pred_cfg.sigma_min,
        seed=cfg.seed,
    )
    ctx = SelfTrainContext(
        camera=cfg.camera,
        landmarks=landmarks,
        mesh=mesh,
        ransac=_ransac_params(cfg),
        n_th=cfg.selftrain.n_th,
        stride=cfg.heatmap.stride,
        sigma=cfg.heatmap.sigma,
        seed=cfg.seed,
        store_grids=cfg.selftrain.store_grids,
        confidence_min=cfg.selftrain.confidence_min,
        gt_poses=gt_poses,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    final_labels = []

    def on_round(report, labels):
        final_labels.clear()
        final_labels.extend(labels)

    print(f"effective seed: {cfg.seed}")
    reports = run_self_training(ctx, predictor, sample_ids, rounds, on_round=on_round)

    report_objs = []
    for rep in reports:
        report_objs.append(
            {
                "round_index": rep.round_index,
                "n_total": rep.n_total,
                "n_accepted": rep.n_accepted,
                "n_rejected": rep.n_rejected,
                "accepted_ids": list(rep.accepted_ids),
                "mean_score": rep.mean_score,
                "median_score": rep.median_score,
                "mean_rot_err_deg": rep.mean_rot_err_deg,
                "mean_trans_err_m": rep.mean_trans_err_m,
            }
        )
    sio.atomic_write_text(os.path.join(args.out_dir, "reports.json"), _json_text(report_objs))

    out = []
    for label in final_labels:
        obj = {
            "sample_id": label.sample_id,
            "accepted": bool(label.accepted),
            "n_in": int(label.n_in),
        }
        obj.update(_pose_obj(label.pose))
        out.append(obj)
    sio.atomic_write_text(os.path.join(args.out_dir, "final_labels.json"), _json_text(out))
    sio.save_predictor_state(
        os.path.join(args.out_dir, "predictor_state.bin"),
        {"round": reports[-1].round_index + 1, "predictor": predictor.state_dict()},
    )
    for rep in reports:
        print(
            f"round {rep.round_index}: accepted {rep.n_accepted}/{rep.n_total}"
            + (
                f", mean score {rep.mean_score:.6f}"
                if rep.mean_score is not None
                else ""
            )
        )
    return 0


def _cmd_score(args) -> int:
    pred = sio.load_poses(args.pred)
    gt = {rec.sample_id: rec.pose for rec in sio.load_poses(args.gt)}
    for sid, pose in gt.items():
        if pose.is_zero:
            raise ValueError(f"ground truth contains a zero pose for '{sid}'")

    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "e_q_deg", "e_t_m", "s_t", "s", "zeroed"])
    scores = []
    n_zero_pose = 0
    for rec in pred:
        if rec.sample_id not in gt:
            raise ValueError(f"prediction '{rec.sample_id}' has no ground truth entry")
        if rec.pose.is_zero:
            n_zero_pose += 1
            writer.writerow([rec.sample_id, "", "", "", "", "excluded"])
            continue
        g = gt[rec.sample_id]
        ps = pose_score(rec.pose.rotation, g.rotation, rec.pose.translation, g.translation)
        scores.append(ps)
        writer.writerow(
            [
                rec.sample_id,
                repr(ps.e_q_deg),
                repr(ps.e_t_m),
                repr(ps.s_t),
                repr(ps.s),
                "true" if ps.zeroed else "false",
            ]
        )
    sio.atomic_write_text(args.out, buf.getvalue())
    if scores:
        summary = aggregate(scores)
        print(
            f"scored {summary.count} predictions ({n_zero_pose} zero-pose excluded): "
            f"mean S {summary.mean_s:.6f}, median S {summary.median_s:.6f}"
        )
    else:
        print(f"scored 0 predictions ({n_zero_pose} zero-pose excluded)")
    return 0


# -- parser ----------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satpose",
        description="Keypoint-based satellite pose estimation tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON config file (or set SATPOSE_CONFIG)")
            p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("project", help="project landmarks through poses to keypoints")
    common(p)
    p.add_argument("--pose-file", required=True)
    p.add_argument("--landmarks", help="landmark JSON (overrides config paths)")
    p.add_argument("--out", required=True, help="output keypoint CSV")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("render", help="render part masks for poses")
    common(p)
    p.add_argument("--pose-file", required=True)
    p.add_argument("--mesh", help="OBJ mesh (overrides config paths)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--depth", action="store_true", help="also write depth grids")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("solve", help="solve poses from keypoint tables")
    common(p)
    p.add_argument("--keypoints", required=True, help="input keypoint CSV")
    p.add_argument("--landmarks", help="landmark JSON (overrides config paths)")
    p.add_argument("--out", required=True, help="output pose JSON")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("pseudo-label", help="accept/reject stored heatmap predictions")
    common(p)
    p.add_argument("--heatmaps", required=True, help="directory of .hm grids")
    p.add_argument("--landmarks", help="landmark JSON (overrides config paths)")
    p.add_argument("--out", required=True, help="output pseudo-label JSON")
    p.set_defaults(func=_cmd_pseudo_label)

    p = sub.add_parser("simulate", help="run a synthetic self-training simulation")
    common(p)
    p.add_argument("--dataset", required=True, help="ground-truth dataset JSON")
    p.add_argument("--landmarks", help="landmark JSON (overrides config paths)")
    p.add_argument("--mesh", help="OBJ mesh (overrides config paths)")
    p.add_argument("--rounds", type=int, help="override config round count")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("score", help="score predicted poses against ground truth")
    p.add_argument("--pred", required=True, help="predicted pose JSON")
    p.add_argument("--gt", required=True, help="ground-truth pose JSON")
    p.add_argument("--out", required=True, help="output score CSV")
    p.set_defaults(func=_cmd_score)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SatposeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
