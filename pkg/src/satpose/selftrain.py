"""Self-training loop: predict keypoints, solve poses, keep confident ones.

Each round runs every sample through the current predictor, decodes the
predicted heatmaps to keypoints, solves a robust PnP, and accepts the
sample as a pseudo-label when the solver's inlier count reaches the
threshold n_th. Only then does the predictor get a training update from
the accepted set. Samples the solver cannot pose (or poses with too few
inliers) are rejected for the round; nothing is ever force-labeled.

The geometric acceptance check is the load-bearing part: inlier counts
come from exact reprojection under a rigid-body pose, so a prediction
that is merely self-consistent with the predictor's own biases does not
pass unless it is also consistent with the satellite's geometry.

Determinism contract: every random draw is seeded through stable_seed,
which hashes the run seed with string tags and the sample id. The
RANSAC seed for a sample deliberately excludes the round index, so the
solver examines candidate triples in the same order every round and
acceptance changes only because the predictions themselves change.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import BehindCamera, EmptyInput, NoSolution
from .geometry import (
    CameraIntrinsics,
    LabeledMesh,
    LandmarkSet,
    Pose,
    project_points,
)
from .heatmap import DecodedKeypoints, Heatmap, decode_heatmap, encode_heatmap
from .metrics import pose_score
from .pnp import Correspondence, RansacParams, ransac_pnp
from .raster import FineMask, MaskProbabilities, render_mask

__all__ = [
    "stable_seed",
    "PredictorInterface",
    "SyntheticPredictor",
    "PseudoLabel",
    "SelfTrainContext",
    "RoundReport",
    "generate_pseudo_label",
    "run_round",
    "run_self_training",
]


def stable_seed(*parts) -> int:
    """Deterministic 64-bit seed from a sequence of values.

    Hash-based (not Python's hash(), which is salted per process), so
    the same parts give the same seed across runs and machines.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


class PredictorInterface:
    """What the loop needs from a keypoint predictor.

    predict must be deterministic for a given predictor state, and
    train_update is the only mutation point; the loop never touches
    predictor internals.
    """

    def predict(self, sample_id: str) -> tuple[Heatmap, MaskProbabilities]:
        raise NotImplementedError

    def train_update(self, accepted: list["PseudoLabel"]) -> None:
        raise NotImplementedError


@dataclass(frozen=True)
class PseudoLabel:
    """Outcome of one sample in one round.

    accepted implies a usable pose; a zero pose implies n_in == 0 and
    rejection. heatmap/mask are the regenerated training targets
    (present only for accepted samples when the context stores grids).
    """

    sample_id: str
    pose: Pose
    n_in: int
    accepted: bool
    keypoints: DecodedKeypoints
    heatmap: Heatmap | None = None
    mask: FineMask | None = None

    def __post_init__(self):
        if self.n_in < 0:
            raise ValueError("n_in must be non-negative")
        if self.pose.is_zero:
            if self.n_in != 0:
                raise ValueError("a zero pose cannot have inliers")
            if self.accepted:
                raise ValueError("a zero pose cannot be accepted")
        if not self.accepted and (self.heatmap is not None or self.mask is not None):
            raise ValueError("rejected labels must not carry training grids")


@dataclass(frozen=True)
class SelfTrainContext:
    """Fixed inputs of a self-training run."""

    camera: CameraIntrinsics
    landmarks: LandmarkSet
    mesh: LabeledMesh | None
    ransac: RansacParams
    n_th: int = 8
    stride: int = 4
    sigma: float = 2.0
    seed: int = 0
    store_grids: bool = False
    confidence_min: float = 0.0
    gt_poses: dict | None = None

    def __post_init__(self):
        if self.n_th < 4:
            raise ValueError("n_th must be at least 4 (PnP needs 4 points)")
        if self.stride not in (2, 4):
            raise ValueError("stride must be 2 or 4")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.confidence_min <= 1.0:
            raise ValueError("confidence_min must lie in [0, 1]")
        if self.store_grids and self.mesh is None:
            raise ValueError("storing grids requires a mesh for the mask target")


@dataclass(frozen=True)
class RoundReport:
    """Per-round bookkeeping; error stats need ground truth and are
    None otherwise."""

    round_index: int
    n_total: int
    n_accepted: int
    n_rejected: int
    accepted_ids: tuple
    mean_score: float | None = None
    median_score: float | None = None
    mean_rot_err_deg: float | None = None
    mean_trans_err_m: float | None = None

    def __post_init__(self):
        if self.n_accepted + self.n_rejected != self.n_total:
            raise ValueError("accepted + rejected must equal total")
        if len(self.accepted_ids) != self.n_accepted:
            raise ValueError("accepted_ids length must match n_accepted")


def _solve_sample(ctx: SelfTrainContext, sample_id: str, decoded: DecodedKeypoints):
    """Robust PnP on the usable decoded keypoints; None when unsolvable."""
    conf = decoded.confidences
    keep = conf > 0.0
    if ctx.confidence_min > 0.0:
        keep &= conf >= ctx.confidence_min
    idx = np.nonzero(keep)[0]
    if idx.size < 4:
        return None
    pts3d = ctx.landmarks.points
    corrs = [
        Correspondence(
            image_point=tuple(decoded.coords[i]),
            object_point=tuple(pts3d[i]),
            confidence=float(conf[i]),
        )
        for i in idx
    ]
    params = replace(ctx.ransac, rng_seed=stable_seed(ctx.seed, "ransac", sample_id))
    try:
        return ransac_pnp(corrs, ctx.camera, params)
    except NoSolution:
        return None


def generate_pseudo_label(
    ctx: SelfTrainContext,
    sample_id: str,
    prediction: tuple[Heatmap, MaskProbabilities],
) -> PseudoLabel:
    """Decode one prediction, solve its pose, and decide acceptance."""
    heatmap_pred, _ = prediction
    decoded = decode_heatmap(heatmap_pred)
    result = _solve_sample(ctx, sample_id, decoded)
    if result is None:
        return PseudoLabel(
            sample_id=sample_id,
            pose=Pose.zero(),
            n_in=0,
            accepted=False,
            keypoints=decoded,
        )
    accepted = result.n_in >= ctx.n_th
    target_hm = None
    target_mask = None
    if accepted and ctx.store_grids:
        cam = ctx.camera
        try:
            projected = project_points(result.pose, ctx.landmarks.points, cam)
            target_hm = encode_heatmap(
                projected[:, :2], cam.height, cam.width, ctx.stride, ctx.sigma
            )
        except BehindCamera:
            target_hm = None
        target_mask, _ = render_mask(result.pose, ctx.mesh, cam)
    return PseudoLabel(
        sample_id=sample_id,
        pose=result.pose,
        n_in=result.n_in,
        accepted=accepted,
        keypoints=decoded,
        heatmap=target_hm,
        mask=target_mask,
    )


def run_round(
    ctx: SelfTrainContext,
    predictor: PredictorInterface,
    sample_ids,
    round_index: int,
) -> tuple[RoundReport, list[PseudoLabel]]:
    """One full round: pseudo-label every sample, then train on the keepers.

    Generation finishes for the whole dataset before the predictor is
    updated, so within a round every sample sees the same predictor.
    """
    sample_ids = list(sample_ids)
    if not sample_ids:
        raise EmptyInput("no samples to run a round on")
    labels = []
    for sid in sample_ids:
        prediction = predictor.predict(sid)
        labels.append(generate_pseudo_label(ctx, sid, prediction))
    accepted = [lb for lb in labels if lb.accepted]

    mean_score = median_score = mean_rot = mean_trans = None
    if ctx.gt_poses is not None and accepted:
        scores, rots, trans = [], [], []
        for lb in accepted:
            gt = ctx.gt_poses[lb.sample_id]
            ps = pose_score(
                lb.pose.rotation, gt.rotation, lb.pose.translation, gt.translation
            )
            scores.append(ps.s)
            rots.append(ps.e_q_deg)
            trans.append(ps.e_t_m)
        mean_score = float(np.mean(scores))
        median_score = float(np.median(scores))
        mean_rot = float(np.mean(rots))
        mean_trans = float(np.mean(trans))

    report = RoundReport(
        round_index=round_index,
        n_total=len(labels),
        n_accepted=len(accepted),
        n_rejected=len(labels) - len(accepted),
        accepted_ids=tuple(lb.sample_id for lb in accepted),
        mean_score=mean_score,
        median_score=median_score,
        mean_rot_err_deg=mean_rot,
        mean_trans_err_m=mean_trans,
    )
    if accepted:
        predictor.train_update(accepted)
    return report, labels


def run_self_training(
    ctx: SelfTrainContext,
    predictor: PredictorInterface,
    sample_ids,
    rounds: int,
    start_round: int = 0,
    on_round=None,
) -> list[RoundReport]:
    """Run rounds sequentially; on_round(report, labels) is called after
    each (checkpointing hook). start_round labels resumed runs correctly."""
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    reports = []
    for r in range(start_round, start_round + rounds):
        report, labels = run_round(ctx, predictor, sample_ids, r)
        reports.append(report)
        if on_round is not None:
            on_round(report, labels)
    return reports


# -- synthetic predictor -------------------------------------------------------


class SyntheticPredictor(PredictorInterface):
    """Stand-in predictor with a controllable error model.

    Simulates a keypoint network mid-training: predictions are the true
    projections corrupted by Gaussian scatter (scale sigma_px) plus, for
    a random subset, a gross offset of outlier_px pixels. A training
    update shrinks both the scatter and the outlier rate by the factor
    gamma, with sigma_px floored at sigma_min.

    The noise is built from per-sample unit draws that are fixed for the
    life of the predictor and merely rescaled by the current sigma_px,
    and the outlier decision compares a fixed uniform draw against the
    current rate. Shrinking the parameters therefore improves every
    individual keypoint monotonically: no sample gets worse after an
    update, which is the behavior self-training relies on.

    Mask probabilities blend the true part rendering with uniform noise;
    the blend weight beta = sigma_px / (sigma_px + 1) decays alongside
    the keypoint error.
    """

    def __init__(
        self,
        camera: CameraIntrinsics,
        landmarks: LandmarkSet,
        mesh: LabeledMesh,
        gt_poses: dict,
        stride: int = 4,
        sigma: float = 2.0,
        sigma_px: float = 6.0,
        p_out: float = 0.3,
        outlier_px: float = 50.0,
        gamma: float = 0.5,
        sigma_min: float = 0.25,
        seed: int = 0,
    ):
        if sigma_px < 0:
            raise ValueError("sigma_px must be non-negative")
        if not 0.0 <= p_out <= 1.0:
            raise ValueError("p_out must lie in [0, 1]")
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not sigma_min > 0:
            raise ValueError("sigma_min must be positive")
        self.camera = camera
        self.landmarks = landmarks
        self.mesh = mesh
        self.gt_poses = dict(gt_poses)
        self.stride = int(stride)
        self.sigma = float(sigma)
        self.sigma_px = float(sigma_px)
        self.p_out = float(p_out)
        self.outlier_px = float(outlier_px)
        self.gamma = float(gamma)
        self.sigma_min = float(sigma_min)
        self.seed = int(seed)
        self.updates = 0

    def _draws(self, sample_id: str):
        """Fixed per-sample randomness: unit scatter, outlier uniforms,
        outlier directions. Independent of the current noise level."""
        n = len(self.landmarks)
        rng = np.random.default_rng(stable_seed(self.seed, "noise", sample_id))
        unit = rng.standard_normal((n, 2))
        uniforms = rng.uniform(size=n)
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return unit, uniforms, angles

    def predict(self, sample_id: str) -> tuple[Heatmap, MaskProbabilities]:
        pose = self.gt_poses[sample_id]
        cam = self.camera
        projected = project_points(pose, self.landmarks.points, cam)
        coords = projected[:, :2].copy()

        unit, uniforms, angles = self._draws(sample_id)
        coords += self.sigma_px * unit
        is_out = uniforms < self.p_out
        if np.any(is_out):
            offsets = self.outlier_px * np.column_stack(
                [np.cos(angles[is_out]), np.sin(angles[is_out])]
            )
            coords[is_out] = projected[is_out, :2] + offsets

        hm = encode_heatmap(coords, cam.height, cam.width, self.stride, self.sigma)

        mask, _ = render_mask(pose, self.mesh, cam)
        onehot = np.zeros((6, mask.height, mask.width), dtype=np.float64)
        np.put_along_axis(onehot, mask.labels[None].astype(np.int64), 1.0, axis=0)
        beta = self.sigma_px / (self.sigma_px + 1.0)
        probs = MaskProbabilities((1.0 - beta) * onehot + beta / 6.0)
        return hm, probs

    def train_update(self, accepted: list[PseudoLabel]) -> None:
        if not accepted:
            return
        self.sigma_px = max(self.sigma_min, self.sigma_px * self.gamma)
        self.p_out = self.p_out * self.gamma
        self.updates += 1

    def state_dict(self) -> dict:
        """Mutable state only; construction inputs are not serialized."""
        return {
            "sigma_px": self.sigma_px,
            "p_out": self.p_out,
            "outlier_px": self.outlier_px,
            "gamma": self.gamma,
            "sigma_min": self.sigma_min,
            "seed": self.seed,
            "updates": self.updates,
        }

    def load_state_dict(self, state: dict) -> None:
        for key in ("sigma_px", "p_out", "outlier_px", "gamma", "sigma_min"):
            setattr(self, key, float(state[key]))
        self.seed = int(state["seed"])
        self.updates = int(state["updates"])
