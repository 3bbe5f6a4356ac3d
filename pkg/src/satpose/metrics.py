"""Pose scoring: rotation/translation errors and the thresholded score.

The per-sample score combines the rotation error with the relative
translation error and snaps to zero when both fall strictly below the
calibration thresholds (0.169 degrees, 2.173e-3). The summed form uses
the rotation error in radians so that an angle is commensurate with the
dimensionless translation ratio; the degree-based sum is also recorded
for reporting either convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, ZeroGroundTruthTranslation
from .geometry import Quaternion

__all__ = [
    "THETA_Q_DEG",
    "THETA_T",
    "PoseScore",
    "ScoreSummary",
    "rotation_error_deg",
    "translation_error",
    "relative_translation_score",
    "pose_score",
    "aggregate",
]

THETA_Q_DEG = 0.169
THETA_T = 2.173e-3


@dataclass(frozen=True)
class PoseScore:
    """Errors and score for one prediction against its ground truth.

    e_q_deg/e_t_m are the raw errors; s_q_deg and s_t the per-axis
    scores; s the combined score with the rotation term in radians and
    s_deg the same with degrees. zeroed marks the threshold branch.
    """

    e_q_deg: float
    e_t_m: float
    s_q_deg: float
    s_t: float
    s: float
    s_deg: float
    zeroed: bool


@dataclass(frozen=True)
class ScoreSummary:
    count: int
    mean_e_q_deg: float
    mean_e_t_m: float
    mean_s: float
    median_s: float
    fraction_zero: float


def rotation_error_deg(q_hat: Quaternion, q: Quaternion) -> float:
    """Angle in degrees between two rotations: 2 arccos(|q_hat . q|).

    The absolute value folds the quaternion double cover, so q and -q
    are the same rotation and score zero against each other.
    """
    d = min(1.0, max(0.0, abs(q_hat.dot(q))))
    return math.degrees(2.0 * math.acos(d))


def translation_error(t_hat, t) -> float:
    """Euclidean distance between translations, in meters."""
    a = np.asarray(t_hat, dtype=np.float64)
    b = np.asarray(t, dtype=np.float64)
    if a.shape != (3,) or b.shape != (3,):
        raise ValueError("translations must be 3-vectors")
    return float(np.linalg.norm(a - b))


def relative_translation_score(t_hat, t) -> float:
    """Translation error normalized by the ground-truth range."""
    b = np.asarray(t, dtype=np.float64)
    norm = float(np.linalg.norm(b))
    if norm == 0.0:
        raise ZeroGroundTruthTranslation(
            "relative translation score undefined for zero ground truth"
        )
    return translation_error(t_hat, t) / norm


def pose_score(
    q_hat: Quaternion,
    q: Quaternion,
    t_hat,
    t,
    theta_q_deg: float = THETA_Q_DEG,
    theta_t: float = THETA_T,
) -> PoseScore:
    """Score one pose prediction under the thresholded-sum rule.

    S = S_q + S_t with the rotation term in radians, except that the
    score is exactly zero when S_q < theta_q AND S_t < theta_t, both
    strictly: boundary equality does not zero.
    """
    e_q = rotation_error_deg(q_hat, q)
    e_t = translation_error(t_hat, t)
    s_t = relative_translation_score(t_hat, t)
    zeroed = (e_q < theta_q_deg) and (s_t < theta_t)
    if zeroed:
        s = 0.0
        s_deg = 0.0
    else:
        s = math.radians(e_q) + s_t
        s_deg = e_q + s_t
    return PoseScore(
        e_q_deg=e_q, e_t_m=e_t, s_q_deg=e_q, s_t=s_t, s=s, s_deg=s_deg, zeroed=zeroed
    )


def aggregate(scores) -> ScoreSummary:
    """Means, median, and zero fraction over per-sample scores.

    Zero-pose (no-prediction) samples must be counted by the caller and
    never passed here: averaging them silently would fake accuracy.
    """
    scores = list(scores)
    if not scores:
        raise EmptyInput("cannot aggregate zero scores")
    e_q = np.array([sc.e_q_deg for sc in scores])
    e_t = np.array([sc.e_t_m for sc in scores])
    s = np.array([sc.s for sc in scores])
    return ScoreSummary(
        count=len(scores),
        mean_e_q_deg=float(e_q.mean()),
        mean_e_t_m=float(e_t.mean()),
        mean_s=float(s.mean()),
        median_s=float(np.median(s)),
        fraction_zero=float(np.mean([sc.zeroed for sc in scores])),
    )
