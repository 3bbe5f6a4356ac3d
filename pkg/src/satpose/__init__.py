"""satpose: geometric core and self-training pseudo-label engine for
keypoint-based satellite pose estimation.

The library covers landmark projection, Gaussian heatmap encoding and
subpixel decoding, robust PnP (P3P + RANSAC + Huber refinement),
z-buffer rasterization of a part-labeled mesh, the associated loss
functions as pure numerical routines, pose-scoring metrics, and the
iterative pseudo-label generation loop driven by a pluggable predictor.
"""

__version__ = "0.1.0"

from .errors import SatposeError
from .geometry import (
    CameraIntrinsics,
    LabeledMesh,
    LandmarkSet,
    Pose,
    Quaternion,
    pose_distance_free,
    project_points,
    quat_to_rotmat,
    rotmat_to_quat,
)
from .heatmap import (
    AdaptiveWingParams,
    DecodedKeypoints,
    Heatmap,
    adaptive_wing_loss,
    decode_heatmap,
    encode_heatmap,
)
from .pnp import (
    Correspondence,
    PnPResult,
    RansacParams,
    RefineResult,
    count_inliers,
    p3p_minimal,
    ransac_pnp,
    refine_huber,
)
from .raster import (
    FineMask,
    MaskProbabilities,
    SampleTerms,
    adversarial_loss,
    discriminator_bce,
    downsample_majority,
    mask_cross_entropy,
    render_mask,
    total_objective,
)
from .mesh import load_mesh, save_mesh
from .metrics import (
    PoseScore,
    ScoreSummary,
    aggregate,
    pose_score,
    relative_translation_score,
    rotation_error_deg,
    translation_error,
)
from .config import RunConfig, load_config
from .selftrain import (
    PredictorInterface,
    PseudoLabel,
    RoundReport,
    SelfTrainContext,
    SyntheticPredictor,
    generate_pseudo_label,
    run_round,
    run_self_training,
    stable_seed,
)

__all__ = [
    "__version__",
    "SatposeError",
    "Quaternion",
    "Pose",
    "CameraIntrinsics",
    "LandmarkSet",
    "LabeledMesh",
    "quat_to_rotmat",
    "rotmat_to_quat",
    "project_points",
    "pose_distance_free",
    "Heatmap",
    "DecodedKeypoints",
    "AdaptiveWingParams",
    "encode_heatmap",
    "decode_heatmap",
    "adaptive_wing_loss",
    "Correspondence",
    "RansacParams",
    "PnPResult",
    "RefineResult",
    "p3p_minimal",
    "refine_huber",
    "ransac_pnp",
    "count_inliers",
    "FineMask",
    "MaskProbabilities",
    "SampleTerms",
    "render_mask",
    "downsample_majority",
    "mask_cross_entropy",
    "discriminator_bce",
    "adversarial_loss",
    "total_objective",
    "load_mesh",
    "save_mesh",
    "PoseScore",
    "ScoreSummary",
    "rotation_error_deg",
    "translation_error",
    "relative_translation_score",
    "pose_score",
    "aggregate",
    "RunConfig",
    "load_config",
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
