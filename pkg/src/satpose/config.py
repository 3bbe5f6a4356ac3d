"""Run configuration: typed blocks parsed from a JSON file or dict.

Unknown keys raise ConfigError rather than being ignored, so a typo in
a config file fails loudly instead of silently running with defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .errors import ConfigError, ParseError
from .geometry import CameraIntrinsics

__all__ = [
    "HeatmapConfig",
    "RansacConfig",
    "SelfTrainConfig",
    "PredictorConfig",
    "DatasetConfig",
    "PathsConfig",
    "RunConfig",
    "load_config",
]


def _check_keys(block: str, obj: dict, allowed) -> None:
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{block}': {sorted(unknown)}")


def _num(block: str, obj: dict, key: str, default, kind=float):
    value = obj.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{block}.{key}' must be a number")
    if kind is int and int(value) != value:
        raise ConfigError(f"'{block}.{key}' must be an integer")
    return kind(value)


@dataclass(frozen=True)
class HeatmapConfig:
    stride: int = 4
    sigma: float = 2.0

    def __post_init__(self):
        if self.stride not in (2, 4):
            raise ConfigError("'heatmap.stride' must be 2 or 4")
        if not self.sigma > 0:
            raise ConfigError("'heatmap.sigma' must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "HeatmapConfig":
        _check_keys("heatmap", obj, ("stride", "sigma"))
        return cls(
            stride=_num("heatmap", obj, "stride", 4, int),
            sigma=_num("heatmap", obj, "sigma", 2.0),
        )


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 256
    inlier_threshold_px: float = 5.0
    min_inliers: int = 4
    huber_delta_px: float = 5.0
    refine_iterations: int = 20

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("'ransac.max_iterations' must be at least 1")
        if not self.inlier_threshold_px > 0:
            raise ConfigError("'ransac.inlier_threshold_px' must be positive")
        if self.min_inliers < 4:
            raise ConfigError("'ransac.min_inliers' must be at least 4")
        if not self.huber_delta_px > 0:
            raise ConfigError("'ransac.huber_delta_px' must be positive")
        if self.refine_iterations < 0:
            raise ConfigError("'ransac.refine_iterations' must be non-negative")

    @classmethod
    def from_dict(cls, obj: dict) -> "RansacConfig":
        allowed = (
            "max_iterations",
            "inlier_threshold_px",
            "min_inliers",
            "huber_delta_px",
            "refine_iterations",
        )
        _check_keys("ransac", obj, allowed)
        return cls(
            max_iterations=_num("ransac", obj, "max_iterations", 256, int),
            inlier_threshold_px=_num("ransac", obj, "inlier_threshold_px", 5.0),
            min_inliers=_num("ransac", obj, "min_inliers", 4, int),
            huber_delta_px=_num("ransac", obj, "huber_delta_px", 5.0),
            refine_iterations=_num("ransac", obj, "refine_iterations", 20, int),
        )


@dataclass(frozen=True)
class SelfTrainConfig:
    n_th: int = 8
    rounds: int = 3
    lambda_m: float = 1.0
    lambda_a: float = 0.01
    confidence_min: float = 0.0
    store_grids: bool = False

    def __post_init__(self):
        if self.n_th < 4:
            raise ConfigError("'selftrain.n_th' must be at least 4")
        if self.rounds < 1:
            raise ConfigError("'selftrain.rounds' must be at least 1")
        if self.lambda_m < 0 or self.lambda_a < 0:
            raise ConfigError("'selftrain' loss weights must be non-negative")
        if not 0.0 <= self.confidence_min <= 1.0:
            raise ConfigError("'selftrain.confidence_min' must lie in [0, 1]")

    @classmethod
    def from_dict(cls, obj: dict) -> "SelfTrainConfig":
        allowed = (
            "n_th",
            "rounds",
            "lambda_m",
            "lambda_a",
            "confidence_min",
            "store_grids",
        )
        _check_keys("selftrain", obj, allowed)
        store = obj.get("store_grids", False)
        if not isinstance(store, bool):
            raise ConfigError("'selftrain.store_grids' must be a boolean")
        return cls(
            n_th=_num("selftrain", obj, "n_th", 8, int),
            rounds=_num("selftrain", obj, "rounds", 3, int),
            lambda_m=_num("selftrain", obj, "lambda_m", 1.0),
            lambda_a=_num("selftrain", obj, "lambda_a", 0.01),
            confidence_min=_num("selftrain", obj, "confidence_min", 0.0),
            store_grids=store,
        )


@dataclass(frozen=True)
class PredictorConfig:
    sigma_px: float = 6.0
    p_out: float = 0.3
    outlier_px: float = 50.0
    gamma: float = 0.5
    sigma_min: float = 0.25

    def __post_init__(self):
        if self.sigma_px < 0:
            raise ConfigError("'predictor.sigma_px' must be non-negative")
        if not 0.0 <= self.p_out <= 1.0:
            raise ConfigError("'predictor.p_out' must lie in [0, 1]")
        if not self.outlier_px > 0:
            raise ConfigError("'predictor.outlier_px' must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("'predictor.gamma' must lie in (0, 1)")
        if not self.sigma_min > 0:
            raise ConfigError("'predictor.sigma_min' must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "PredictorConfig":
        allowed = ("sigma_px", "p_out", "outlier_px", "gamma", "sigma_min")
        _check_keys("predictor", obj, allowed)
        return cls(
            sigma_px=_num("predictor", obj, "sigma_px", 6.0),
            p_out=_num("predictor", obj, "p_out", 0.3),
            outlier_px=_num("predictor", obj, "outlier_px", 50.0),
            gamma=_num("predictor", obj, "gamma", 0.5),
            sigma_min=_num("predictor", obj, "sigma_min", 0.25),
        )


@dataclass(frozen=True)
class DatasetConfig:
    field_map: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetConfig":
        _check_keys("dataset", obj, ("field_map",))
        fm = obj.get("field_map", {})
        if not isinstance(fm, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in fm.items()
        ):
            raise ConfigError("'dataset.field_map' must map strings to strings")
        known = {"filename", "quaternion", "translation", "domain"}
        unknown = set(fm) - known
        if unknown:
            raise ConfigError(
                f"'dataset.field_map' has unknown field(s): {sorted(unknown)}"
            )
        return cls(field_map=dict(fm))


@dataclass(frozen=True)
class PathsConfig:
    output_dir: str = "."
    mesh: str | None = None
    landmarks: str | None = None

    @classmethod
    def from_dict(cls, obj: dict) -> "PathsConfig":
        _check_keys("paths", obj, ("output_dir", "mesh", "landmarks"))
        out = {}
        for key in ("output_dir", "mesh", "landmarks"):
            if key in obj:
                if not isinstance(obj[key], str):
                    raise ConfigError(f"'paths.{key}' must be a string")
                out[key] = obj[key]
        return cls(**out)


@dataclass(frozen=True)
class RunConfig:
    camera: CameraIntrinsics
    heatmap: HeatmapConfig = field(default_factory=HeatmapConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    selftrain: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config root must be an object")
        allowed = [f.name for f in fields(cls)]
        _check_keys("<root>", obj, allowed)
        if "camera" not in obj:
            raise ConfigError("config requires a 'camera' block")
        cam = obj["camera"]
        if not isinstance(cam, dict):
            raise ConfigError("'camera' must be an object")
        cam_keys = ("fx", "fy", "cx", "cy", "width", "height")
        _check_keys("camera", cam, cam_keys)
        for key in cam_keys:
            if key not in cam:
                raise ConfigError(f"'camera.{key}' is required")
        try:
            camera = CameraIntrinsics(
                fx=_num("camera", cam, "fx", None),
                fy=_num("camera", cam, "fy", None),
                cx=_num("camera", cam, "cx", None),
                cy=_num("camera", cam, "cy", None),
                width=_num("camera", cam, "width", None, int),
                height=_num("camera", cam, "height", None, int),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

        def block(name, factory):
            sub = obj.get(name, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"'{name}' must be an object")
            return factory(sub)

        return cls(
            camera=camera,
            heatmap=block("heatmap", HeatmapConfig.from_dict),
            ransac=block("ransac", RansacConfig.from_dict),
            selftrain=block("selftrain", SelfTrainConfig.from_dict),
            predictor=block("predictor", PredictorConfig.from_dict),
            dataset=block("dataset", DatasetConfig.from_dict),
            paths=block("paths", PathsConfig.from_dict),
            seed=_num("<root>", obj, "seed", 0, int),
        )


def load_config(path) -> RunConfig:
    """Parse a JSON config file into a RunConfig."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return RunConfig.from_dict(data)
