"""Run configuration: JSON schema, strict parsing, and canned presets.

Unknown keys are errors so that typos in tuning runs fail loudly. The
resolved form written by the CLI (`to_dict`) is itself a valid config that
reproduces the run byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .estimator import NoiseConfig
from .geometry import CameraModel
from .liegroup import Pose
from .simulator import Scenario, default_camera

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


@dataclass(frozen=True)
class EstimatorParams:
    tol: float = 1e-6
    max_iters: int = 10
    light_gate: float = 40.0
    lane_gate: float = 25.0
    icp_iters: int = 3
    light_radius: float = 100.0
    lane_radius: float = 50.0
    subsample_stride: int = 5
    bottom_fraction: float = 0.5
    min_lane_support: int = 6
    min_line_angle_deg: float = 20.0  # reject near-horizontal lines
    burn_in: float = 10.0  # s excluded from summary percentiles
    cov0_diag: tuple = (
        25.0, 25.0, 1.0, 0.01, 0.01, 0.25,  # pose
        4.0, 1.0, 1.0, 0.01, 0.01, 0.25,    # velocity
        9.0, 9.0, 1.0, 0.01, 0.01, 0.01,    # offset (std >= injected 2 m)
    )

    def __post_init__(self):
        cov0 = tuple(float(x) for x in self.cov0_diag)
        if len(cov0) != 18 or any(x <= 0 for x in cov0):
            raise ConfigError("cov0_diag must be 18 positive variances")
        object.__setattr__(self, "cov0_diag", cov0)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario = field(default_factory=Scenario)
    camera: CameraModel = field(default_factory=default_camera)
    noise: NoiseConfig = field(default_factory=NoiseConfig.default)
    estimator: EstimatorParams = field(default_factory=EstimatorParams)


def _pose_to_cfg(pose: Pose) -> dict:
    yaw = float(np.arctan2(pose.rotation[1, 0], pose.rotation[0, 0]))
    return {"translation": [float(x) for x in pose.translation], "yaw": yaw}


def _cfg_to_pose(d: dict) -> Pose:
    _require_keys(d, {"translation", "yaw"}, "offset")
    yaw = float(d.get("yaw", 0.0))
    c, s = np.cos(yaw), np.sin(yaw)
    r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Pose.from_rt(r, d.get("translation", [0.0, 0.0, 0.0]))


def _require_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


_SCENARIO_KEYS = {
    "seed", "duration", "rate", "offset", "dropout_schedule",
    "detection_noise_px", "gps_noise_trans_std", "gps_noise_rot_std",
    "wheel_noise_v_std", "wheel_noise_w_std", "outlier_rate", "block_size",
    "lane_spacing", "speed", "turn_radius",
    "offset_drift_trans_std", "offset_drift_rot_std",
}

_NOISE_KEYS = {"q_c_diag", "q_gm_diag", "r_vg_diag", "r_light_diag",
               "r_lane_diag", "r_wheel_diag", "r_pseudo"}

_ESTIMATOR_KEYS = {
    "tol", "max_iters", "light_gate", "lane_gate", "icp_iters",
    "light_radius", "lane_radius", "subsample_stride", "bottom_fraction",
    "min_lane_support", "min_line_angle_deg", "burn_in", "cov0_diag",
}

_CAMERA_KEYS = {"fx", "fy", "cx", "cy", "width", "height", "t_cv"}


def _scenario_from_cfg(d: dict) -> Scenario:
    _require_keys(d, _SCENARIO_KEYS, "scenario")
    kwargs = dict(d)
    if "offset" in kwargs:
        kwargs["offset_true"] = _cfg_to_pose(kwargs.pop("offset"))
    if "dropout_schedule" in kwargs:
        kwargs["dropout_schedule"] = tuple(
            tuple(iv) for iv in kwargs["dropout_schedule"]
        )
    try:
        return Scenario(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario: {exc}") from exc


def _noise_from_cfg(d: dict) -> NoiseConfig:
    _require_keys(d, _NOISE_KEYS, "noise")
    base = NoiseConfig.default()
    try:
        return NoiseConfig(
            q_c=np.diag(d["q_c_diag"]) if "q_c_diag" in d else base.q_c,
            q_gm=np.diag(d["q_gm_diag"]) if "q_gm_diag" in d else base.q_gm,
            r_vg=np.diag(d["r_vg_diag"]) if "r_vg_diag" in d else base.r_vg,
            r_light=np.diag(d["r_light_diag"]) if "r_light_diag" in d else base.r_light,
            r_lane=np.diag(d["r_lane_diag"]) if "r_lane_diag" in d else base.r_lane,
            r_wheel=np.diag(d["r_wheel_diag"]) if "r_wheel_diag" in d else base.r_wheel,
            r_pseudo=np.array(d["r_pseudo"]) if "r_pseudo" in d else base.r_pseudo,
        )
    except ValueError as exc:
        raise ConfigError(f"bad noise: {exc}") from exc


def _camera_from_cfg(d: dict) -> CameraModel:
    _require_keys(d, _CAMERA_KEYS, "camera")
    base = default_camera()
    merged = base.to_dict()
    merged.update(d)
    try:
        return CameraModel.from_dict(merged)
    except ValueError as exc:
        raise ConfigError(f"bad camera: {exc}") from exc


def from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _require_keys(doc, {"schema_version", "scenario", "camera", "noise", "estimator"},
                  "config")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    est_cfg = doc.get("estimator", {})
    _require_keys(est_cfg, _ESTIMATOR_KEYS, "estimator")
    if "cov0_diag" in est_cfg:
        est_cfg = dict(est_cfg, cov0_diag=tuple(est_cfg["cov0_diag"]))
    try:
        estimator = EstimatorParams(**est_cfg)
    except TypeError as exc:
        raise ConfigError(f"bad estimator params: {exc}") from exc
    return RunConfig(
        scenario=_scenario_from_cfg(doc.get("scenario", {})),
        camera=_camera_from_cfg(doc.get("camera", {})),
        noise=_noise_from_cfg(doc.get("noise", {})),
        estimator=estimator,
    )


def to_dict(config: RunConfig) -> dict:
    sc = config.scenario
    est = config.estimator
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": {
            "seed": sc.seed,
            "duration": sc.duration,
            "rate": sc.rate,
            "offset": _pose_to_cfg(sc.offset_true),
            "dropout_schedule": [list(iv) for iv in sc.dropout_schedule],
            "detection_noise_px": sc.detection_noise_px,
            "gps_noise_trans_std": sc.gps_noise_trans_std,
            "gps_noise_rot_std": sc.gps_noise_rot_std,
            "wheel_noise_v_std": sc.wheel_noise_v_std,
            "wheel_noise_w_std": sc.wheel_noise_w_std,
            "outlier_rate": sc.outlier_rate,
            "block_size": sc.block_size,
            "lane_spacing": sc.lane_spacing,
            "speed": sc.speed,
            "turn_radius": sc.turn_radius,
            "offset_drift_trans_std": sc.offset_drift_trans_std,
            "offset_drift_rot_std": sc.offset_drift_rot_std,
        },
        "camera": config.camera.to_dict(),
        "noise": {
            "q_c_diag": [float(x) for x in np.diag(config.noise.q_c)],
            "q_gm_diag": [float(x) for x in np.diag(config.noise.q_gm)],
            "r_vg_diag": [float(x) for x in np.diag(config.noise.r_vg)],
            "r_light_diag": [float(x) for x in np.diag(config.noise.r_light)],
            "r_lane_diag": [float(x) for x in np.diag(config.noise.r_lane)],
            "r_wheel_diag": [float(x) for x in np.diag(config.noise.r_wheel)],
            "r_pseudo": [float(x) for x in config.noise.r_pseudo],
        },
        "estimator": {
            "tol": est.tol,
            "max_iters": est.max_iters,
            "light_gate": est.light_gate,
            "lane_gate": est.lane_gate,
            "icp_iters": est.icp_iters,
            "light_radius": est.light_radius,
            "lane_radius": est.lane_radius,
            "subsample_stride": est.subsample_stride,
            "bottom_fraction": est.bottom_fraction,
            "min_lane_support": est.min_lane_support,
            "min_line_angle_deg": est.min_line_angle_deg,
            "burn_in": est.burn_in,
            "cov0_diag": list(est.cov0_diag),
        },
    }


def loads(text: str | bytes) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return from_dict(doc)


def preset(name: str) -> dict:
    """Canned scenario configs mirroring the two experimental conditions."""
    base = {
        "schema_version": SCHEMA_VERSION,
        "scenario": {
            "seed": 1,
            "duration": 120.0,
            "rate": 10.0,
            "offset": {"translation": [2.0, 2.0, 0.0], "yaw": 0.0},
            "dropout_schedule": [],
        },
        "camera": {},
        "noise": {},
        "estimator": {},
    }
    if name == "nominal":
        return base
    if name == "dropout_30_60":
        base["scenario"]["dropout_schedule"] = [[30.0, 60.0], [90.0, 120.0]]
        return base
    raise ConfigError(f"unknown preset: {name}")


PRESETS = ("nominal", "dropout_30_60")
