"""Pipeline configuration.

Every tunable default of the pipeline lives here, grouped by the stage that
consumes it. A config serializes to versioned JSON and carries a content hash
that is stable under key reordering.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class RigConfig:
    focal_length: float = 110.0  # pixels
    baseline: float = 0.05  # meters
    height: int = 64
    width: int = 64
    camera_height: float = 0.25  # meters above the table, looking straight down


@dataclass
class SceneConfig:
    workspace: tuple[float, float] = (0.03, 0.05)  # half extents in x, y (m)
    kinds: tuple[str, ...] = ("sphere", "box", "cylinder")
    sphere_radius: tuple[float, float] = (0.015, 0.03)
    box_half_extent: tuple[float, float] = (0.01, 0.025)
    cylinder_radius: tuple[float, float] = (0.01, 0.025)
    cylinder_half_height: tuple[float, float] = (0.015, 0.035)
    albedo: tuple[float, float] = (0.35, 0.9)
    table_height: float = 0.0
    overlap_tol: float = 0.001
    retry_budget: int = 100
    ambient: float = 0.1
    shade_ambient: float = 0.15
    shade_diffuse: float = 0.75
    light_direction: tuple[float, float, float] = (0.3, -0.2, 1.0)
    light_jitter: float = 0.2
    strict: bool = False


@dataclass
class CameraConfig:
    readout_rate: float = 40000.0  # Hz
    # mid-gray (I = 0.5) spikes every 4 intervals
    theta: float = 0.5 * 4 / 40000.0
    frames: int = 32
    window: int = 10


@dataclass
class ModelConfig:
    feature_channels: int = 16
    stem_channels: int = 16
    hidden_channels: int = 16
    rsnn_channels: int = 16
    corr_radius: int = 2
    corr_levels: int = 4
    iterations: int = 16
    inner_steps: int = 8
    tau_out: float = 0.9
    tau_m: float = 0.8
    tau_adp: float = 0.9
    v_threshold: float = 1.0
    adapt_beta: float = 0.2
    surrogate_width: float = 0.5
    delta_scale: float = 0.1
    decoder_channels: tuple[int, int, int] = (16, 24, 32)
    encoder_width: int = 32
    init_seed: int = 0


@dataclass
class GraspConfig:
    views: int = 60
    angles: int = 12
    depths: tuple[float, ...] = (0.01, 0.02, 0.03, 0.04)
    crop_height: float = 0.04
    crop_radius: float = 0.05
    crop_samples: int = 64
    max_width: float = 0.10
    u_min: float = 0.2
    u_max: float = 1.2
    obj_thresh: float = 0.5
    top_m: int = 64


@dataclass
class LabelConfig:
    points: int = 32
    quality_thresh: float = 0.5
    collision_pitch: float = 0.002
    width_margin: float = 0.01
    finger_size: tuple[float, float, float] = (0.04, 0.01, 0.01)  # along approach, closing, height
    palm_size: tuple[float, float, float] = (0.02, 0.08, 0.02)
    finger_tip: float = 0.01  # finger reach beyond the jaw midpoint along the approach axis


@dataclass
class TrainConfig:
    steps: int = 200
    lr: float = 5e-3
    lr_decay: float = 0.95
    epoch_passes: int = 10  # dataset passes per learning-rate decay step
    alpha: float = 1.0
    beta: float = 1.0
    lam: float = 1.0
    disparity_weight: float = 1.0
    iterations: int = 4
    inner_steps: int = 4
    seed: int = 0


@dataclass
class EvalConfig:
    nms_translation_thresh: float = 0.03
    nms_rotation_thresh: float = 0.5235987755982988  # 30 degrees
    per_obj_cap: int = 10
    friction_set: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2)
    k_cap: int = 50
    association_radius: float = 0.01

    def validate(self) -> None:
        if self.nms_translation_thresh <= 0 or self.nms_rotation_thresh <= 0:
            raise ConfigError("NMS thresholds must be positive")
        if not self.friction_set:
            raise ConfigError("friction set must be nonempty")
        if list(self.friction_set) != sorted(self.friction_set):
            raise ConfigError("friction set must be sorted ascending")
        if self.k_cap <= 0 or self.per_obj_cap <= 0:
            raise ConfigError("k_cap and per_obj_cap must be positive")


@dataclass
class PipelineConfig:
    seed: int = 0
    rig: RigConfig = field(default_factory=RigConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    grasp: GraspConfig = field(default_factory=GraspConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    n_scenes: int = 3
    n_objects: int = 2

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    @property
    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def validate(self) -> "PipelineConfig":
        r, c, m, g = self.rig, self.camera, self.model, self.grasp
        if r.baseline <= 0 or r.focal_length <= 0:
            raise ConfigError("baseline and focal length must be positive")
        if r.height % 16 or r.width % 16:
            raise ConfigError("resolution must be divisible by 16")
        if c.theta <= 0 or c.readout_rate <= 0:
            raise ConfigError("theta and readout rate must be positive")
        if 3 * c.window > c.frames:
            raise ConfigError("three sub-stream windows must fit in the stream")
        if not 0 < m.tau_out < 1:
            raise ConfigError("tau_out must lie in (0, 1)")
        if m.iterations < 1 or m.inner_steps < 1:
            raise ConfigError("iteration counts must be >= 1")
        if not 0 < g.u_min < g.u_max:
            raise ConfigError("need 0 < u_min < u_max")
        if g.angles < 1 or not g.depths or g.views < 1:
            raise ConfigError("grasp grid must be nonempty")
        if g.crop_height <= 0 or g.crop_radius <= 0:
            raise ConfigError("crop dimensions must be positive")
        if not 0 < g.obj_thresh < 1 or g.top_m < 1:
            raise ConfigError("invalid seed selection settings")
        self.eval.validate()
        return self

    def save(self, path: str | Path) -> None:
        doc = {"format_version": FORMAT_VERSION, "config_hash": self.hash, **self.to_dict()}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = {k: v for k, v in doc.items() if k not in ("format_version", "config_hash")}
        return _build(cls, doc)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        doc = json.loads(Path(path).read_text())
        version = doc.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ConfigError(f"unsupported config format_version {version}")
        return cls.from_dict(doc).validate()


def toy_config() -> PipelineConfig:
    """Small configuration used by the tiny training run and the smoke tests."""
    cfg = PipelineConfig()
    cfg.n_scenes = 2
    cfg.model.iterations = cfg.train.iterations
    cfg.model.inner_steps = cfg.train.inner_steps
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _build(cls, doc):
    kwargs = {}
    hints = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in doc.items():
        if key not in hints:
            raise ConfigError(f"unknown config key {cls.__name__}.{key}")
        default = getattr(cls(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value)
        elif isinstance(default, tuple):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)
