# core/config_models.py
"""
Validated configuration models for training, augmentation, control, the
simulated plant and whole runs. Defaults are desk-scale; full-scale training
values come from RunConfigManager.load(full_scale=True).
"""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Variant(str, Enum):
    """The two network variants"""
    DEFAULT = "default"
    IMPROVED = "improved"


class LostTargetPolicy(str, Enum):
    HOVER = "hover"
    LAND_AFTER_N = "land_after_n"


class SinkKind(str, Enum):
    FILE = "file"
    SOCKET = "socket"
    HTTP = "http"


class DetectorKind(str, Enum):
    NETWORK = "network"
    ORACLE = "oracle"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True, use_enum_values=False)


class TrainConfig(_Model):
    """SGD hyperparameters"""
    learning_rate: float = Field(0.001, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    decay: float = Field(0.0005, ge=0)
    batch_size: int = Field(8, ge=1)
    subdivisions: int = Field(2, ge=1)
    iterations: int = Field(3000, ge=1)
    input_size: int = Field(128, ge=1)
    channels: int = Field(3, ge=1)
    checkpoint_interval: int = Field(1000, ge=1)
    patience: int = Field(500, ge=1)
    lambda_coord: float = Field(5.0, ge=0)
    lambda_noobj: float = Field(0.5, ge=0)
    augment_online: bool = True

    @model_validator(mode="after")
    def _batch_divisible(self) -> "TrainConfig":
        if self.batch_size % self.subdivisions != 0:
            raise ValueError(
                f"batch_size {self.batch_size} is not divisible by subdivisions {self.subdivisions}"
            )
        return self

    @property
    def mini_batch(self) -> int:
        return self.batch_size // self.subdivisions


class AugmentConfig(_Model):
    """Colour jitter limits"""
    saturation: float = Field(1.5, ge=1.0)
    exposure: float = Field(1.5, ge=1.0)
    hue: float = Field(0.1, ge=0.0, le=0.5)


class ServoConfig(_Model):
    """Proportional lane-following gains"""
    k_roll: float = Field(0.5, ge=0)
    k_yaw: float = Field(0.3, ge=0)
    k_vertical: float = Field(0.4, ge=0)
    forward_speed: float = Field(0.3, ge=0, le=1)
    backoff: float = Field(0.2, ge=0, le=1)
    width_threshold: float = Field(0.5, gt=0, lt=1)
    lost_target_policy: LostTargetPolicy = LostTargetPolicy.LAND_AFTER_N
    lost_target_ticks: int = Field(30, ge=1)


class PlantConfig(_Model):
    """First-order drone kinematics"""
    v_max: float = Field(2.0, gt=0)
    yaw_rate_max: float = Field(1.0, gt=0)
    v_climb_max: float = Field(1.0, gt=0)
    dt: float = Field(0.05, gt=0)
    takeoff_altitude: float = Field(2.0, gt=0)


class CameraConfig(_Model):
    """Front camera: horizontal fov (rad), square image side, mounting pitch (rad, down)"""
    hfov: float = Field(1.0471975511965976, gt=0, lt=3.141592653589793)
    image_size: int = Field(64, ge=16)
    mount_pitch: float = Field(1.3, ge=0, le=1.5707963267948966)


class DetectConfig(_Model):
    conf_thresh: float = Field(0.25, ge=0, le=1)
    iou_thresh: float = Field(0.45, ge=0, le=1)
    strict_duplicates: bool = False


class NetworkOptions(_Model):
    variant: Variant = Variant.IMPROVED
    num_classes: int = Field(3, ge=1)
    boxes_per_cell: int = Field(2, ge=1)
    width: float = Field(0.25, gt=0, le=1.0)


class SimConfig(_Model):
    navdata_hz: float = Field(20.0, gt=0)
    image_hz: float = Field(10.0, gt=0)
    max_ticks: int = Field(600, ge=1)
    dedup_radius: float = Field(1.0, ge=0)
    buffer_limit: int = Field(256, ge=1)
    sink: SinkKind = SinkKind.FILE
    sink_address: Optional[str] = None
    detector: DetectorKind = DetectorKind.ORACLE
    realtime: bool = False
    store_frames: bool = False


class RunConfig(_Model):
    """Aggregate run configuration (everything one CLI invocation needs)"""
    seed: int = Field(0, ge=0)
    out_dir: str = "runs/latest"
    scene_path: Optional[str] = None
    dataset_size: int = Field(200, ge=0)
    train_fraction: float = Field(0.8, gt=0, lt=1)
    network: NetworkOptions = Field(default_factory=NetworkOptions)
    train: TrainConfig = Field(default_factory=TrainConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    servo: ServoConfig = Field(default_factory=ServoConfig)
    plant: PlantConfig = Field(default_factory=PlantConfig)
    camera: CameraConfig = Field(default_factory=CameraConfig)
    detect: DetectConfig = Field(default_factory=DetectConfig)
    sim: SimConfig = Field(default_factory=SimConfig)

    @field_validator("seed")
    @classmethod
    def _seed_u64(cls, value: int) -> int:
        if value >= 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        return value
