# uav/visual_servo.py
"""
Lane-following visual servo: object center, image-center error and the
proportional command law.

Axis mapping: roll moves the drone right (+) / left (-), pitch forward (+) /
backward (-), yaw turns right (+) / left (-), vertical climbs (+).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from core.config_models import LostTargetPolicy, ServoConfig
from core.detection import YELLOWLANE, Detection
from core.errors import ConfigurationError

logger = logging.getLogger(__name__)


def clamp(value: float, limit: float = 1.0) -> float:
    return float(np.clip(value, -limit, limit))


@dataclass(frozen=True)
class ControlCommand:
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    vertical: float = 0.0

    def clamped(self) -> "ControlCommand":
        return ControlCommand(clamp(self.roll), clamp(self.pitch), clamp(self.yaw), clamp(self.vertical))

    def is_zero(self) -> bool:
        return self.roll == 0.0 and self.pitch == 0.0 and self.yaw == 0.0 and self.vertical == 0.0


HOVER = ControlCommand()


@dataclass(frozen=True)
class TrackError:
    """Pixel error of the object center from the image center (image center = origin)"""
    e_x: float
    e_y: float


def object_center(xmin: float, xmax: float, ymin: float, ymax: float) -> Tuple[float, float]:
    if xmin > xmax or ymin > ymax:
        raise ConfigurationError(f"inverted box ({xmin}, {xmax}, {ymin}, {ymax})")
    return (xmin + xmax) / 2.0, (ymin + ymax) / 2.0


def center_error(center: Tuple[float, float], img_w: float, img_h: float) -> TrackError:
    x_o, y_o = center
    return TrackError(x_o - img_w / 2.0, y_o - img_h / 2.0)


def control_law(err: TrackError, bbox_width_px: float, img_w: float, cfg: ServoConfig,
                img_h: Optional[float] = None) -> ControlCommand:
    img_h = img_w if img_h is None else img_h
    norm_x = err.e_x / (img_w / 2.0)
    norm_y = err.e_y / (img_h / 2.0)
    too_close = bbox_width_px / img_w > cfg.width_threshold
    return ControlCommand(
        roll=clamp(cfg.k_roll * norm_x),
        pitch=clamp(-cfg.backoff if too_close else cfg.forward_speed),
        yaw=clamp(cfg.k_yaw * norm_x),
        vertical=clamp(-cfg.k_vertical * norm_y),
    )


def select_target(detections: Sequence[Detection]) -> Optional[Detection]:
    """Highest-confidence yellow lane detection"""
    lanes = [det for det in detections if det.class_id == YELLOWLANE]
    if not lanes:
        return None
    return min(lanes, key=Detection.sort_key)


@dataclass
class ServoDecision:
    command: ControlCommand
    error: Optional[TrackError]
    target: Optional[Detection]
    request_land: bool = False


class LaneServo:
    """Per-frame decisions with the lost-target policy"""

    def __init__(self, cfg: ServoConfig, img_w: int, img_h: int):
        self.cfg = cfg
        self.img_w = img_w
        self.img_h = img_h
        self.lost_ticks = 0

    def decide(self, detections: Sequence[Detection]) -> ServoDecision:
        target = select_target(detections)
        if target is None:
            self.lost_ticks += 1
            land = (self.cfg.lost_target_policy == LostTargetPolicy.LAND_AFTER_N
                    and self.lost_ticks >= self.cfg.lost_target_ticks)
            if self.lost_ticks == 1:
                logger.info("lane lost, hovering")
            return ServoDecision(HOVER, None, None, request_land=land)

        self.lost_ticks = 0
        xmin, xmax, ymin, ymax = target.bbox.to_pixels(self.img_w, self.img_h)
        err = center_error(object_center(xmin, xmax, ymin, ymax), self.img_w, self.img_h)
        command = control_law(err, xmax - xmin, self.img_w, self.cfg, self.img_h)
        return ServoDecision(command, err, target)
