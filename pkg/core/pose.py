# core/pose.py
"""
Drone pose and pinhole front-camera geometry over a flat ground plane (z = 0).

World frame: x east, y north, z up. Heading is a compass angle (clockwise
positive): forward = (sin h, cos h), right = (cos h, -sin h). The camera sits
at the drone position, looks forward and is pitched down by mount_pitch.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .config_models import CameraConfig
from .errors import ConfigurationError


@dataclass(frozen=True)
class CameraModel:
    hfov: float = np.pi / 3
    image_size: int = 64
    mount_pitch: float = 1.3

    def __post_init__(self):
        if not 0.0 < self.hfov < np.pi:
            raise ConfigurationError(f"hfov {self.hfov} outside (0, pi)")
        if self.image_size < 16:
            raise ConfigurationError(f"image_size {self.image_size} below 16")

    @classmethod
    def from_config(cls, cfg: CameraConfig) -> "CameraModel":
        return cls(cfg.hfov, cfg.image_size, cfg.mount_pitch)

    @property
    def focal(self) -> float:
        """Focal length in pixels"""
        return (self.image_size / 2.0) / np.tan(self.hfov / 2.0)


@dataclass(frozen=True)
class DroneState:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    heading: float = 0.0
    v_lateral: float = 0.0
    v_forward: float = 0.0
    v_vertical: float = 0.0
    flying: bool = False
    sim_time: float = 0.0

    @property
    def position(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def forward_vector(self) -> np.ndarray:
        return np.array([np.sin(self.heading), np.cos(self.heading)])

    def right_vector(self) -> np.ndarray:
        return np.array([np.cos(self.heading), -np.sin(self.heading)])


def camera_basis(camera: CameraModel, state: DroneState) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit (optical axis, image right, image down) vectors in the world frame"""
    fwd = np.array([np.sin(state.heading), np.cos(state.heading), 0.0])
    up = np.array([0.0, 0.0, 1.0])
    right = np.array([np.cos(state.heading), -np.sin(state.heading), 0.0])
    c, s = np.cos(camera.mount_pitch), np.sin(camera.mount_pitch)
    axis = c * fwd - s * up
    down = -s * fwd - c * up
    return axis, right, down


def project_point(camera: CameraModel, state: DroneState,
                  point: Tuple[float, float, float]) -> Optional[Tuple[float, float]]:
    """World point -> continuous pixel (u, v); None when behind the camera"""
    axis, right, down = camera_basis(camera, state)
    rel = np.asarray(point, dtype=np.float64) - np.array(state.position)
    depth = rel @ axis
    if depth <= 1e-9:
        return None
    half = camera.image_size / 2.0
    return (half + camera.focal * (rel @ right) / depth,
            half + camera.focal * (rel @ down) / depth)


def pixel_rays(camera: CameraModel, state: DroneState) -> np.ndarray:
    """Ray direction through every pixel center, shape [N, N, 3] (row, col)"""
    axis, right, down = camera_basis(camera, state)
    n = camera.image_size
    offsets = (np.arange(n) + 0.5 - n / 2.0) / camera.focal
    along_right = offsets[None, :, None] * right
    along_down = offsets[:, None, None] * down
    return axis + along_right + along_down


def ground_points(camera: CameraModel, state: DroneState) -> Tuple[np.ndarray, np.ndarray]:
    """Ground (x, y) hit by each pixel ray, [N, N, 2], and a validity mask"""
    rays = pixel_rays(camera, state)
    dz = rays[..., 2]
    valid = (dz < -1e-9) & (state.z > 0)
    t = np.where(valid, -state.z / np.where(valid, dz, -1.0), 0.0)
    xy = np.stack([state.x + t * rays[..., 0], state.y + t * rays[..., 1]], axis=-1)
    return xy, valid


def backproject_pixel(camera: CameraModel, state: DroneState, u: float,
                      v: float) -> Optional[Tuple[float, float]]:
    """Ground point seen at continuous pixel (u, v), or None above the horizon"""
    if state.z <= 0:
        return None
    axis, right, down = camera_basis(camera, state)
    half = camera.image_size / 2.0
    ray = axis + ((u - half) / camera.focal) * right + ((v - half) / camera.focal) * down
    if ray[2] >= -1e-9:
        return None
    t = -state.z / ray[2]
    return (state.x + t * ray[0], state.y + t * ray[1])
