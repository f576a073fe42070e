# uav/drone_plant.py
"""
First-order drone kinematics and the flight-phase wrapper Node 02 drives.

Velocities follow the command instantly (v = limit * command); position is
integrated with explicit Euler in the world frame through the heading held at
the start of the step.
"""

import logging
from dataclasses import replace
from enum import Enum
from typing import Optional

from core.config_models import PlantConfig
from core.errors import ConfigurationError, StateError
from core.pose import CameraModel, DroneState
from dataset.samples import Sample
from dataset.scene_renderer import DEFAULT_MIN_PIXELS, SceneSpec, generate_scene
from .visual_servo import HOVER, ControlCommand

logger = logging.getLogger(__name__)


def drone_step(state: DroneState, cmd: ControlCommand, dt: float, cfg: PlantConfig) -> DroneState:
    """Advance one step of dt seconds; a landed drone ignores commands"""
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if not state.flying:
        if not cmd.is_zero():
            logger.warning("drone is landed, ignoring command %s", cmd)
        return replace(state, sim_time=state.sim_time + dt)

    cmd = cmd.clamped()
    v_lateral = cfg.v_max * cmd.roll
    v_forward = cfg.v_max * cmd.pitch
    v_vertical = cfg.v_climb_max * cmd.vertical
    dx, dy = (v_lateral * state.right_vector() + v_forward * state.forward_vector()) * dt
    z = state.z + v_vertical * dt
    heading = state.heading + cfg.yaw_rate_max * cmd.yaw * dt
    next_state = DroneState(
        x=state.x + float(dx), y=state.y + float(dy), z=z, heading=float(heading),
        v_lateral=v_lateral, v_forward=v_forward, v_vertical=v_vertical,
        flying=True, sim_time=state.sim_time + dt,
    )
    if z <= 0.0:
        next_state = replace(next_state, z=0.0, v_lateral=0.0, v_forward=0.0,
                             v_vertical=0.0, flying=False)
    return next_state


def render_frame(scene: SceneSpec, state: DroneState, camera: CameraModel,
                 min_pixels: int = DEFAULT_MIN_PIXELS, sample_id: str = "") -> Sample:
    """Front-camera image and ground truth for the current pose"""
    if not state.flying:
        raise StateError("cannot render a frame while the drone is landed")
    return generate_scene(scene, camera, state, min_pixels, sample_id)


class FlightPhase(str, Enum):
    LANDED = "landed"
    TAKEOFF = "takeoff"
    FLYING = "flying"
    LANDING = "landing"


class DronePlant:
    """Drone with takeoff/land sequencing and a held velocity command"""

    def __init__(self, cfg: PlantConfig, initial: Optional[DroneState] = None):
        self.cfg = cfg
        self.initial = initial or DroneState()
        if self.initial.z < 0:
            raise ConfigurationError("initial altitude below ground")
        self.reset()

    def reset(self) -> None:
        self.state = self.initial
        self.phase = FlightPhase.FLYING if self.initial.flying else FlightPhase.LANDED
        self.command = HOVER

    def takeoff(self) -> None:
        if self.phase != FlightPhase.LANDED:
            logger.info("takeoff ignored in phase %s", self.phase.value)
            return
        self.state = replace(self.state, flying=True)
        self.phase = FlightPhase.TAKEOFF
        self.command = HOVER

    def land(self) -> None:
        if self.phase in (FlightPhase.LANDED, FlightPhase.LANDING):
            return
        self.phase = FlightPhase.LANDING
        self.command = HOVER

    def set_command(self, cmd: ControlCommand) -> None:
        if self.phase == FlightPhase.LANDED:
            if not cmd.is_zero():
                logger.warning("drone is landed, ignoring command %s", cmd)
            return
        self.command = cmd.clamped()

    def step(self) -> DroneState:
        dt = self.cfg.dt
        if self.phase == FlightPhase.TAKEOFF:
            state = drone_step(self.state, ControlCommand(vertical=1.0), dt, self.cfg)
            if state.z >= self.cfg.takeoff_altitude - 1e-9:
                state = replace(state, z=self.cfg.takeoff_altitude, v_vertical=0.0)
                self.phase = FlightPhase.FLYING
                logger.info("takeoff complete at z=%.2f", state.z)
        elif self.phase == FlightPhase.LANDING:
            state = drone_step(self.state, ControlCommand(vertical=-1.0), dt, self.cfg)
        elif self.phase == FlightPhase.FLYING:
            state = drone_step(self.state, self.command, dt, self.cfg)
        else:
            state = drone_step(self.state, HOVER, dt, self.cfg)

        if self.phase != FlightPhase.LANDED and not state.flying:
            logger.info("landed at (%.2f, %.2f)", state.x, state.y)
            self.phase = FlightPhase.LANDED
            self.command = HOVER
        self.state = state
        return state

    @property
    def flying(self) -> bool:
        return self.state.flying

