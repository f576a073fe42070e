# tests/test_drone_plant.py
import math

import pytest

from core.config_models import PlantConfig
from core.errors import ConfigurationError, StateError
from core.pose import CameraModel, DroneState
from uav.drone_plant import DronePlant, FlightPhase, drone_step, render_frame
from uav.visual_servo import ControlCommand

CFG = PlantConfig()
HOVERING = DroneState(x=0.0, y=0.0, z=2.0, flying=True)


def test_roll_moves_right_and_pitch_forward():
    state = drone_step(HOVERING, ControlCommand(roll=0.5), 0.05, CFG)
    assert (state.x, state.y, state.z) == pytest.approx((0.05, 0.0, 2.0))
    assert state.v_lateral == pytest.approx(1.0)
    assert state.sim_time == pytest.approx(0.05)

    state = drone_step(HOVERING, ControlCommand(pitch=0.3), 0.05, CFG)
    assert (state.x, state.y) == pytest.approx((0.0, 0.03))


def test_motion_follows_the_heading():
    turned = DroneState(z=2.0, heading=math.pi / 2, flying=True)
    state = drone_step(turned, ControlCommand(pitch=0.5), 0.1, CFG)
    assert (state.x, state.y) == pytest.approx((0.1, 0.0), abs=1e-12)
    yawed = drone_step(HOVERING, ControlCommand(yaw=0.5), 0.05, CFG)
    assert yawed.heading == pytest.approx(0.025)


def test_commands_are_clamped():
    state = drone_step(HOVERING, ControlCommand(roll=5.0), 0.05, CFG)
    assert state.v_lateral == pytest.approx(CFG.v_max)


def test_descending_through_the_ground_lands():
    low = DroneState(z=0.03, v_forward=1.0, flying=True)
    state = drone_step(low, ControlCommand(pitch=0.5, vertical=-1.0), 0.05, CFG)
    assert state.z == 0.0
    assert not state.flying
    assert (state.v_lateral, state.v_forward, state.v_vertical) == (0.0, 0.0, 0.0)


def test_landed_drone_ignores_commands():
    landed = DroneState(x=1.0, y=2.0)
    state = drone_step(landed, ControlCommand(pitch=1.0, vertical=1.0), 0.05, CFG)
    assert (state.x, state.y, state.z, state.flying) == (1.0, 2.0, 0.0, False)
    assert state.sim_time == pytest.approx(0.05)
    with pytest.raises(ConfigurationError):
        drone_step(HOVERING, ControlCommand(), 0.0, CFG)


def test_takeoff_climbs_to_altitude_then_holds_commands():
    plant = DronePlant(CFG, DroneState())
    plant.set_command(ControlCommand(pitch=1.0))
    assert plant.command == ControlCommand()
    plant.takeoff()
    for _ in range(39):
        plant.step()
    assert plant.phase == FlightPhase.TAKEOFF
    assert plant.state.z == pytest.approx(1.95)
    plant.step()
    assert plant.phase == FlightPhase.FLYING
    assert plant.state.z == CFG.takeoff_altitude

    plant.set_command(ControlCommand(pitch=0.3))
    plant.step()
    assert plant.state.y == pytest.approx(0.03)


def test_land_descends_until_grounded_and_reset_restores():
    plant = DronePlant(CFG, DroneState(x=0.5, z=1.0, flying=True))
    plant.land()
    steps = 0
    while plant.flying and steps < 100:
        plant.step()
        steps += 1
    assert steps in (20, 21)
    assert plant.phase == FlightPhase.LANDED
    assert plant.state.z == 0.0
    plant.reset()
    assert plant.state == DroneState(x=0.5, z=1.0, flying=True)
    assert plant.phase == FlightPhase.FLYING


def test_render_frame_requires_flight(lane):
    with pytest.raises(StateError):
        render_frame(lane, DroneState(), CameraModel())
    frame = render_frame(lane, HOVERING, CameraModel())
    assert frame.image.shape == (3, 64, 64)


def test_initial_state_must_be_above_ground():
    with pytest.raises(ConfigurationError):
        DronePlant(CFG, DroneState(z=-1.0))
