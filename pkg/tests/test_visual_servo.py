# tests/test_visual_servo.py
import pytest

from core.config_models import LostTargetPolicy, ServoConfig
from core.detection import CRACKS, YELLOWLANE, BBox, Detection
from core.errors import ConfigurationError
from uav.visual_servo import (
    HOVER,
    ControlCommand,
    LaneServo,
    TrackError,
    center_error,
    control_law,
    object_center,
    select_target,
)


def lane(cx, w=0.1, confidence=0.9, order=0):
    return Detection(BBox(cx, 0.5, w, 0.8), YELLOWLANE, confidence, order)


def test_object_center_and_error():
    assert object_center(40, 50, 10, 30) == (45.0, 20.0)
    assert center_error((45.0, 20.0), 64, 64) == TrackError(13.0, -12.0)
    with pytest.raises(ConfigurationError):
        object_center(50, 40, 0, 1)


def test_control_law_steers_toward_the_target():
    cfg = ServoConfig()
    cmd = control_law(TrackError(13.0, 0.0), 10.0, 64, cfg)
    assert cmd.roll == pytest.approx(0.5 * 13 / 32)
    assert cmd.yaw == pytest.approx(0.3 * 13 / 32)
    assert cmd.pitch == pytest.approx(0.3)
    assert cmd.vertical == 0.0

    left = control_law(TrackError(-13.0, 16.0), 10.0, 64, cfg)
    assert left.roll < 0 and left.yaw < 0
    assert left.vertical == pytest.approx(-0.4 * 0.5)


def test_control_law_backs_off_from_wide_targets_and_clamps():
    cfg = ServoConfig(k_roll=5.0)
    cmd = control_law(TrackError(32.0, 0.0), 40.0, 64, cfg)
    assert cmd.pitch == pytest.approx(-0.2)
    assert cmd.roll == 1.0
    assert ControlCommand(2.0, -3.0, 0.5, 0.0).clamped() == ControlCommand(1.0, -1.0, 0.5, 0.0)


def test_select_target_prefers_confident_lane():
    crack = Detection(BBox(0.5, 0.5, 0.1, 0.1), CRACKS, 0.99, 0)
    weak, strong = lane(0.3, confidence=0.4, order=1), lane(0.7, confidence=0.8, order=2)
    assert select_target([crack, weak, strong]) == strong
    assert select_target([crack]) is None


def test_centered_lane_gives_forward_only_command():
    decision = LaneServo(ServoConfig(), 64, 64).decide([lane(0.5)])
    assert decision.error.e_x == pytest.approx(0.0)
    assert decision.command.roll == pytest.approx(0.0)
    assert decision.command.pitch == pytest.approx(0.3)
    assert not decision.request_land


def test_lost_lane_hovers_then_requests_landing():
    servo = LaneServo(ServoConfig(lost_target_ticks=3), 64, 64)
    decisions = [servo.decide([]) for _ in range(3)]
    assert all(d.command == HOVER for d in decisions)
    assert [d.request_land for d in decisions] == [False, False, True]
    servo.decide([lane(0.5)])
    assert servo.lost_ticks == 0


def test_hover_policy_never_lands():
    servo = LaneServo(ServoConfig(lost_target_policy=LostTargetPolicy.HOVER, lost_target_ticks=1), 64, 64)
    assert not any(servo.decide([]).request_land for _ in range(10))


@pytest.mark.parametrize("cfg", [ServoConfig(), ServoConfig(k_roll=5.0, k_yaw=3.0, k_vertical=2.0)])
def test_control_law_is_odd_in_e_x_and_bounded(rng, cfg):
    extremes = [0.0, 1e-9, 31.9, 32.0, 1e3, 1e9, 1e300]
    e_xs = list(rng.uniform(-200.0, 200.0, size=200)) + extremes
    for e_x in e_xs:
        e_y = float(rng.choice([-1e9, -1.0, 0.0, 5.0, 1e9, float(rng.normal(scale=50.0))]))
        width = float(rng.choice([0.0, 10.0, 40.0, 1e9, float(rng.uniform(0.0, 64.0))]))
        right = control_law(TrackError(float(e_x), e_y), width, 64, cfg)
        left = control_law(TrackError(-float(e_x), e_y), width, 64, cfg)
        assert left.roll == -right.roll
        assert left.yaw == -right.yaw
        assert (left.pitch, left.vertical) == (right.pitch, right.vertical)
        for value in (right.roll, right.pitch, right.yaw, right.vertical):
            assert -1.0 <= value <= 1.0
