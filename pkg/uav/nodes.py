# uav/nodes.py
"""
Node 01 (detection and tracking) and Node 02 (drone driver).

Both are stepped by a scheduler: `step()` handles whatever is pending on the
node's subscriptions and returns. Malformed payloads are dropped and counted.
"""

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from core.config_models import ServoConfig, SimConfig
from core.detection import DEFECT_CLASSES
from core.errors import DecodeError
from core.pose import CameraModel, DroneState
from dataset.image_io import write_image
from dataset.samples import Annotation
from dataset.scene_renderer import DEFAULT_MIN_PIXELS, SceneSpec
from .defect_reporting import DefectReport, DefectReporter
from .detectors import FrameDetector
from .drone_plant import DronePlant, render_frame
from .message_bus import Envelope, MessageBus, NodeName, TopicName
from .messages import SIGNAL, decode_command, decode_frame, decode_navdata, encode_command, encode_frame, encode_navdata
from .visual_servo import LaneServo

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("tick", "sim_time", "x", "y", "z", "heading", "e_x",
                      "roll", "pitch", "yaw", "vertical")

# ground truth is kept for this many of the newest published frames
TRUTH_WINDOW = 16


def steps_per_message(rate_hz: float, dt: float) -> int:
    return max(1, int(round(1.0 / (rate_hz * dt))))


@dataclass
class TrajectoryRow:
    tick: int
    sim_time: float
    state: DroneState
    e_x: float
    roll: float
    pitch: float
    yaw: float
    vertical: float

    def to_line(self) -> str:
        s = self.state
        values = (self.sim_time, s.x, s.y, s.z, s.heading, self.e_x,
                  self.roll, self.pitch, self.yaw, self.vertical)
        return f"{self.tick} " + " ".join(f"{v:.6f}" for v in values)


class DroneDriverNode:
    """Node 02: applies commands to the plant, publishes navdata and camera frames"""

    name = NodeName.NODE02

    def __init__(self, bus: MessageBus, plant: DronePlant, scene: SceneSpec, camera: CameraModel,
                 sim_cfg: SimConfig, min_pixels: int = DEFAULT_MIN_PIXELS):
        self.bus = bus
        self.plant = plant
        self.scene = scene
        self.camera = camera
        self.min_pixels = min_pixels
        self.nav_every = steps_per_message(sim_cfg.navdata_hz, plant.cfg.dt)
        self.image_every = steps_per_message(sim_cfg.image_hz, plant.cfg.dt)
        self.subscriptions = {topic: bus.subscribe(topic, self.name.value)
                              for topic in (TopicName.RESET, TopicName.TAKEOFF,
                                            TopicName.LAND, TopicName.CMD_VEL)}
        self.truth: "OrderedDict[int, List[Annotation]]" = OrderedDict()
        self.steps = 0
        self.dropped = 0

    def ground_truth(self, frame_seq: int) -> Optional[List[Annotation]]:
        return self.truth.get(frame_seq)

    def _handle_commands(self) -> None:
        if self.subscriptions[TopicName.RESET].drain():
            logger.info("reset: restoring the initial drone state")
            self.plant.reset()
        if self.subscriptions[TopicName.TAKEOFF].drain():
            self.plant.takeoff()
        if self.subscriptions[TopicName.LAND].drain():
            self.plant.land()
        for env in self.subscriptions[TopicName.CMD_VEL].drain():
            try:
                self.plant.set_command(decode_command(env.payload))
            except DecodeError as exc:
                self.dropped += 1
                logger.warning("dropped /cmd_vel seq %d: %s", env.seq, exc)

    def step(self) -> DroneState:
        self._handle_commands()
        state = self.plant.step()
        self.steps += 1
        if self.steps % self.nav_every == 0:
            self.bus.publish(self.name, TopicName.NAVDATA, encode_navdata(state), state.sim_time)
        if state.flying and self.steps % self.image_every == 0:
            frame = render_frame(self.scene, state, self.camera, self.min_pixels)
            env = self.bus.publish(self.name, TopicName.IMAGE_RAW, encode_frame(frame.image), state.sim_time)
            self.truth[env.seq] = list(frame.annotations)
            while len(self.truth) > TRUTH_WINDOW:
                self.truth.popitem(last=False)
        return state


class DetectionTrackingNode:
    """Node 01: detects on each frame, steers along the lane and files defect reports"""

    name = NodeName.NODE01

    def __init__(self, bus: MessageBus, detector: FrameDetector, servo_cfg: ServoConfig,
                 camera: CameraModel, reporter: DefectReporter, takeoff_altitude: float,
                 keep_frames: bool = False):
        self.bus = bus
        self.detector = detector
        self.camera = camera
        self.servo = LaneServo(servo_cfg, camera.image_size, camera.image_size)
        self.reporter = reporter
        self.takeoff_altitude = takeoff_altitude
        self.navdata = bus.subscribe(TopicName.NAVDATA, self.name.value)
        self.images = bus.subscribe(TopicName.IMAGE_RAW, self.name.value)
        self.state: Optional[DroneState] = None
        self.tracking = False
        self.landing = False
        self.ticks = 0
        self.dropped = 0
        self.trajectory: List[TrajectoryRow] = []
        self.reports: List[DefectReport] = []
        self.keep_frames = keep_frames
        self.report_frames: Dict[int, np.ndarray] = {}

    def start(self) -> None:
        self.bus.publish(self.name, TopicName.TAKEOFF, SIGNAL)

    def land(self, reason: str) -> None:
        if not self.landing:
            logger.info("requesting land: %s", reason)
            self.bus.publish(self.name, TopicName.LAND, SIGNAL,
                             self.state.sim_time if self.state else 0.0)
            self.landing = True

    def reset(self) -> None:
        self.bus.publish(self.name, TopicName.RESET, SIGNAL)
        self.tracking = False
        self.landing = False

    def step(self) -> None:
        for env in self.navdata.drain():
            try:
                self.state = decode_navdata(env.payload, env.sim_time)
            except DecodeError as exc:
                self.dropped += 1
                logger.warning("dropped navdata seq %d: %s", env.seq, exc)
        if (not self.tracking and not self.landing and self.state is not None
                and self.state.flying and self.state.z >= self.takeoff_altitude - 1e-6):
            logger.info("altitude %.2f reached, tracking starts", self.state.z)
            self.tracking = True
        for env in self.images.drain():
            self._on_frame(env)

    def _on_frame(self, env: Envelope) -> None:
        if not self.tracking or self.landing or self.state is None:
            return
        try:
            image = decode_frame(env.payload)
        except DecodeError as exc:
            self.dropped += 1
            logger.warning("dropped frame seq %d: %s", env.seq, exc)
            return

        detections = self.detector.detect(image, env.seq)
        self.ticks += 1
        decision = self.servo.decide(detections)
        self.bus.publish(self.name, TopicName.CMD_VEL, encode_command(decision.command), env.sim_time)

        image_ref = f"frame_{env.seq:06d}.ppm"
        for det in detections:
            if det.class_id in DEFECT_CLASSES:
                report = self.reporter.report(det, env.seq, env.sim_time, self.state, image_ref)
                if report is not None:
                    self.reports.append(report)
                    if self.keep_frames:
                        self.report_frames[env.seq] = image

        cmd = decision.command
        e_x = decision.error.e_x if decision.error is not None else math.nan
        self.trajectory.append(TrajectoryRow(self.ticks, env.sim_time, self.state, e_x,
                                             cmd.roll, cmd.pitch, cmd.yaw, cmd.vertical))
        if decision.request_land:
            self.land(f"lane lost for {self.servo.lost_ticks} ticks")


def store_frames(frames: Dict[int, np.ndarray], reports: List[DefectReport], out_dir) -> int:
    """Write the frames referenced by reports; returns how many were written"""
    written = 0
    for report in reports:
        image = frames.get(report.seq)
        if image is not None:
            write_image(f"{out_dir}/{report.image_ref}", image)
            written += 1
    return written
