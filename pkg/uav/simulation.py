# uav/simulation.py
"""
Closed-loop simulation runner.

Deterministic mode interleaves the nodes on a fixed schedule: every plant step
Node 02 runs first (commands in, plant step, navdata, and a frame every
image period), then Node 01 handles what was published. Real-time mode runs
each node in its own thread at wall-clock rates and is not reproducible.
"""

import logging
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from core.block_format import dump_blocks
from core.config_models import DetectorKind, RunConfig, SinkKind
from core.detection import CLASS_NAMES
from core.errors import ConfigurationError
from core.model_zoo import Network
from core.pose import CameraModel, DroneState
from dataset.scene_renderer import DefectSpec, SceneSpec
from .defect_reporting import DefectReport, DefectReporter, FileSink, HttpSink, ReportSink, SocketSink
from .detectors import FrameDetector, NetworkDetector, OracleDetector
from .drone_plant import DronePlant
from .message_bus import MessageBus
from .nodes import TRAJECTORY_COLUMNS, DetectionTrackingNode, DroneDriverNode, TrajectoryRow, store_frames

logger = logging.getLogger(__name__)

REPORT_FILE = "reports.txt"
TRAJECTORY_FILE = "trajectory.log"
SUMMARY_FILE = "summary.txt"
DEFAULT_SERVER = "http://127.0.0.1:8000"


# ---------------------------------------------------------------- canonical scenarios

def lane_scene(seed: int = 0) -> SceneSpec:
    """Straight 55 m lane along +y at x = 0, no defects"""
    return SceneSpec(lane=[(0.0, -5.0), (0.0, 50.0)], seed=seed)


def pipeline_scene(seed: int = 0) -> SceneSpec:
    """The lane plus three potholes and two cracks beside it"""
    defects = [
        DefectSpec("pothole", 0.4, 6.0, 0.2),
        DefectSpec("crack", -0.5, 10.0, 0.5),
        DefectSpec("pothole", 0.3, 14.0, 0.2),
        DefectSpec("crack", -0.45, 18.0, 0.5),
        DefectSpec("pothole", 0.4, 22.0, 0.2),
    ]
    return SceneSpec(lane=[(0.0, -5.0), (0.0, 50.0)], defects=defects, seed=seed)


def start_state(x: float = 0.0, y: float = 0.0, heading: float = 0.0) -> DroneState:
    """Landed drone at (x, y)"""
    return DroneState(x=x, y=y, z=0.0, heading=heading)


# ---------------------------------------------------------------- wiring

def make_sink(cfg: RunConfig, out_dir: Union[str, Path]) -> ReportSink:
    sim = cfg.sim
    if sim.sink == SinkKind.FILE:
        return FileSink(Path(out_dir) / REPORT_FILE, sim.buffer_limit)
    if sim.sink == SinkKind.SOCKET:
        if not sim.sink_address:
            raise ConfigurationError("socket sink needs sim.sink_address (host:port)")
        return SocketSink(sim.sink_address, sim.buffer_limit)
    return HttpSink(sim.sink_address or DEFAULT_SERVER, sim.buffer_limit)


@dataclass
class SimulationResult:
    ticks: int
    steps: int
    reports: List[DefectReport]
    trajectory: List[TrajectoryRow]
    final_state: DroneState
    suppressed: int = 0
    dropped_envelopes: int = 0
    sink_dropped: int = 0
    sink_rejected: int = 0
    sink_pending: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)

    def report_counts(self) -> Dict[str, int]:
        counts = {name: 0 for name in CLASS_NAMES}
        for report in self.reports:
            counts[report.class_name] += 1
        return counts

    def summary(self) -> Dict[str, Any]:
        tail = [row.e_x for row in self.trajectory[-10:] if not math.isnan(row.e_x)]
        data: Dict[str, Any] = {
            "ticks": self.ticks,
            "plant_steps": self.steps,
            "reports": len(self.reports),
            "suppressed_duplicates": self.suppressed,
            "dropped_envelopes": self.dropped_envelopes,
            "sink_dropped": self.sink_dropped,
            "sink_rejected": self.sink_rejected,
            "sink_pending": self.sink_pending,
            "final_x": round(self.final_state.x, 6),
            "final_y": round(self.final_state.y, 6),
            "final_z": round(self.final_state.z, 6),
            "flying": self.final_state.flying,
            "final_abs_e_x": round(max((abs(e) for e in tail), default=math.nan), 6),
        }
        for name, count in self.report_counts().items():
            data[f"reports_{name}"] = count
        data.update(self.extra)
        return data


class Simulation:
    """Both nodes, the plant, the bus and a report sink for one run"""

    def __init__(self, cfg: RunConfig, scene: SceneSpec, initial: DroneState,
                 detector: Union[DetectorKind, str, None] = None, net: Optional[Network] = None,
                 sink: Optional[ReportSink] = None, out_dir: Optional[Union[str, Path]] = None):
        self.cfg = cfg
        self.out_dir = Path(out_dir or cfg.out_dir)
        self.bus = MessageBus()
        self.camera = CameraModel.from_config(cfg.camera)
        self.plant = DronePlant(cfg.plant, initial)
        self.driver = DroneDriverNode(self.bus, self.plant, scene, self.camera, cfg.sim)
        self.sink = sink if sink is not None else make_sink(cfg, self.out_dir)
        self.reporter = DefectReporter(self.sink, self.camera, cfg.sim.dedup_radius)
        self.detector = self._make_detector(DetectorKind(detector or cfg.sim.detector), net)
        self.tracker = DetectionTrackingNode(self.bus, self.detector, cfg.servo, self.camera,
                                             self.reporter, cfg.plant.takeoff_altitude,
                                             keep_frames=cfg.sim.store_frames)
        self.steps = 0

    def _make_detector(self, kind: DetectorKind, net: Optional[Network]) -> FrameDetector:
        if kind == DetectorKind.ORACLE:
            return OracleDetector(self.driver.ground_truth)
        if net is None:
            raise ConfigurationError("the network detector needs trained weights")
        return NetworkDetector(net, self.cfg.detect.conf_thresh, self.cfg.detect.iou_thresh)

    def _takeoff_steps(self) -> int:
        plant = self.cfg.plant
        return int(math.ceil(plant.takeoff_altitude / (plant.v_climb_max * plant.dt))) + 2

    def _finished(self) -> bool:
        if self.tracker.ticks >= self.cfg.sim.max_ticks:
            return True
        return (self.tracker.tracking or self.tracker.landing) and not self.plant.flying

    def _turn(self) -> None:
        self.driver.step()
        self.tracker.step()
        self.steps += 1

    def _land_and_settle(self) -> None:
        if not self.plant.flying:
            return
        self.tracker.land("tick budget reached")
        limit = int(math.ceil(self.plant.state.z / (self.cfg.plant.v_climb_max * self.cfg.plant.dt))) + 4
        for _ in range(limit):
            if not self.plant.flying:
                break
            self._turn()

    def run(self) -> SimulationResult:
        """Deterministic schedule; runs to tick budget or landing"""
        step_cap = self._takeoff_steps() + self.cfg.sim.max_ticks * self.driver.image_every * 2
        logger.info("simulation start: %s detector, %d tick budget", self.detector.name,
                    self.cfg.sim.max_ticks)
        self.tracker.start()
        while not self._finished() and self.steps < step_cap:
            self._turn()
        self._land_and_settle()
        return self._result()

    def run_realtime(self, wall_timeout: float = 120.0) -> SimulationResult:
        """Each node in its own thread at wall-clock rates"""
        stop = threading.Event()
        dt = self.cfg.plant.dt

        def driver_loop() -> None:
            while not stop.is_set():
                started = time.monotonic()
                self.driver.step()
                stop.wait(max(0.0, dt - (time.monotonic() - started)))

        def tracker_loop() -> None:
            while not stop.is_set():
                self.tracker.step()
                stop.wait(dt / 4)

        threads = [threading.Thread(target=driver_loop, name="node02", daemon=True),
                   threading.Thread(target=tracker_loop, name="node01", daemon=True)]
        self.tracker.start()
        for thread in threads:
            thread.start()
        deadline = time.monotonic() + wall_timeout
        try:
            while not self._finished() and time.monotonic() < deadline:
                time.sleep(dt)
            if self.plant.flying:
                self.tracker.land("tick budget reached")
                while self.plant.flying and time.monotonic() < deadline + 30.0:
                    time.sleep(dt)
        finally:
            stop.set()
            for thread in threads:
                thread.join(timeout=5.0)
        self.steps = self.driver.steps
        return self._result()

    def _result(self) -> SimulationResult:
        self.sink.close()
        return SimulationResult(
            ticks=self.tracker.ticks,
            steps=self.driver.steps,
            reports=list(self.tracker.reports),
            trajectory=list(self.tracker.trajectory),
            final_state=self.plant.state,
            suppressed=self.reporter.suppressed,
            dropped_envelopes=self.bus.dropped() + self.driver.dropped + self.tracker.dropped,
            sink_dropped=self.sink.dropped,
            sink_rejected=self.sink.rejected,
            sink_pending=len(self.sink.pending),
        )

    def write_outputs(self, result: SimulationResult) -> Dict[str, Path]:
        """Trajectory log, summary, and referenced frames when frames are kept"""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        trajectory = self.out_dir / TRAJECTORY_FILE
        lines = ["# " + " ".join(TRAJECTORY_COLUMNS)] + [row.to_line() for row in result.trajectory]
        trajectory.write_text("\n".join(lines) + "\n", encoding="utf-8")
        summary = self.out_dir / SUMMARY_FILE
        summary.write_text(dump_blocks([("", result.summary())]), encoding="utf-8")
        paths = {"trajectory": trajectory, "summary": summary}
        if isinstance(self.sink, FileSink):
            paths["reports"] = self.sink.path
        if self.cfg.sim.store_frames:
            written = store_frames(self.tracker.report_frames, result.reports, self.out_dir / "frames")
            logger.info("stored %d report frames", written)
        return paths
