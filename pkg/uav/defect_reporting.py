# uav/defect_reporting.py
"""
Defect reports and the sinks that stand in for the ground server.

A record is one text line:
    sim_time seq class cx cy w h confidence image_ref
Sinks buffer records while the destination is unavailable and drop the oldest
once `buffer_limit` records are pending.
A record the destination refuses outright is logged and discarded.
"""

import logging
import socket
import struct
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Tuple, Union

import requests
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from core.detection import CLASS_NAMES, DEFECT_CLASSES, BBox, Detection
from core.errors import ConfigurationError, DecodeError, ReportRejectedError
from core.pose import CameraModel, DroneState, backproject_pixel

logger = logging.getLogger(__name__)

_LENGTH_PREFIX = struct.Struct(">I")


@dataclass(frozen=True)
class DefectReport:
    sim_time: float
    seq: int
    class_id: int
    bbox: BBox
    confidence: float
    image_ref: str = "-"
    world_x: Optional[float] = None
    world_y: Optional[float] = None

    def __post_init__(self):
        if self.class_id not in DEFECT_CLASSES:
            raise ConfigurationError(f"class {self.class_id} is not a reportable defect")

    @property
    def class_name(self) -> str:
        return CLASS_NAMES[self.class_id]

    def to_line(self) -> str:
        b = self.bbox
        return (f"{self.sim_time:.3f} {self.seq} {self.class_name} {b.cx:.6f} {b.cy:.6f} "
                f"{b.w:.6f} {b.h:.6f} {self.confidence:.6f} {self.image_ref}")

    @classmethod
    def from_line(cls, line: str) -> "DefectReport":
        parts = line.split()
        if len(parts) != 9:
            raise DecodeError(f"report line needs 9 fields, got {len(parts)}: {line!r}")
        if parts[2] not in CLASS_NAMES:
            raise DecodeError(f"unknown class {parts[2]!r}")
        try:
            cx, cy, w, h, conf = (float(p) for p in parts[3:8])
            return cls(float(parts[0]), int(parts[1]), CLASS_NAMES.index(parts[2]),
                       BBox(cx, cy, w, h), conf, parts[8])
        except (ValueError, ConfigurationError) as exc:
            raise DecodeError(f"bad report line {line!r}: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["class_name"] = self.class_name
        return data


def parse_report_file(text: str) -> List[DefectReport]:
    return [DefectReport.from_line(line) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------- sinks

class ReportSink:
    """Buffered delivery; subclasses implement _deliver and raise OSError when down"""

    kind = "sink"

    def __init__(self, buffer_limit: int = 256):
        if buffer_limit < 1:
            raise ConfigurationError("buffer_limit must be at least 1")
        self.buffer_limit = buffer_limit
        self.pending: Deque[DefectReport] = deque()
        self.delivered = 0
        self.dropped = 0
        self.rejected = 0

    def send(self, report: DefectReport) -> bool:
        self.pending.append(report)
        if len(self.pending) > self.buffer_limit:
            self.pending.popleft()
            self.dropped += 1
            logger.warning("%s sink buffer full, dropped oldest report (%d dropped)", self.kind, self.dropped)
        return self.flush()

    def flush(self) -> bool:
        """Deliver pending records in order; False when the destination is unavailable"""
        while self.pending:
            try:
                self._deliver(self.pending[0])
            except ReportRejectedError as exc:
                self.pending.popleft()
                self.rejected += 1
                logger.error("%s sink rejected a report, not retrying: %s", self.kind, exc)
                continue
            except OSError as exc:
                logger.warning("%s sink unavailable (%s), %d report(s) buffered",
                               self.kind, exc, len(self.pending))
                return False
            self.pending.popleft()
            self.delivered += 1
        return True

    def _deliver(self, report: DefectReport) -> None:
        raise NotImplementedError

    def close(self) -> None:
        self.flush()


class FileSink(ReportSink):
    """Append-only report file"""

    kind = "file"

    def __init__(self, path: Union[str, Path], buffer_limit: int = 256, truncate: bool = True):
        super().__init__(buffer_limit)
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if truncate:
            self.path.write_text("", encoding="utf-8")

    def _deliver(self, report: DefectReport) -> None:
        with self.path.open("a", encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_line() + "\n")


def frame_record(report: DefectReport) -> bytes:
    data = report.to_line().encode("utf-8")
    return _LENGTH_PREFIX.pack(len(data)) + data


def read_frame_records(data: bytes) -> Tuple[List[DefectReport], bytes]:
    """Complete length-prefixed records in data, plus the unconsumed tail"""
    reports: List[DefectReport] = []
    offset = 0
    while len(data) - offset >= _LENGTH_PREFIX.size:
        (length,) = _LENGTH_PREFIX.unpack_from(data, offset)
        end = offset + _LENGTH_PREFIX.size + length
        if end > len(data):
            break
        reports.append(DefectReport.from_line(data[offset + _LENGTH_PREFIX.size:end].decode("utf-8")))
        offset = end
    return reports, data[offset:]


def parse_address(address: str) -> Tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigurationError(f"socket address must be host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


class SocketSink(ReportSink):
    """Length-prefixed records over a local stream socket"""

    kind = "socket"

    def __init__(self, address: str, buffer_limit: int = 256, timeout: float = 2.0):
        super().__init__(buffer_limit)
        self.host, self.port = parse_address(address)
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
            logger.info("report socket connected to %s:%d", self.host, self.port)
        return self._sock

    def _deliver(self, report: DefectReport) -> None:
        try:
            self._connect().sendall(frame_record(report))
        except OSError:
            self._disconnect()
            raise

    def _disconnect(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def close(self) -> None:
        super().close()
        self._disconnect()


class HttpSink(ReportSink):
    """POSTs each report as JSON to the report server's /api/reports"""

    kind = "http"

    def __init__(self, base_url: str, buffer_limit: int = 256, timeout: float = 5.0, attempts: int = 3):
        super().__init__(buffer_limit)
        self.url = base_url.rstrip("/") + "/api/reports"
        self.timeout = timeout
        self.session = requests.Session()
        self._post = retry(
            stop=stop_after_attempt(attempts),
            wait=wait_exponential(multiplier=0.1, max=2.0),
            retry=retry_if_exception_type((requests.ConnectionError, requests.Timeout, requests.HTTPError)),
            reraise=True,
        )(self._post_once)

    def _post_once(self, report: DefectReport) -> None:
        response = self.session.post(self.url, json=report.to_dict(), timeout=self.timeout)
        if 400 <= response.status_code < 500:
            raise ReportRejectedError(f"report seq {report.seq}: HTTP {response.status_code} from {self.url}")
        response.raise_for_status()

    def _deliver(self, report: DefectReport) -> None:
        self._post(report)

    def close(self) -> None:
        super().close()
        self.session.close()


class MemorySink(ReportSink):
    kind = "memory"

    def __init__(self, buffer_limit: int = 256):
        super().__init__(buffer_limit)
        self.records: List[DefectReport] = []

    def _deliver(self, report: DefectReport) -> None:
        self.records.append(report)


# ---------------------------------------------------------------- reporter

class DefectReporter:
    """
    Turns crack/pothole detections into reports. A detection is suppressed
    when a report of the same class already exists within dedup_radius meters
    of its estimated ground position.
    """

    def __init__(self, sink: ReportSink, camera: CameraModel, dedup_radius: float = 1.0):
        self.sink = sink
        self.camera = camera
        self.dedup_radius = dedup_radius
        self.filed: List[Tuple[int, float, float]] = []
        self.suppressed = 0

    def world_position(self, det: Detection, state: DroneState) -> Tuple[float, float]:
        n = self.camera.image_size
        hit = backproject_pixel(self.camera, state, det.bbox.cx * n, det.bbox.cy * n)
        return hit if hit is not None else (state.x, state.y)

    def _is_duplicate(self, class_id: int, x: float, y: float) -> bool:
        radius2 = self.dedup_radius ** 2
        return any(c == class_id and (x - fx) ** 2 + (y - fy) ** 2 <= radius2
                   for c, fx, fy in self.filed)

    def report(self, det: Detection, frame_seq: int, sim_time: float, state: DroneState,
               image_ref: str = "-") -> Optional[DefectReport]:
        if det.class_id not in DEFECT_CLASSES:
            return None
        x, y = self.world_position(det, state)
        if self._is_duplicate(det.class_id, x, y):
            self.suppressed += 1
            return None
        report = DefectReport(sim_time, frame_seq, det.class_id, det.bbox, det.confidence,
                              image_ref, x, y)
        self.filed.append((det.class_id, x, y))
        self.sink.send(report)
        logger.info("reported %s at (%.2f, %.2f), frame %d", report.class_name, x, y, frame_seq)
        return report
