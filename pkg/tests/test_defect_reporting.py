# tests/test_defect_reporting.py
import math
import socket
import threading

import pytest
import requests

from core.detection import CRACKS, POTHOLE, YELLOWLANE, BBox, Detection
from core.errors import ConfigurationError, DecodeError
from core.pose import CameraModel, DroneState
from uav.defect_reporting import (
    DefectReport,
    DefectReporter,
    FileSink,
    HttpSink,
    MemorySink,
    ReportSink,
    SocketSink,
    frame_record,
    parse_address,
    parse_report_file,
    read_frame_records,
)

BOX = BBox(0.5, 0.75, 0.125, 0.25)


def report(seq=1, class_id=POTHOLE):
    return DefectReport(1.25, seq, class_id, BOX, 1.0, f"frame_{seq:06d}.ppm", 0.5, 3.0)


class FlakySink(ReportSink):
    kind = "flaky"

    def __init__(self, buffer_limit):
        super().__init__(buffer_limit)
        self.up = False
        self.received = []

    def _deliver(self, record):
        if not self.up:
            raise ConnectionRefusedError("down")
        self.received.append(record)


def test_report_line_format_and_parsing():
    line = report().to_line()
    assert line == "1.250 1 pothole 0.500000 0.750000 0.125000 0.250000 1.000000 frame_000001.ppm"
    parsed = DefectReport.from_line(line)
    assert (parsed.seq, parsed.class_id, parsed.bbox, parsed.image_ref) == (1, POTHOLE, BOX, "frame_000001.ppm")
    assert [r.seq for r in parse_report_file(line + "\n\n" + report(2).to_line() + "\n")] == [1, 2]
    with pytest.raises(DecodeError):
        DefectReport.from_line("1.0 1 pothole 0.5")
    with pytest.raises(DecodeError):
        DefectReport.from_line(line.replace("pothole", "yellowlane"))


def test_lane_is_not_a_defect():
    with pytest.raises(ConfigurationError):
        report(class_id=YELLOWLANE)
    assert report(class_id=CRACKS).to_dict()["class_name"] == "cracks"


def test_buffer_drops_oldest_when_destination_is_down():
    sink = FlakySink(buffer_limit=3)
    for seq in range(1, 6):
        assert sink.send(report(seq)) is False
    assert sink.dropped == 2
    assert [r.seq for r in sink.pending] == [3, 4, 5]
    sink.up = True
    assert sink.flush() is True
    assert [r.seq for r in sink.received] == [3, 4, 5]
    assert sink.delivered == 3 and not sink.pending
    with pytest.raises(ConfigurationError):
        MemorySink(buffer_limit=0)


def test_file_sink_appends_lines(tmp_path):
    path = tmp_path / "out" / "reports.txt"
    sink = FileSink(path)
    sink.send(report(1))
    sink.send(report(2))
    sink.close()
    assert [r.seq for r in parse_report_file(path.read_text())] == [1, 2]
    FileSink(path)
    assert path.read_text() == ""


def test_frame_records_split_a_stream():
    stream = frame_record(report(1)) + frame_record(report(2))
    reports, tail = read_frame_records(stream + stream[:3])
    assert [r.seq for r in reports] == [1, 2]
    assert tail == stream[:3]


def test_parse_address():
    assert parse_address("localhost:9000") == ("localhost", 9000)
    assert parse_address(":9000") == ("127.0.0.1", 9000)
    with pytest.raises(ConfigurationError):
        parse_address("localhost")


def test_socket_sink_delivers_framed_records():
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.bind(("127.0.0.1", 0))
    server.listen(1)
    received = bytearray()

    def serve():
        conn, _ = server.accept()
        with conn:
            while True:
                chunk = conn.recv(4096)
                if not chunk:
                    break
                received.extend(chunk)

    thread = threading.Thread(target=serve)
    thread.start()
    sink = SocketSink(f"127.0.0.1:{server.getsockname()[1]}")
    assert sink.send(report(1)) and sink.send(report(2))
    sink.close()
    thread.join(timeout=5.0)
    server.close()
    reports, tail = read_frame_records(bytes(received))
    assert [r.seq for r in reports] == [1, 2]
    assert tail == b""


def test_socket_sink_buffers_while_unreachable():
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    sink = SocketSink(f"127.0.0.1:{port}", timeout=0.5)
    assert sink.send(report(1)) is False
    assert len(sink.pending) == 1


def test_http_sink_retries_then_buffers(monkeypatch):
    sink = HttpSink("http://127.0.0.1:1", attempts=3)
    calls = []

    def refuse(*args, **kwargs):
        calls.append(kwargs["json"]["seq"])
        raise requests.ConnectionError("refused")

    monkeypatch.setattr(sink.session, "post", refuse)
    assert sink.send(report(7)) is False
    assert calls == [7, 7, 7]
    assert len(sink.pending) == 1
    assert sink.url == "http://127.0.0.1:1/api/reports"


def status_response(code):
    response = requests.Response()
    response.status_code = code
    response.url = "http://127.0.0.1:1/api/reports"
    return response


def test_http_sink_drops_a_rejected_report_without_retrying(monkeypatch):
    sink = HttpSink("http://127.0.0.1:1", attempts=3)
    calls = []

    def reject(*args, **kwargs):
        calls.append(kwargs["json"]["seq"])
        return status_response(400)

    monkeypatch.setattr(sink.session, "post", reject)
    assert sink.send(report(8)) is True
    assert calls == [8]
    assert len(sink.pending) == 0
    assert (sink.delivered, sink.rejected) == (0, 1)


def test_http_sink_retries_server_errors(monkeypatch):
    sink = HttpSink("http://127.0.0.1:1", attempts=3)
    codes = [503, 503, 201]

    def unavailable_then_ok(*args, **kwargs):
        return status_response(codes.pop(0))

    monkeypatch.setattr(sink.session, "post", unavailable_then_ok)
    assert sink.send(report(9)) is True
    assert codes == []
    assert (sink.delivered, sink.rejected, len(sink.pending)) == (1, 0, 0)


def test_reporter_suppresses_nearby_duplicates():
    camera = CameraModel()
    sink = MemorySink()
    reporter = DefectReporter(sink, camera, dedup_radius=1.0)
    state = DroneState(x=0.0, y=0.0, z=2.0, flying=True)
    pothole = Detection(BBox(0.5, 0.5, 0.1, 0.1), POTHOLE, 0.9)

    first = reporter.report(pothole, 1, 0.1, state)
    assert first is not None
    assert first.world_y == pytest.approx(2.0 / math.tan(1.3))
    assert reporter.report(pothole, 2, 0.2, state) is None
    assert reporter.suppressed == 1
    # another class at the same spot is reported separately
    assert reporter.report(Detection(pothole.bbox, CRACKS, 0.8), 3, 0.3, state) is not None
    assert reporter.report(Detection(pothole.bbox, YELLOWLANE, 0.8), 4, 0.4, state) is None
    moved = DroneState(x=0.0, y=1.5, z=2.0, flying=True)
    assert reporter.report(pothole, 5, 0.5, moved) is not None
    assert [r.seq for r in sink.records] == [1, 3, 5]
