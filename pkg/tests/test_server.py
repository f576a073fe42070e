# tests/test_server.py
import pytest
from fastapi.testclient import TestClient

from dataset.image_io import image_to_bytes
from main import DefectReportServer, create_app

REPORT = {
    "sim_time": 3.5,
    "seq": 12,
    "class_name": "pothole",
    "bbox": {"cx": 0.5, "cy": 0.6, "w": 0.1, "h": 0.1},
    "confidence": 0.9,
    "image_ref": "frame_000012.ppm",
}


@pytest.fixture
def client():
    return TestClient(create_app(DefectReportServer()))


def test_health_endpoints(client):
    assert client.get("/health").json()["status"] == "healthy"
    body = client.get("/api/health").json()
    assert body["detector_loaded"] is False
    assert body["reports"] == 0
    assert "/api/reports" in client.get("/").json()["endpoints"]


def test_reports_are_stored_and_filtered(client):
    response = client.post("/api/reports", json=REPORT)
    assert response.status_code == 201
    assert response.json()["id"] == 1
    assert response.json()["class_id"] == 1
    crack = dict(REPORT, class_name="cracks", seq=13)
    assert client.post("/api/reports", json=crack).status_code == 201

    assert len(client.get("/api/reports").json()) == 2
    potholes = client.get("/api/reports", params={"cls": "pothole"}).json()
    assert [r["seq"] for r in potholes] == [12]
    assert client.get("/api/stats").json() == {
        "total": 2, "by_class": {"cracks": 1, "pothole": 1}, "detector_loaded": False,
    }


@pytest.mark.parametrize("changes", [{"class_name": "yellowlane"}, {"class_name": "puddle"}])
def test_non_defect_reports_are_rejected(client, changes):
    assert client.post("/api/reports", json=dict(REPORT, **changes)).status_code == 400


def test_malformed_report_fails_validation(client):
    assert client.post("/api/reports", json=dict(REPORT, confidence=1.5)).status_code == 422


def test_report_store_file(tmp_path):
    store = tmp_path / "reports.txt"
    client = TestClient(create_app(DefectReportServer(str(store))))
    client.post("/api/reports", json=REPORT)
    assert store.read_text().split()[2] == "pothole"


def test_detect_needs_a_network(client, rng):
    files = {"file": ("frame.ppm", image_to_bytes(rng.uniform(size=(3, 64, 64))), "image/x-portable-pixmap")}
    assert client.post("/api/detect", files=files).status_code == 503


def test_detect_with_network(tiny_net, rng):
    client = TestClient(create_app(DefectReportServer(net=tiny_net, conf_thresh=0.0)))
    files = {"file": ("frame.ppm", image_to_bytes(rng.uniform(size=(3, 64, 64))), "image/x-portable-pixmap")}
    response = client.post("/api/detect", files=files)
    assert response.status_code == 200
    body = response.json()
    assert body["count"] == len(body["detections"]) == body["lines"].count("\n")
    bad = client.post("/api/detect", files={"file": ("x.ppm", b"garbage", "image/x-portable-pixmap")})
    assert bad.status_code == 400
