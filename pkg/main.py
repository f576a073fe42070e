# main.py
"""
Defect Report Server - FastAPI Application
Ground-side endpoint the inspection drone files crack/pothole reports to, plus
an on-demand detection endpoint backed by the trained network.
"""

import logging
import os
import threading
from collections import Counter
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import uvicorn
from fastapi import FastAPI, File, HTTPException, Query, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

# Load environment variables
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

from core.config_manager import RunConfigManager
from core.detection import CLASS_NAMES, DEFECT_CLASSES, BBox, format_detections, run_detector
from core.errors import RoadInspectError
from core.logging_setup import configure_logging
from core.model_zoo import Network, build_network, config_from_text, network_from_config
from core.weights_io import load_weights
from dataset.image_io import image_from_bytes
from dataset.samples import resize_image
from uav.defect_reporting import DefectReport

logger = logging.getLogger(__name__)

SERVICE_NAME = "road-inspection-report-server"
VERSION = "1.0.0"


# Pydantic models for API
class BoxModel(BaseModel):
    cx: float = Field(..., ge=0, le=1)
    cy: float = Field(..., ge=0, le=1)
    w: float = Field(..., gt=0, le=1)
    h: float = Field(..., gt=0, le=1)


class ReportIn(BaseModel):
    """Defect report as sent by the drone's HTTP sink"""
    sim_time: float
    seq: int = Field(..., ge=0)
    class_name: Optional[str] = Field(None, description="cracks or pothole")
    class_id: Optional[int] = None
    bbox: BoxModel
    confidence: float = Field(..., ge=0, le=1)
    image_ref: str = "-"
    world_x: Optional[float] = None
    world_y: Optional[float] = None


class ReportOut(ReportIn):
    id: int
    received_at: str


class DetectionOut(BaseModel):
    class_name: str
    class_id: int
    confidence: float
    bbox: BoxModel


class DefectReportServer:
    """Report store plus the detector used by /api/detect"""

    def __init__(self, store_path: Optional[str] = None, net: Optional[Network] = None,
                 conf_thresh: float = 0.25, iou_thresh: float = 0.45):
        self.store_path = Path(store_path) if store_path else None
        self.net = net
        self.conf_thresh = conf_thresh
        self.iou_thresh = iou_thresh
        self._lock = threading.Lock()
        self.reports: List[Dict[str, Any]] = []
        if self.store_path is not None:
            self.store_path.parent.mkdir(parents=True, exist_ok=True)
        logger.info("report server initialised (store: %s, detector: %s)",
                    self.store_path or "memory", "loaded" if net is not None else "none")

    def _resolve_class(self, report: ReportIn) -> int:
        if report.class_id is not None:
            return report.class_id
        if report.class_name in CLASS_NAMES:
            return CLASS_NAMES.index(report.class_name)
        raise HTTPException(status_code=400, detail=f"unknown class {report.class_name!r}")

    def add_report(self, report: ReportIn) -> Dict[str, Any]:
        class_id = self._resolve_class(report)
        box = report.bbox
        # DefectReport rejects lane and unknown classes
        record = DefectReport(report.sim_time, report.seq, class_id, BBox(box.cx, box.cy, box.w, box.h),
                              report.confidence, report.image_ref, report.world_x, report.world_y)
        with self._lock:
            entry = report.model_dump()
            entry.update(class_id=class_id, class_name=record.class_name, id=len(self.reports) + 1,
                         received_at=datetime.now().isoformat())
            self.reports.append(entry)
            if self.store_path is not None:
                with self.store_path.open("a", encoding="utf-8") as fh:
                    fh.write(record.to_line() + "\n")
        logger.info("report %d filed: %s", entry["id"], record.class_name)
        return entry

    def list_reports(self, class_name: Optional[str] = None) -> List[Dict[str, Any]]:
        with self._lock:
            return [r for r in self.reports if class_name is None or r["class_name"] == class_name]

    def get_stats(self) -> Dict[str, Any]:
        with self._lock:
            counts = Counter(r["class_name"] for r in self.reports)
        return {
            "total": sum(counts.values()),
            "by_class": {CLASS_NAMES[c]: counts.get(CLASS_NAMES[c], 0) for c in DEFECT_CLASSES},
            "detector_loaded": self.net is not None,
        }

    def detect(self, data: bytes) -> Dict[str, Any]:
        if self.net is None:
            raise HTTPException(status_code=503, detail="no detector loaded")
        image = image_from_bytes(data)
        size = self.net.input_size
        if image.shape[1:] != (size, size):
            image = resize_image(image, size)
        detections = run_detector(self.net, image, self.conf_thresh, self.iou_thresh)
        return {
            "detections": [DetectionOut(class_name=d.class_name, class_id=d.class_id,
                                        confidence=d.confidence,
                                        bbox=BoxModel(cx=d.bbox.cx, cy=d.bbox.cy,
                                                      w=d.bbox.w, h=d.bbox.h)).model_dump()
                           for d in detections],
            "lines": format_detections(detections),
            "count": len(detections),
        }


def load_detector() -> Optional[Network]:
    """Network from ROADINSPECT_NETWORK_CONFIG + ROADINSPECT_WEIGHTS, or an untrained one"""
    try:
        cfg = RunConfigManager(os.getenv("ROADINSPECT_CONFIG") or None).load()
        network_cfg = os.getenv("ROADINSPECT_NETWORK_CONFIG")
        if network_cfg:
            net = network_from_config(config_from_text(Path(network_cfg).read_text(encoding="utf-8")), cfg.seed)
        else:
            options = cfg.network
            net = build_network(options.variant, options.num_classes, options.boxes_per_cell,
                                cfg.train.input_size, options.width, cfg.seed)
        weights = os.getenv("ROADINSPECT_WEIGHTS")
        if weights:
            load_weights(net, weights)
        else:
            logger.warning("ROADINSPECT_WEIGHTS not set, /api/detect uses an untrained network")
        return net
    except (RoadInspectError, OSError) as exc:
        logger.error("detector initialization failed: %s", exc)
        return None


def create_app(server: Optional[DefectReportServer] = None) -> FastAPI:
    if server is None:
        server = DefectReportServer(os.getenv("ROADINSPECT_REPORT_STORE"), load_detector())

    app = FastAPI(
        title="Road Inspection Report Server",
        description="Crack and pothole reports from the inspection drone",
        version=VERSION,
    )
    app.state.report_server = server

    # CORS middleware
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["GET", "POST", "OPTIONS"],
        allow_headers=["*"],
    )

    @app.get("/health")
    async def health_check():
        """Health check endpoint for deployment"""
        return {"status": "healthy", "service": SERVICE_NAME}

    @app.get("/api/health")
    async def api_health():
        return {
            "status": "healthy",
            "timestamp": datetime.now().isoformat(),
            "detector_loaded": server.net is not None,
            "reports": len(server.reports),
            "version": VERSION,
        }

    @app.get("/")
    async def root():
        return {
            "message": "Road Inspection Report Server",
            "status": "online",
            "endpoints": {
                "/api/reports": "POST a defect report, GET stored reports",
                "/api/stats": "report counts per class",
                "/api/detect": "POST an image, get detections",
            },
            "version": VERSION,
        }

    @app.post("/api/reports", response_model=ReportOut, status_code=201)
    async def post_report(report: ReportIn):
        try:
            return server.add_report(report)
        except HTTPException:
            raise
        except RoadInspectError as e:
            raise HTTPException(status_code=400, detail=str(e))
        except Exception as e:
            raise HTTPException(status_code=500, detail=f"Report storage failed: {str(e)}")

    @app.get("/api/reports", response_model=List[ReportOut])
    async def get_reports(cls: Optional[str] = Query(None, description="cracks or pothole")):
        return server.list_reports(cls)

    @app.get("/api/stats")
    async def get_stats():
        return server.get_stats()

    @app.post("/api/detect")
    async def detect(file: UploadFile = File(...)):
        data = await file.read()
        try:
            return server.detect(data)
        except HTTPException:
            raise
        except RoadInspectError as e:
            raise HTTPException(status_code=400, detail=str(e))
        except Exception as e:
            raise HTTPException(status_code=500, detail=f"Detection failed: {str(e)}")

    return app


app = create_app()

if __name__ == "__main__":
    configure_logging(os.getenv("LOG_LEVEL", "INFO"))
    port = int(os.getenv("PORT", 8000))

    uvicorn.run(
        "main:app",
        host="0.0.0.0",
        port=port,
        reload=False,
        log_level="info"
    )
