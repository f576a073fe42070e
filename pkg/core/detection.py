# core/detection.py
"""
Bounding boxes, decoding of the g x g prediction grid, IoU, per-class NMS and
the text line format `class_id cs cx cy w h`.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DecodeError, ShapeError

logger = logging.getLogger(__name__)

CLASS_NAMES = ("cracks", "pothole", "yellowlane")
CRACKS, POTHOLE, YELLOWLANE = 0, 1, 2
DEFECT_CLASSES = (CRACKS, POTHOLE)

MIN_BOX_SIZE = 1e-6


@dataclass(frozen=True)
class BBox:
    """Center/size box, normalized to the image"""
    cx: float
    cy: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return max(self.w, 0.0) * max(self.h, 0.0)

    def corners(self) -> Tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)"""
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    def contains(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.corners()
        return xmin <= x <= xmax and ymin <= y <= ymax

    def clamped(self) -> "BBox":
        return BBox(
            float(np.clip(self.cx, 0.0, 1.0)),
            float(np.clip(self.cy, 0.0, 1.0)),
            float(np.clip(self.w, MIN_BOX_SIZE, 1.0)),
            float(np.clip(self.h, MIN_BOX_SIZE, 1.0)),
        )

    def to_pixels(self, img_w: int, img_h: int) -> Tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) in pixels"""
        xmin, ymin, xmax, ymax = self.corners()
        return xmin * img_w, xmax * img_w, ymin * img_h, ymax * img_h

    def is_valid(self) -> bool:
        return 0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0 and 0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    class_id: int
    confidence: float
    order: int = 0  # grid slot index (row*g + col)*B + slot, or line index

    @property
    def class_name(self) -> str:
        return CLASS_NAMES[self.class_id] if 0 <= self.class_id < len(CLASS_NAMES) else str(self.class_id)

    def sort_key(self) -> Tuple[float, int, int]:
        return (-self.confidence, self.class_id, self.order)


def _check_grid(pred: np.ndarray, boxes_per_cell: int) -> Tuple[int, int]:
    if pred.ndim != 3 or pred.shape[0] != pred.shape[1]:
        raise ShapeError(f"prediction must be [g, g, depth], got {pred.shape}")
    if boxes_per_cell < 1:
        raise ConfigurationError("boxes_per_cell must be >= 1")
    num_classes = pred.shape[2] - boxes_per_cell * 5
    if num_classes < 1:
        raise ShapeError(
            f"depth {pred.shape[2]} cannot hold {boxes_per_cell} boxes and at least one class"
        )
    return pred.shape[0], num_classes


def slot_boxes(pred: np.ndarray, boxes_per_cell: int) -> np.ndarray:
    """Decoded (cx, cy, w, h) per slot as a [g, g, B, 4] array (not clamped)"""
    grid, _ = _check_grid(pred, boxes_per_cell)
    slots = pred[..., :boxes_per_cell * 5].reshape(grid, grid, boxes_per_cell, 5)
    cols = np.arange(grid)[None, :, None]
    rows = np.arange(grid)[:, None, None]
    boxes = np.empty((grid, grid, boxes_per_cell, 4), dtype=np.float64)
    boxes[..., 0] = (cols + slots[..., 0]) / grid
    boxes[..., 1] = (rows + slots[..., 1]) / grid
    boxes[..., 2] = slots[..., 2]
    boxes[..., 3] = slots[..., 3]
    return boxes


def decode_grid(pred: np.ndarray, conf_thresh: float, boxes_per_cell: int) -> List[Detection]:
    """One candidate per (cell, slot); cs = box confidence x best class score"""
    if not 0.0 <= conf_thresh <= 1.0:
        raise ConfigurationError(f"conf_thresh {conf_thresh} outside [0, 1]")
    grid, _ = _check_grid(pred, boxes_per_cell)
    boxes = slot_boxes(pred, boxes_per_cell)
    class_scores = pred[..., boxes_per_cell * 5:]
    best_class = class_scores.argmax(axis=-1)
    best_score = class_scores.max(axis=-1)

    detections: List[Detection] = []
    for row in range(grid):
        for col in range(grid):
            for slot in range(boxes_per_cell):
                cs = float(pred[row, col, slot * 5 + 4] * best_score[row, col])
                if cs <= 0.0 or cs < conf_thresh:
                    continue
                box = BBox(*(float(v) for v in boxes[row, col, slot])).clamped()
                detections.append(Detection(
                    bbox=box,
                    class_id=int(best_class[row, col]),
                    confidence=min(cs, 1.0),
                    order=(row * grid + col) * boxes_per_cell + slot,
                ))
    return detections


def iou(a: BBox, b: BBox) -> float:
    if a.area <= 0.0 or b.area <= 0.0:
        return 0.0
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    inter_w = min(ax1, bx1) - max(ax0, bx0)
    inter_h = min(ay1, by1) - max(ay0, by0)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    return float(inter / (a.area + b.area - inter))


def nms(detections: Iterable[Detection], iou_thresh: float) -> List[Detection]:
    """Greedy per-class suppression, sorted by (cs desc, class_id, order)"""
    if not 0.0 <= iou_thresh <= 1.0:
        raise ConfigurationError(f"iou_thresh {iou_thresh} outside [0, 1]")
    kept: List[Detection] = []
    for det in sorted(detections, key=Detection.sort_key):
        if all(k.class_id != det.class_id or iou(k.bbox, det.bbox) <= iou_thresh for k in kept):
            kept.append(det)
    return kept


def run_detector(net, image: np.ndarray, conf_thresh: float = 0.25,
                 iou_thresh: float = 0.45) -> List[Detection]:
    """forward -> decode -> nms"""
    pred = net.forward(image)
    return nms(decode_grid(pred, conf_thresh, net.config.boxes_per_cell), iou_thresh)


# ---------------------------------------------------------------- text lines

def format_detection(det: Detection) -> str:
    b = det.bbox
    return f"{det.class_id} {det.confidence:.6g} {b.cx:.6g} {b.cy:.6g} {b.w:.6g} {b.h:.6g}"


def format_detections(detections: Iterable[Detection]) -> str:
    return "".join(format_detection(det) + "\n" for det in detections)


def parse_detection(line: str, order: int = 0, num_classes: Optional[int] = None) -> Detection:
    parts = line.split()
    if len(parts) != 6:
        raise DecodeError(f"detection line needs 6 fields, got {len(parts)}: {line!r}")
    try:
        class_id = int(parts[0])
        cs, cx, cy, w, h = (float(p) for p in parts[1:])
    except ValueError as exc:
        raise DecodeError(f"bad detection line {line!r}") from exc
    box = BBox(cx, cy, w, h)
    if class_id < 0 or (num_classes is not None and class_id >= num_classes):
        raise DecodeError(f"class id {class_id} out of range in {line!r}")
    if not 0.0 <= cs <= 1.0 or not box.is_valid():
        raise DecodeError(f"detection values out of range in {line!r}")
    return Detection(box, class_id, cs, order)


def parse_detections(text: str, num_classes: Optional[int] = None) -> List[Detection]:
    lines = [line for line in text.splitlines() if line.strip()]
    return [parse_detection(line, index, num_classes) for index, line in enumerate(lines)]


