# core/yolo_loss.py
"""
Target assignment and the sum-square detection loss

    total = coord_err + iou_err + cls_err

coord_err = l_coord * sum obj * [(x - a)^2 + (y - b)^2 + (sqrt w - sqrt w^)^2 + (sqrt h - sqrt h^)^2]
iou_err   = sum obj * (c - c^)^2 + l_noobj * sum noobj * (c - c^)^2
cls_err   = sum over cells holding an object of sum_c (p(c) - p^(c))^2

(a, b) are offsets of the truth center inside its cell, w/h are image
normalized. c^ is 1 for responsible slots and 0 elsewhere.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .detection import BBox, slot_boxes
from .errors import ShapeError

logger = logging.getLogger(__name__)

Truth = Tuple[int, BBox]


@dataclass
class TargetGrid:
    grid: int
    boxes_per_cell: int
    num_classes: int
    obj_mask: np.ndarray      # [g, g, B]
    boxes: np.ndarray         # [g, g, B, 4]: a, b, w, h
    conf: np.ndarray          # [g, g, B]
    cell_obj: np.ndarray      # [g, g]
    classes: np.ndarray       # [g, g, C] one-hot
    dropped: int = 0

    @classmethod
    def empty(cls, grid: int, boxes_per_cell: int, num_classes: int) -> "TargetGrid":
        return cls(
            grid=grid,
            boxes_per_cell=boxes_per_cell,
            num_classes=num_classes,
            obj_mask=np.zeros((grid, grid, boxes_per_cell)),
            boxes=np.zeros((grid, grid, boxes_per_cell, 4)),
            conf=np.zeros((grid, grid, boxes_per_cell)),
            cell_obj=np.zeros((grid, grid)),
            classes=np.zeros((grid, grid, num_classes)),
        )

    def responsible(self) -> List[Tuple[int, int, int]]:
        return [tuple(int(i) for i in idx) for idx in np.argwhere(self.obj_mask > 0)]


@dataclass
class LossBreakdown:
    coord_err: float
    iou_err: float
    cls_err: float
    degenerate: bool = False

    @property
    def total(self) -> float:
        return self.coord_err + self.iou_err + self.cls_err

    def log_line(self, iteration: int) -> str:
        return f"{iteration} {self.coord_err:.8g} {self.iou_err:.8g} {self.cls_err:.8g} {self.total:.8g}"


def _cell_of(value: float, grid: int) -> int:
    return min(max(int(np.floor(value * grid)), 0), grid - 1)


def _box_iou_array(boxes: np.ndarray, truth: BBox) -> np.ndarray:
    """IoU of each (cx, cy, w, h) row against one truth box"""
    w = np.maximum(boxes[:, 2], 0.0)
    h = np.maximum(boxes[:, 3], 0.0)
    tx0, ty0, tx1, ty1 = truth.corners()
    inter_w = np.minimum(boxes[:, 0] + w / 2, tx1) - np.maximum(boxes[:, 0] - w / 2, tx0)
    inter_h = np.minimum(boxes[:, 1] + h / 2, ty1) - np.maximum(boxes[:, 1] - h / 2, ty0)
    inter = np.clip(inter_w, 0.0, None) * np.clip(inter_h, 0.0, None)
    union = w * h + truth.area - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def assign_targets(truths: Sequence[Truth], grid: int, boxes_per_cell: int,
                   decoded_pred: Optional[np.ndarray] = None, num_classes: int = 3) -> TargetGrid:
    """Map each truth to the cell holding its center and the best-IoU slot there.

    decoded_pred is either the raw [g, g, B*5+C] prediction or slot_boxes()
    output [g, g, B, 4]; without it slot 0 is responsible.
    """
    targets = TargetGrid.empty(grid, boxes_per_cell, num_classes)
    slots = None
    if decoded_pred is not None:
        slots = decoded_pred if decoded_pred.ndim == 4 else slot_boxes(decoded_pred, boxes_per_cell)
        if slots.shape[:3] != (grid, grid, boxes_per_cell):
            raise ShapeError(f"slot boxes {slots.shape} do not match grid {grid} x {boxes_per_cell}")

    for class_id, box in truths:
        if not 0 <= class_id < num_classes:
            raise ShapeError(f"truth class {class_id} outside [0, {num_classes})")
        col, row = _cell_of(box.cx, grid), _cell_of(box.cy, grid)
        if targets.cell_obj[row, col]:
            targets.dropped += 1
            logger.warning("dropping truth class %d at (%.3f, %.3f): cell (%d, %d) already taken",
                           class_id, box.cx, box.cy, row, col)
            continue
        slot = 0
        if slots is not None:
            slot = int(np.argmax(_box_iou_array(slots[row, col], box)))
        targets.cell_obj[row, col] = 1.0
        targets.classes[row, col, class_id] = 1.0
        targets.obj_mask[row, col, slot] = 1.0
        targets.conf[row, col, slot] = 1.0
        targets.boxes[row, col, slot] = (box.cx * grid - col, box.cy * grid - row, box.w, box.h)
    return targets


def _split(pred: np.ndarray, targets: TargetGrid) -> Tuple[np.ndarray, np.ndarray]:
    g, b, c = targets.grid, targets.boxes_per_cell, targets.num_classes
    if pred.shape != (g, g, b * 5 + c):
        raise ShapeError(f"prediction {pred.shape} does not match targets ({g}, {g}, {b * 5 + c})")
    return pred[..., :b * 5].reshape(g, g, b, 5), pred[..., b * 5:]


def _loss_terms(pred: np.ndarray, targets: TargetGrid, lambda_coord: float,
                lambda_noobj: float) -> Tuple[LossBreakdown, np.ndarray]:
    slots, class_scores = _split(pred, targets)
    obj = targets.obj_mask
    noobj = 1.0 - obj

    dxy = slots[..., 0:2] - targets.boxes[..., 0:2]
    raw_wh = slots[..., 2:4]
    negative = (raw_wh < 0) & (obj[..., None] > 0)
    pred_wh = np.clip(raw_wh, 0.0, None)
    sqrt_pred = np.sqrt(pred_wh)
    dsqrt = sqrt_pred - np.sqrt(np.clip(targets.boxes[..., 2:4], 0.0, None))
    dconf = slots[..., 4] - targets.conf
    dcls = class_scores - targets.classes

    coord = lambda_coord * float(np.sum(obj[..., None] * dxy ** 2)) \
        + lambda_coord * float(np.sum(obj[..., None] * dsqrt ** 2))
    conf_err = float(np.sum(obj * dconf ** 2)) + lambda_noobj * float(np.sum(noobj * dconf ** 2))
    cls_err = float(np.sum(targets.cell_obj[..., None] * dcls ** 2))

    grad_slots = np.zeros_like(slots, dtype=np.float64)
    grad_slots[..., 0:2] = 2.0 * lambda_coord * obj[..., None] * dxy
    safe_sqrt = np.where(sqrt_pred > 0, sqrt_pred, 1.0)
    grad_slots[..., 2:4] = np.where(
        sqrt_pred > 0, lambda_coord * obj[..., None] * dsqrt / safe_sqrt, 0.0
    )
    grad_slots[..., 4] = 2.0 * (obj + lambda_noobj * noobj) * dconf
    grad_cls = 2.0 * targets.cell_obj[..., None] * dcls

    g, b = targets.grid, targets.boxes_per_cell
    grad = np.concatenate([grad_slots.reshape(g, g, b * 5), grad_cls], axis=-1)
    breakdown = LossBreakdown(coord, conf_err, cls_err, degenerate=bool(negative.any()))
    if breakdown.degenerate:
        logger.warning("negative predicted w/h clamped to 0 in the loss")
    return breakdown, grad


def yolo_loss(pred: np.ndarray, targets: TargetGrid, lambda_coord: float = 5.0,
              lambda_noobj: float = 0.5) -> LossBreakdown:
    breakdown, _ = _loss_terms(pred, targets, lambda_coord, lambda_noobj)
    return breakdown


def yolo_loss_and_grad(pred: np.ndarray, targets: TargetGrid, lambda_coord: float = 5.0,
                       lambda_noobj: float = 0.5) -> Tuple[LossBreakdown, np.ndarray]:
    """Loss plus d(total)/d(pred), same shape as pred"""
    return _loss_terms(pred, targets, lambda_coord, lambda_noobj)
