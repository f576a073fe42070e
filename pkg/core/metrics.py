# core/metrics.py
"""
Centroid-based detection matching and the evaluation metrics:
precision, sensitivity, F1, F2, Dice, accuracy, per-class AP / mAP and a
latency benchmark.

A detection is a true positive when its center lies inside an unclaimed
ground-truth box of the same class. Extra detections on an already claimed
truth are duplicates: ignored by default, false positives in strict mode.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .detection import CLASS_NAMES, BBox, Detection, run_detector
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

Truth = Tuple[int, BBox]
Frame = Tuple[Sequence[Detection], Sequence[Truth]]

ACCURACY_DEFINITION = "accuracy = TP / (TP + FP + FN), micro-averaged over classes"


# ---------------------------------------------------------------- matching

@dataclass
class MatchResult:
    num_classes: int = 3
    tp: List[int] = field(default_factory=list)
    fp: List[int] = field(default_factory=list)
    fn: List[int] = field(default_factory=list)
    tn: List[int] = field(default_factory=list)
    duplicates: List[int] = field(default_factory=list)
    frames: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn", "duplicates"):
            if not getattr(self, name):
                setattr(self, name, [0] * self.num_classes)

    def merge(self, other: "MatchResult") -> "MatchResult":
        if other.num_classes != self.num_classes:
            raise ConfigurationError("cannot merge match results with different class counts")
        for name in ("tp", "fp", "fn", "tn", "duplicates"):
            mine, theirs = getattr(self, name), getattr(other, name)
            setattr(self, name, [a + b for a, b in zip(mine, theirs)])
        self.frames += other.frames
        return self


def _claim(det: Detection, truths: Sequence[Truth], claimed: List[bool]) -> Tuple[Optional[int], bool]:
    """Index of the first unclaimed same-class truth holding det's center, and
    whether the center fell inside an already claimed one."""
    inside_claimed = False
    for index, (class_id, box) in enumerate(truths):
        if class_id != det.class_id or not box.contains(det.bbox.cx, det.bbox.cy):
            continue
        if not claimed[index]:
            return index, inside_claimed
        inside_claimed = True
    return None, inside_claimed


def match_detections(detections: Sequence[Detection], truths: Sequence[Truth],
                     num_classes: int = 3, strict: bool = False) -> MatchResult:
    """Match one frame's detections against its ground truth"""
    result = MatchResult(num_classes=num_classes, frames=1)
    claimed = [False] * len(truths)
    for det in sorted(detections, key=Detection.sort_key):
        index, duplicate = _claim(det, truths, claimed)
        if index is not None:
            claimed[index] = True
            result.tp[det.class_id] += 1
        elif duplicate:
            result.duplicates[det.class_id] += 1
            if strict:
                result.fp[det.class_id] += 1
        else:
            result.fp[det.class_id] += 1

    for (class_id, _), was_claimed in zip(truths, claimed):
        if not was_claimed:
            result.fn[class_id] += 1
    for class_id in range(num_classes):
        if not any(c == class_id for c, _ in truths) and not any(d.class_id == class_id for d in detections):
            result.tn[class_id] += 1
    return result


def match_frames(frames: Sequence[Frame], num_classes: int = 3, strict: bool = False) -> MatchResult:
    total = MatchResult(num_classes=num_classes)
    for detections, truths in frames:
        total.merge(match_detections(detections, truths, num_classes, strict))
    return total


# ---------------------------------------------------------------- scores (percent)

def _ratio(num: float, den: float) -> float:
    return 100.0 * num / den if den > 0 else 0.0


def precision(tp: int, fp: int) -> float:
    return _ratio(tp, tp + fp)


def sensitivity(tp: int, fn: int) -> float:
    return _ratio(tp, tp + fn)


def f1(pre: float, sen: float) -> float:
    if pre + sen <= 0:
        return 0.0
    return 2.0 * sen * pre / (sen + pre)


def f2(pre: float, sen: float) -> float:
    if 4.0 * pre + sen <= 0:
        return 0.0
    return 5.0 * pre * sen / (4.0 * pre + sen)


def dice(tp: int, fp: int, fn: int) -> float:
    return _ratio(2 * tp, 2 * tp + fp + fn)


def accuracy(match: MatchResult) -> float:
    tp, fp, fn = sum(match.tp), sum(match.fp), sum(match.fn)
    return _ratio(tp, tp + fp + fn)


# ---------------------------------------------------------------- AP

def _all_points_ap(recall: np.ndarray, prec: np.ndarray) -> float:
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    changes = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changes + 1] - mrec[changes]) * mpre[changes + 1]))


def pr_curve(frames: Sequence[Frame], class_id: int,
             strict: bool = False) -> Tuple[np.ndarray, np.ndarray, int]:
    """(recall, precision, n_truths); one point per distinct confidence level"""
    n_truths = sum(1 for _, truths in frames for c, _ in truths if c == class_id)
    ranked = sorted(
        ((det, frame_index) for frame_index, (dets, _) in enumerate(frames)
         for det in dets if det.class_id == class_id),
        key=lambda item: (-item[0].confidence, item[1], item[0].order),
    )
    claimed = [[False] * len(truths) for _, truths in frames]
    tp = fp = 0
    recalls: List[float] = []
    precisions: List[float] = []
    for position, (det, frame_index) in enumerate(ranked):
        index, duplicate = _claim(det, frames[frame_index][1], claimed[frame_index])
        if index is not None:
            claimed[frame_index][index] = True
            tp += 1
        elif not duplicate or strict:
            fp += 1
        last_of_level = (position + 1 == len(ranked)
                         or ranked[position + 1][0].confidence != det.confidence)
        if last_of_level and tp + fp > 0:
            recalls.append(tp / n_truths if n_truths else 0.0)
            precisions.append(tp / (tp + fp))
    return np.asarray(recalls), np.asarray(precisions), n_truths


def average_precision(frames: Sequence[Frame], class_id: int, strict: bool = False) -> Optional[float]:
    """All-points interpolated AP in percent; None when the class has no truths"""
    recall, prec, n_truths = pr_curve(frames, class_id, strict)
    if n_truths == 0:
        return None
    if recall.size == 0:
        return 0.0
    return 100.0 * _all_points_ap(recall, prec)


def mean_ap(aps: Dict[int, Optional[float]]) -> float:
    defined = [ap for ap in aps.values() if ap is not None]
    return float(np.mean(defined)) if defined else 0.0


# ---------------------------------------------------------------- latency

@dataclass
class LatencyStats:
    mean: float
    min: float
    max: float
    repetitions: int

    def as_dict(self) -> Dict[str, float]:
        return {"mean": self.mean, "min": self.min, "max": self.max, "repetitions": self.repetitions}


def bench_latency(net, images: Sequence[np.ndarray], repetitions: int, warmup: int = 1,
                  conf_thresh: float = 0.25, iou_thresh: float = 0.45) -> LatencyStats:
    """Seconds per image for forward + decode + nms; warm-up runs excluded"""
    if repetitions < 1:
        raise ConfigurationError("repetitions must be >= 1")
    if not images:
        raise ConfigurationError("bench_latency needs at least one image")
    for _ in range(warmup):
        run_detector(net, images[0], conf_thresh, iou_thresh)
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        for image in images:
            run_detector(net, image, conf_thresh, iou_thresh)
        samples.append((time.perf_counter() - start) / len(images))
    return LatencyStats(float(np.mean(samples)), float(np.min(samples)), float(np.max(samples)), repetitions)


# ---------------------------------------------------------------- report

@dataclass
class ClassMetrics:
    name: str
    tp: int
    fp: int
    fn: int
    tn: int
    duplicates: int
    pre: float
    sen: float
    f1: float
    f2: float
    dice: float
    ap: Optional[float]


@dataclass
class MetricsReport:
    classes: List[ClassMetrics]
    map: float
    accuracy: float
    latency: Optional[LatencyStats] = None
    flags: List[str] = field(default_factory=list)
    title: str = ""

    def by_name(self, name: str) -> ClassMetrics:
        for row in self.classes:
            if row.name == name:
                return row
        raise KeyError(name)


def confusion_to_report(match: MatchResult, aps: Dict[int, Optional[float]],
                        latency: Optional[LatencyStats] = None,
                        class_names: Sequence[str] = CLASS_NAMES, title: str = "") -> MetricsReport:
    rows: List[ClassMetrics] = []
    flags: List[str] = []
    for class_id in range(match.num_classes):
        name = class_names[class_id] if class_id < len(class_names) else str(class_id)
        tp, fp, fn = match.tp[class_id], match.fp[class_id], match.fn[class_id]
        if tp + fp == 0:
            flags.append(f"{name}: precision undefined (no detections), reported as 0")
        if tp + fn == 0:
            flags.append(f"{name}: sensitivity undefined (no ground truth), reported as 0")
        if aps.get(class_id) is None:
            flags.append(f"{name}: AP undefined (no ground truth), excluded from mAP")
        pre, sen = precision(tp, fp), sensitivity(tp, fn)
        rows.append(ClassMetrics(
            name=name, tp=tp, fp=fp, fn=fn, tn=match.tn[class_id],
            duplicates=match.duplicates[class_id],
            pre=pre, sen=sen, f1=f1(pre, sen), f2=f2(pre, sen), dice=dice(tp, fp, fn),
            ap=aps.get(class_id),
        ))
    if all(ap is None for ap in aps.values()):
        flags.append("mAP undefined (no class has ground truth), reported as 0")
    return MetricsReport(rows, mean_ap(aps), accuracy(match), latency, flags, title)


def evaluate_frames(frames: Sequence[Frame], num_classes: int = 3, strict: bool = False,
                    latency: Optional[LatencyStats] = None, title: str = "") -> MetricsReport:
    match = match_frames(frames, num_classes, strict)
    aps = {class_id: average_precision(frames, class_id, strict) for class_id in range(num_classes)}
    return confusion_to_report(match, aps, latency, title=title)


# ---------------------------------------------------------------- published table

@dataclass(frozen=True)
class PublishedRow:
    pre: float
    sen: float
    f1: float
    f2: float
    dice: float


# (class, model) -> printed values; "97.58.00" read as 97.58
PUBLISHED_SCORES: Dict[Tuple[str, str], PublishedRow] = {
    ("cracks", "default"): PublishedRow(83.24, 82.81, 83.02, 82.89, 83.02),
    ("cracks", "improved"): PublishedRow(87.63, 84.02, 85.78, 84.71, 85.78),
    ("pothole", "default"): PublishedRow(97.58, 89.55, 93.36, 91.04, 88.82),
    ("pothole", "improved"): PublishedRow(98.26, 90.12, 94.04, 91.63, 91.04),
    ("yellowlane", "default"): PublishedRow(94.92, 88.96, 91.84, 90.09, 91.85),
    ("yellowlane", "improved"): PublishedRow(93.26, 89.45, 91.31, 90.10, 92.11),
}


@dataclass(frozen=True)
class Discrepancy:
    class_name: str
    model: str
    metric: str
    printed: float
    recomputed: float


def published_score_consistency(tolerance: float = 0.05) -> List[Discrepancy]:
    """Printed F1/F2/Dice entries that disagree with the formulas applied to
    the printed precision and sensitivity (Dice equals F1 algebraically)."""
    found: List[Discrepancy] = []
    for (class_name, model), row in PUBLISHED_SCORES.items():
        score_f1 = f1(row.pre, row.sen)
        recomputed = {"f1": score_f1, "f2": f2(row.pre, row.sen), "dice": score_f1}
        for metric, value in recomputed.items():
            printed = getattr(row, metric)
            if abs(printed - value) > tolerance:
                found.append(Discrepancy(class_name, model, metric, printed, value))
    return found
