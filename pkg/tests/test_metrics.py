# tests/test_metrics.py
import dataclasses
import json
import math

import pytest

from core.detection import BBox
from core.metrics import (
    accuracy,
    average_precision,
    dice,
    evaluate_frames,
    f1,
    f2,
    match_detections,
    mean_ap,
    precision,
    published_score_consistency,
    sensitivity,
)
from core.report_exporter import MetricsReportExporter, comparison_text, discrepancy_text
from tests.helpers import make_detection

STRIPS = [BBox((i + 0.5) / 3, 0.5, 0.3, 0.5) for i in range(3)]


def test_dice_equals_f1_on_random_counts(rng):
    for tp, fp, fn in rng.integers(0, 60, size=(10_000, 3)):
        pre, sen = precision(tp, fp), sensitivity(tp, fn)
        assert abs(dice(tp, fp, fn) - f1(pre, sen)) < 1e-9


def test_scores_in_percent():
    assert precision(3, 1) == pytest.approx(75.0)
    assert sensitivity(3, 3) == pytest.approx(50.0)
    assert f1(75.0, 50.0) == pytest.approx(60.0)
    assert f2(75.0, 50.0) == pytest.approx(5 * 75 * 50 / (4 * 75 + 50))
    assert precision(0, 0) == 0.0
    assert f2(0.0, 0.0) == 0.0


def test_published_table_inconsistencies():
    found = published_score_consistency()
    assert {(d.class_name, d.model, d.metric) for d in found} == {
        ("pothole", "default", "dice"),
        ("pothole", "improved", "dice"),
        ("yellowlane", "improved", "f2"),
        ("yellowlane", "improved", "dice"),
    }
    text = discrepancy_text(found)
    assert "pothole" in text and "recomputed" in text


def test_matching_by_center_containment():
    truths = [(1, BBox(0.5, 0.5, 0.2, 0.2))]
    hit = make_detection(1, 0.55, 0.45, confidence=0.9, order=0)
    duplicate = make_detection(1, 0.5, 0.5, confidence=0.8, order=1)
    wrong_class = make_detection(0, 0.5, 0.5, confidence=0.7, order=2)

    result = match_detections([duplicate, hit, wrong_class], truths)
    assert result.tp == [0, 1, 0]
    assert result.duplicates == [0, 1, 0]
    assert result.fp == [1, 0, 0]
    assert result.fn == [0, 0, 0]
    assert result.tn == [0, 0, 1]

    strict = match_detections([duplicate, hit], truths, strict=True)
    assert strict.fp == [0, 1, 0]


def test_miss_counts_false_negative():
    result = match_detections([make_detection(2, 0.9, 0.9)], [(2, BBox(0.2, 0.2, 0.1, 0.1))])
    assert result.tp[2] == 0 and result.fp[2] == 1 and result.fn[2] == 1
    assert accuracy(result) == 0.0


def brute_force_ap(frames, class_id):
    n_truths = sum(1 for _, truths in frames for c, _ in truths if c == class_id)
    ranked = sorted(((d, i) for i, (dets, _) in enumerate(frames) for d in dets if d.class_id == class_id),
                    key=lambda item: -item[0].confidence)
    claimed = [set() for _ in frames]
    tp = fp = 0
    outcomes = []
    for det, frame_index in ranked:
        truths = frames[frame_index][1]
        inside = [k for k, (c, box) in enumerate(truths)
                  if c == class_id and box.contains(det.bbox.cx, det.bbox.cy)]
        free = [k for k in inside if k not in claimed[frame_index]]
        if free:
            claimed[frame_index].add(free[0])
            tp += 1
            outcomes.append((True, tp / (tp + fp)))
        elif inside:
            if tp + fp:
                outcomes.append((False, tp / (tp + fp)))
        else:
            fp += 1
            outcomes.append((False, tp / (tp + fp)))
    ap = 0.0
    for position, (is_tp, _) in enumerate(outcomes):
        if is_tp:
            ap += max(p for _, p in outcomes[position:]) / n_truths
    return 100.0 * ap


def random_frames(rng, count):
    frames = []
    for _ in range(count):
        truths = [(0, STRIPS[k]) for k in sorted(rng.choice(3, size=int(rng.integers(1, 4)), replace=False))]
        dets = []
        for order in range(int(rng.integers(0, 5))):
            if rng.uniform() < 0.7:
                box = STRIPS[int(rng.integers(0, 3))]
                cx, cy = box.cx + rng.uniform(-0.1, 0.1), box.cy + rng.uniform(-0.2, 0.2)
            else:
                cx, cy = rng.uniform(0.05, 0.95), 0.9
            dets.append(make_detection(0, float(cx), float(cy), confidence=float(rng.uniform()), order=order))
        frames.append((dets, truths))
    return frames


def test_average_precision_matches_brute_force(rng):
    for _ in range(200):
        frames = random_frames(rng, int(rng.integers(1, 6)))
        assert average_precision(frames, 0) == pytest.approx(brute_force_ap(frames, 0), abs=1e-9)


def rescore(frames, transform):
    return [([dataclasses.replace(d, confidence=transform(d.confidence)) for d in dets], truths)
            for dets, truths in frames]


@pytest.mark.parametrize("transform", [lambda c: c ** 3, math.log1p])
def test_average_precision_ignores_monotone_rescoring(rng, transform):
    for _ in range(200):
        frames = random_frames(rng, int(rng.integers(1, 6)))
        assert average_precision(rescore(frames, transform), 0) == pytest.approx(average_precision(frames, 0))


def test_average_precision_special_cases():
    truths = [(0, BBox(0.5, 0.5, 0.2, 0.2))]
    assert average_precision([([], truths)], 1) is None
    assert average_precision([([], truths)], 0) == 0.0
    assert average_precision([([make_detection(0, 0.5, 0.5)], truths)], 0) == pytest.approx(100.0)
    assert mean_ap({0: 50.0, 1: None, 2: 100.0}) == pytest.approx(75.0)
    assert mean_ap({0: None}) == 0.0


def test_evaluate_frames_report_and_flags():
    frames = [([make_detection(0, 0.5, 0.5), make_detection(1, 0.2, 0.2)],
               [(0, BBox(0.5, 0.5, 0.2, 0.2))])]
    report = evaluate_frames(frames, title="unit")
    cracks = report.by_name("cracks")
    assert (cracks.tp, cracks.fp, cracks.fn) == (1, 0, 0)
    assert cracks.dice == pytest.approx(cracks.f1)
    assert report.by_name("yellowlane").ap is None
    assert any("yellowlane" in flag for flag in report.flags)
    assert report.accuracy == pytest.approx(50.0)
    assert report.map == pytest.approx(100.0)
    with pytest.raises(KeyError):
        report.by_name("bridge")


def test_exporter_formats():
    report = evaluate_frames([([make_detection(1, 0.5, 0.5)], [(1, BBox(0.5, 0.5, 0.2, 0.2))])])
    exporter = MetricsReportExporter()
    data = json.loads(exporter.export(report, "json")["data"])
    assert data["classes"][1]["class"] == "pothole"
    assert data["classes"][1]["tp"] == 1
    assert data["classes"][0]["ap"] is None
    csv_text = exporter.export(report, "csv")["data"]
    assert csv_text.splitlines()[0].startswith("class,tp,fp,fn,tn,duplicates,pre,sen")
    assert "pothole tp 1" in exporter.export(report, "lines")["data"]
    assert exporter.export(report, "html")["mime_type"] == "text/html"
    with pytest.raises(ValueError):
        exporter.export(report, "xlsx")
    table = comparison_text({"default": report, "improved": report})
    assert "Dice-coefficient" in table and "improved" in table


def test_exporter_writes_files(tmp_path):
    report = evaluate_frames([([], [(0, BBox(0.5, 0.5, 0.2, 0.2))])])
    paths = MetricsReportExporter().write(report, tmp_path, "report", ("text", "csv"))
    assert [p.name for p in paths] == ["report.txt", "report.csv"]
    assert "accuracy" in paths[0].read_text()
