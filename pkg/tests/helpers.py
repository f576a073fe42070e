# tests/helpers.py
from core.detection import BBox, Detection


def make_detection(class_id, cx, cy, w=0.1, h=0.1, confidence=0.9, order=0):
    return Detection(BBox(cx, cy, w, h), class_id, confidence, order)
