# uav/detectors.py
"""
Frame detectors used by Node 01: the trained network, and an oracle that
replays the renderer's ground truth for the frame.
"""

import logging
from typing import Callable, List, Optional, Sequence

import numpy as np

from core.detection import Detection, run_detector
from core.model_zoo import Network
from dataset.samples import Annotation, resize_image

logger = logging.getLogger(__name__)

TruthLookup = Callable[[int], Optional[Sequence[Annotation]]]


class FrameDetector:
    name = "detector"

    def detect(self, image: np.ndarray, frame_seq: int) -> List[Detection]:
        raise NotImplementedError


class NetworkDetector(FrameDetector):
    """forward -> decode -> nms, resizing frames to the network input"""
    name = "network"

    def __init__(self, net: Network, conf_thresh: float = 0.25, iou_thresh: float = 0.45):
        self.net = net
        self.conf_thresh = conf_thresh
        self.iou_thresh = iou_thresh

    def detect(self, image: np.ndarray, frame_seq: int) -> List[Detection]:
        size = self.net.config.input_size
        if image.shape[1:] != (size, size):
            image = resize_image(image, size)
        return run_detector(self.net, image, self.conf_thresh, self.iou_thresh)


class OracleDetector(FrameDetector):
    name = "oracle"

    def __init__(self, lookup: TruthLookup):
        self.lookup = lookup

    def detect(self, image: np.ndarray, frame_seq: int) -> List[Detection]:
        truths = self.lookup(frame_seq)
        if truths is None:
            logger.warning("no ground truth for frame %d", frame_seq)
            return []
        detections = [Detection(a.bbox, a.class_id, 1.0, order)
                      for order, a in enumerate(truths)]
        return sorted(detections, key=Detection.sort_key)
