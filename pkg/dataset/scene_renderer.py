# dataset/scene_renderer.py
"""
Synthetic road scenes seen from the drone's front camera.

Every pixel ray is intersected with the flat ground and coloured by what lies
there: grass, the gray road rectangle, the yellow lane strip, dark elliptical
potholes and thin dark jagged cracks. Ground truth comes from the rendered
pixel masks, so a box always encloses what is actually visible.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from core.block_format import dump_blocks, parse_blocks, parse_floats
from core.detection import CRACKS, POTHOLE, YELLOWLANE, BBox
from core.errors import ConfigurationError, DecodeError
from core.pose import CameraModel, DroneState, ground_points
from .samples import Annotation, Sample

logger = logging.getLogger(__name__)

GRASS = (0.25, 0.45, 0.20)
ROAD = (0.45, 0.45, 0.45)
LANE = (0.90, 0.80, 0.10)
POTHOLE_COLOR = (0.14, 0.12, 0.11)
CRACK_COLOR = (0.08, 0.08, 0.08)
SKY = (0.60, 0.75, 0.90)

CRACK_WIDTH = 0.06
POTHOLE_ASPECT = 0.7
CRACK_SEGMENTS = 5
DEFAULT_MIN_PIXELS = 6

KINDS = ("crack", "pothole")
KIND_CLASS = {"crack": CRACKS, "pothole": POTHOLE}

# label ids in the rendered label image
_BACKGROUND, _LANE = -2, -1


@dataclass(frozen=True)
class DefectSpec:
    kind: str
    x: float
    y: float
    size: float  # pothole semi-axis / crack length, meters

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown defect kind {self.kind!r}")
        if self.size <= 0:
            raise ConfigurationError("defect size must be positive")


@dataclass
class SceneSpec:
    lane: List[Tuple[float, float]]
    lane_width: float = 0.15
    defects: List[DefectSpec] = field(default_factory=list)
    road_extent: Tuple[float, float, float, float] = (-3.0, 3.0, -5.0, 60.0)  # xmin, xmax, ymin, ymax
    seed: int = 0
    noise: float = 0.0

    def __post_init__(self):
        if len(self.lane) < 2:
            raise ConfigurationError("lane polyline needs at least 2 points")
        xmin, xmax, ymin, ymax = self.road_extent
        if xmin >= xmax or ymin >= ymax:
            raise ConfigurationError(f"empty road extent {self.road_extent}")
        for defect in self.defects:
            if not (xmin <= defect.x <= xmax and ymin <= defect.y <= ymax):
                raise ConfigurationError(f"{defect.kind} at ({defect.x}, {defect.y}) is off the road")


# ---------------------------------------------------------------- geometry

def _distance_to_polyline(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each (x, y) in points[..., 2] to the polyline"""
    best = np.full(points.shape[:-1], np.inf)
    for start, end in zip(polyline[:-1], polyline[1:]):
        seg = end - start
        length2 = float(seg @ seg)
        rel = points - start
        t = np.clip((rel @ seg) / length2, 0.0, 1.0) if length2 > 0 else np.zeros(points.shape[:-1])
        nearest = start + t[..., None] * seg
        best = np.minimum(best, np.linalg.norm(points - nearest, axis=-1))
    return best


def _defect_rng(spec: SceneSpec, index: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, index])


def crack_polyline(spec: SceneSpec, index: int) -> np.ndarray:
    """Jagged polyline of total length `size` whose vertex mean is the defect position"""
    defect = spec.defects[index]
    rng = _defect_rng(spec, index)
    angle = rng.uniform(0.0, np.pi)
    step = defect.size / CRACK_SEGMENTS
    points = [np.zeros(2)]
    for _ in range(CRACK_SEGMENTS):
        angle += rng.normal(0.0, 0.4)
        points.append(points[-1] + step * np.array([np.cos(angle), np.sin(angle)]))
    poly = np.array(points)
    return poly - poly.mean(axis=0) + np.array([defect.x, defect.y])


def pothole_orientation(spec: SceneSpec, index: int) -> float:
    return float(_defect_rng(spec, index).uniform(0.0, np.pi))


def _defect_mask(spec: SceneSpec, index: int, ground: np.ndarray) -> np.ndarray:
    defect = spec.defects[index]
    if defect.kind == "pothole":
        angle = pothole_orientation(spec, index)
        dx = ground[..., 0] - defect.x
        dy = ground[..., 1] - defect.y
        u = (dx * np.cos(angle) + dy * np.sin(angle)) / defect.size
        v = (-dx * np.sin(angle) + dy * np.cos(angle)) / (defect.size * POTHOLE_ASPECT)
        return u * u + v * v <= 1.0
    return _distance_to_polyline(ground, crack_polyline(spec, index)) <= CRACK_WIDTH / 2


# ---------------------------------------------------------------- rendering

def _pixel_noise_rng(spec: SceneSpec, drone: DroneState) -> np.random.Generator:
    pose = np.array([drone.x, drone.y, drone.z, drone.heading], dtype=np.float64)
    return np.random.default_rng([spec.seed] + np.frombuffer(pose.tobytes(), dtype=np.uint32).tolist())


def render_labels(spec: SceneSpec, camera: CameraModel,
                  drone: DroneState) -> Tuple[np.ndarray, np.ndarray]:
    """(image [3, N, N], label map [N, N]): -2 background, -1 lane, i = defect i"""
    ground, valid = ground_points(camera, drone)
    n = camera.image_size
    image = np.empty((n, n, 3))
    image[...] = SKY
    labels = np.full((n, n), _BACKGROUND, dtype=np.int64)

    xmin, xmax, ymin, ymax = spec.road_extent
    gx, gy = ground[..., 0], ground[..., 1]
    image[valid] = GRASS
    road = valid & (gx >= xmin) & (gx <= xmax) & (gy >= ymin) & (gy <= ymax)
    image[road] = ROAD

    lane = road & (_distance_to_polyline(ground, np.asarray(spec.lane, dtype=np.float64))
                   <= spec.lane_width / 2)
    image[lane] = LANE
    labels[lane] = _LANE

    for index, defect in enumerate(spec.defects):
        mask = road & _defect_mask(spec, index, ground)
        image[mask] = POTHOLE_COLOR if defect.kind == "pothole" else CRACK_COLOR
        labels[mask] = index

    if spec.noise > 0:
        rng = _pixel_noise_rng(spec, drone)
        image = image + rng.normal(0.0, spec.noise, size=image.shape)
    return np.clip(image, 0.0, 1.0).transpose(2, 0, 1), labels


def _mask_box(mask: np.ndarray) -> BBox:
    n_rows, n_cols = mask.shape
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    x0, x1 = cols[0] / n_cols, (cols[-1] + 1) / n_cols
    y0, y1 = rows[0] / n_rows, (rows[-1] + 1) / n_rows
    return BBox((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)


def annotations_from_labels(spec: SceneSpec, labels: np.ndarray,
                            min_pixels: int = DEFAULT_MIN_PIXELS) -> List[Annotation]:
    annotations: List[Annotation] = []
    for index, defect in enumerate(spec.defects):
        mask = labels == index
        if int(mask.sum()) >= min_pixels:
            annotations.append(Annotation(KIND_CLASS[defect.kind], _mask_box(mask)))
    lane = labels == _LANE
    if int(lane.sum()) >= min_pixels:
        annotations.append(Annotation(YELLOWLANE, _mask_box(lane)))
    return annotations


def generate_scene(spec: SceneSpec, camera: CameraModel, drone: DroneState,
                   min_pixels: int = DEFAULT_MIN_PIXELS, sample_id: str = "") -> Sample:
    image, labels = render_labels(spec, camera, drone)
    return Sample(image, annotations_from_labels(spec, labels, min_pixels),
                  sample_id or f"scene{spec.seed}")


# ---------------------------------------------------------------- random scenes

def random_scene(seed: int, max_potholes: int = 3, max_cracks: int = 3, noise: float = 0.0) -> SceneSpec:
    """Straight lane along +y with a few randomly placed defects"""
    rng = np.random.default_rng([seed, 0xD0AD])
    defects = []
    for kind, count, sizes in (("pothole", rng.integers(0, max_potholes + 1), (0.12, 0.3)),
                               ("crack", rng.integers(0, max_cracks + 1), (0.4, 0.9))):
        for _ in range(int(count)):
            defects.append(DefectSpec(kind, float(rng.uniform(-2.0, 2.0)),
                                      float(rng.uniform(0.0, 50.0)), float(rng.uniform(*sizes))))
    lane_x = float(rng.uniform(-0.5, 0.5))
    return SceneSpec(lane=[(lane_x, -5.0), (lane_x, 60.0)], defects=defects, seed=seed, noise=noise)


def random_pose(spec: SceneSpec, seed: int) -> DroneState:
    """Flying pose that usually looks at one of the scene's defects"""
    rng = np.random.default_rng([seed, 0xF00D])
    z = float(rng.uniform(1.5, 2.5))
    heading = float(rng.uniform(-0.3, 0.3))
    if spec.defects and rng.uniform() < 0.7:
        target = spec.defects[int(rng.integers(0, len(spec.defects)))]
        ahead = float(rng.uniform(0.2, 1.2))
        x = target.x - ahead * np.sin(heading) + float(rng.uniform(-0.4, 0.4))
        y = target.y - ahead * np.cos(heading)
    else:
        x = float(rng.uniform(-1.2, 1.2))
        y = float(rng.uniform(0.0, 50.0))
    return DroneState(x=x, y=y, z=z, heading=heading, flying=True)


# ---------------------------------------------------------------- scene files

def scene_to_text(spec: SceneSpec) -> str:
    header = {
        "seed": spec.seed,
        "lane": [coord for point in spec.lane for coord in point],
        "lane_width": float(spec.lane_width),
        "road_extent": [float(v) for v in spec.road_extent],
        "noise": float(spec.noise),
    }
    blocks = [("", header)]
    for defect in spec.defects:
        blocks.append(("defect", {"kind": defect.kind, "x": float(defect.x),
                                  "y": float(defect.y), "size": float(defect.size)}))
    return dump_blocks(blocks)


def scene_from_text(text: str) -> SceneSpec:
    header: Dict[str, str] = {}
    defects: List[DefectSpec] = []
    try:
        for section, values in parse_blocks(text):
            if section == "":
                header = values
            elif section == "defect":
                defects.append(DefectSpec(values["kind"], float(values["x"]),
                                          float(values["y"]), float(values["size"])))
            else:
                raise DecodeError(f"unknown section [{section}] in scene file")
        lane_coords = parse_floats(header["lane"])
        if len(lane_coords) % 2:
            raise DecodeError("lane needs an even number of coordinates")
        extent = parse_floats(header.get("road_extent", "-3, 3, -5, 60"))
        if len(extent) != 4:
            raise DecodeError("road_extent needs 4 numbers")
        return SceneSpec(
            lane=list(zip(lane_coords[0::2], lane_coords[1::2])),
            lane_width=float(header.get("lane_width", 0.15)),
            defects=defects,
            road_extent=tuple(extent),
            seed=int(header.get("seed", 0)),
            noise=float(header.get("noise", 0.0)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"malformed scene file: {exc}") from exc


def save_scene(spec: SceneSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scene_to_text(spec), encoding="utf-8")
    return path


def load_scene(path: Union[str, Path]) -> SceneSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"scene file not found: {path}")
    return scene_from_text(path.read_text(encoding="utf-8"))
