# dataset/samples.py
"""
Annotated samples: label lines, dataset loading with a skip report, saving,
deterministic train/validation split and bilinear resizing.

Label file: one object per line, `class cx cy w h`, normalized to the image.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from core.detection import CLASS_NAMES, BBox
from core.errors import ConfigurationError, DecodeError, ShapeError
from .image_io import IMAGE_SUFFIXES, read_image, write_image

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Annotation:
    class_id: int
    bbox: BBox

    @property
    def truth(self) -> Tuple[int, BBox]:
        return (self.class_id, self.bbox)


@dataclass
class Sample:
    image: np.ndarray
    annotations: List[Annotation] = field(default_factory=list)
    id: str = ""

    def __post_init__(self):
        if self.image.ndim != 3:
            raise ShapeError(f"sample image must be [C, H, W], got {self.image.shape}")

    @property
    def truths(self) -> List[Tuple[int, BBox]]:
        return [a.truth for a in self.annotations]

    @property
    def size(self) -> Tuple[int, int]:
        return self.image.shape[1], self.image.shape[2]


@dataclass
class SkipReport:
    entries: List[Tuple[str, str]] = field(default_factory=list)

    def add(self, path: Union[str, Path], reason: str) -> None:
        self.entries.append((str(path), reason))
        logger.warning("skipping %s: %s", path, reason)

    def __len__(self) -> int:
        return len(self.entries)

    def to_text(self) -> str:
        return "".join(f"{path}\t{reason}\n" for path, reason in self.entries)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def parse_label_line(line: str, num_classes: int = len(CLASS_NAMES)) -> Annotation:
    parts = line.split()
    if len(parts) != 5:
        raise DecodeError(f"label line needs 5 fields, got {len(parts)}: {line!r}")
    try:
        class_id = int(parts[0])
        cx, cy, w, h = (float(p) for p in parts[1:])
    except ValueError as exc:
        raise DecodeError(f"bad label line {line!r}") from exc
    if not 0 <= class_id < num_classes:
        raise DecodeError(f"class {class_id} out of range in {line!r}")
    box = BBox(cx, cy, w, h)
    if not box.is_valid():
        raise DecodeError(f"box outside the image in {line!r}")
    return Annotation(class_id, box)


def parse_labels(text: str, num_classes: int = len(CLASS_NAMES)) -> List[Annotation]:
    return [parse_label_line(line, num_classes) for line in text.splitlines() if line.strip()]


def format_label(annotation: Annotation) -> str:
    b = annotation.bbox
    return f"{annotation.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}"


def load_dataset(directory: Union[str, Path],
                 num_classes: int = len(CLASS_NAMES)) -> Tuple[List[Sample], SkipReport]:
    """One Sample per image with a sibling <stem>.txt label file"""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(f"dataset directory not found: {directory}")
    samples: List[Sample] = []
    report = SkipReport()
    for image_path in sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
        label_path = image_path.with_suffix(".txt")
        if not label_path.exists():
            report.add(image_path, "missing label file")
            continue
        try:
            annotations = parse_labels(label_path.read_text(encoding="utf-8"), num_classes)
        except DecodeError as exc:
            report.add(image_path, f"malformed label: {exc}")
            continue
        try:
            image = read_image(image_path)
        except DecodeError as exc:
            report.add(image_path, f"bad image: {exc}")
            continue
        samples.append(Sample(image, annotations, image_path.stem))
    logger.info("loaded %d samples from %s (%d skipped)", len(samples), directory, len(report))
    return samples, report


def save_sample(sample: Sample, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    image_path = write_image(out_dir / f"{sample.id}.ppm", sample.image)
    label_path = out_dir / f"{sample.id}.txt"
    label_path.write_text("".join(format_label(a) + "\n" for a in sample.annotations), encoding="utf-8")
    return image_path, label_path


def split(samples: Sequence[Sample], train_fraction: float,
          seed: int) -> Tuple[List[Sample], List[Sample]]:
    """Seeded shuffle; |train| = round(fraction * N) with halves rounded up"""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f"train_fraction {train_fraction} outside (0, 1)")
    if len(samples) < 2:
        raise ConfigurationError(f"need at least 2 samples to split, got {len(samples)}")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(np.floor(train_fraction * len(samples) + 0.5))
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train:]]
    return train, val


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    if size < 8:
        raise ConfigurationError(f"resize target {size} below 8")
    _, height, width = image.shape
    if (height, width) == (size, size):
        return image.copy()
    out = ndimage.zoom(image, (1.0, size / height, size / width), order=1,
                       mode="nearest", grid_mode=True)
    return np.clip(out, 0.0, 1.0)


def resize(sample: Sample, size: int) -> Sample:
    """Bilinear resize to size x size; normalized annotations are unchanged"""
    return Sample(resize_image(sample.image, size), list(sample.annotations), sample.id)
