# dataset/image_io.py
"""
Image files and byte payloads (Pillow). In memory an image is a float64
[3, H, W] array with values in [0, 1]; on disk and on the bus it is 8-bit RGB,
binary PPM (P6) by default.
"""

import io
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from core.errors import DecodeError, ShapeError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".ppm", ".png", ".jpg", ".jpeg")


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[3, H, W] floats -> [H, W, 3] bytes"""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected a [3, H, W] image, got {image.shape}")
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def from_pil(img: Image.Image) -> np.ndarray:
    return np.asarray(img.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0


def image_to_bytes(image: np.ndarray, fmt: str = "PPM") -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buffer, format=fmt)
    return buffer.getvalue()


def image_from_bytes(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return from_pil(img)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image payload: {exc}") from exc


def read_image(path: Union[str, Path]) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return from_pil(img)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot read image {path}: {exc}") from exc


def write_image(path: Union[str, Path], image: np.ndarray) -> Path:
    """Format follows the suffix (.ppm -> binary P6)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = "PPM" if path.suffix.lower() == ".ppm" else None
    Image.fromarray(to_uint8(image)).save(path, format=fmt)
    return path
