# dataset/augmentation.py
"""
Colour jitter in hue/saturation/value space. Saturation and value are scaled
by factors drawn from [1/f, f]; hue is shifted by up to +-hue turns with
wrap-around. Geometry and annotations are untouched.
"""

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from core.config_models import AugmentConfig
from .samples import Sample


def _factor(rng: np.random.Generator, limit: float) -> float:
    return float(rng.uniform(1.0 / limit, limit))


def jitter_image(image: np.ndarray, saturation: float, exposure: float, hue_shift: float) -> np.ndarray:
    hsv = rgb_to_hsv(np.clip(image, 0.0, 1.0).transpose(1, 2, 0))
    hsv[..., 0] = np.mod(hsv[..., 0] + hue_shift, 1.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * exposure, 0.0, 1.0)
    return np.clip(hsv_to_rgb(hsv).transpose(2, 0, 1), 0.0, 1.0)


def augment(sample: Sample, cfg: AugmentConfig, rng: np.random.Generator) -> Sample:
    saturation = _factor(rng, cfg.saturation)
    exposure = _factor(rng, cfg.exposure)
    hue_shift = float(rng.uniform(-cfg.hue, cfg.hue))
    image = jitter_image(sample.image, saturation, exposure, hue_shift)
    return Sample(image, list(sample.annotations), sample.id)
