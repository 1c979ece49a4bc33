"""
Triplet Augmentation
Random flips, area-preserving crops (re-resized bilinearly) and right-angle rotations
applied to triplet members in the augmented training variant
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from PIL import Image

from backbone import ImageSample
from errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)


@dataclass
class AugmentationPolicy:
    """Nadir imagery is symmetric under flips and quarter turns"""
    horizontal_flip_prob: float = 0.5
    vertical_flip_prob: float = 0.5
    crop_scale_range: Tuple[float, float] = (0.8, 1.0)
    rotation_choices: List[int] = field(default_factory=lambda: [0, 90, 180, 270])

    def __post_init__(self):
        for name in ('horizontal_flip_prob', 'vertical_flip_prob'):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        self.crop_scale_range = tuple(self.crop_scale_range)
        if len(self.crop_scale_range) != 2:
            raise ConfigError(f"crop_scale_range must be (lo, hi), got {self.crop_scale_range}")
        lo, hi = self.crop_scale_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"crop_scale_range needs 0 < lo <= hi <= 1, got {self.crop_scale_range}")
        self.rotation_choices = list(self.rotation_choices)
        if not self.rotation_choices or any(r % 90 for r in self.rotation_choices):
            raise ConfigError(f"rotation_choices must be multiples of 90 degrees, got {self.rotation_choices}")


def _resize_bilinear(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    channels = [
        np.asarray(Image.fromarray(np.ascontiguousarray(plane, dtype=np.float32))
                   .resize((width, height), Image.Resampling.BILINEAR))
        for plane in pixels
    ]
    return np.clip(np.stack(channels), 0.0, 1.0).astype(np.float32)


def random_crop(pixels: np.ndarray, scale_range: Tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    """Crop a square-aspect window covering a random area fraction, resized back to full size"""
    _, h, w = pixels.shape
    area = rng.uniform(*scale_range)
    ch = min(h, max(1, int(round(h * math.sqrt(area)))))
    cw = min(w, max(1, int(round(w * math.sqrt(area)))))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    if ch == h and cw == w:
        return pixels
    window = pixels[:, top:top + ch, left:left + cw]
    return _resize_bilinear(window, h, w)


def augment(img: ImageSample, policy: AugmentationPolicy, rng: np.random.Generator) -> ImageSample:
    """
    Crop, then flip horizontally/vertically, then rotate. Every random draw
    happens on every call, so the stream position depends only on how many
    images were augmented.
    """
    pixels = img.pixels
    flip_h = rng.random() < policy.horizontal_flip_prob
    flip_v = rng.random() < policy.vertical_flip_prob
    angle = policy.rotation_choices[int(rng.integers(len(policy.rotation_choices)))]

    pixels = random_crop(pixels, policy.crop_scale_range, rng)
    if flip_h:
        pixels = pixels[:, :, ::-1]
    if flip_v:
        pixels = pixels[:, ::-1, :]
    quarter_turns = (angle // 90) % 4
    if quarter_turns:
        if quarter_turns % 2 and pixels.shape[1] != pixels.shape[2]:
            raise DimensionError(f"cannot rotate a non-square {pixels.shape[1]}×{pixels.shape[2]} image by {angle}")
        pixels = np.rot90(pixels, k=quarter_turns, axes=(1, 2))

    return ImageSample(np.ascontiguousarray(pixels), img.label)
