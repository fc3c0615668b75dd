"""Synthetic unbalanced segmentation data: a small ellipse nested inside a larger one.

Class 0 is background, class 1 the large structure and class 2 the small
structure, which sits strictly inside the large one and differs from it by a
small intensity contrast.
"""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from data.dataset import Dataset, Sample
from utils.errors import ConfigError, GenerationError
from utils.logger import get_logger

logger = get_logger(__name__)

NUM_CLASSES = 3
FRACTION_TOLERANCE = 0.5


@dataclass(frozen=True)
class SynthConfig:
    """Geometry, intensity and size of a synthetic dataset."""
    height: int = 64
    width: int = 64
    count: int = 310
    small_fraction: float = 0.02
    large_fraction: float = 0.15
    noise_std: float = 0.08
    background_intensity: float = 0.2
    large_intensity: float = 0.55
    contrast: float = 0.15
    seed: Optional[int] = None
    max_retries: int = 100

    def validate(self):
        """Raise ConfigError naming the first invalid field."""
        if self.seed is None:
            raise ConfigError("seed is required for data generation", key='seed')
        for key in ('height', 'width', 'count', 'max_retries'):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}", key=key)
        for key in ('small_fraction', 'large_fraction'):
            value = getattr(self, key)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{key} must be in (0, 1), got {value}", key=key)
        if self.small_fraction >= self.large_fraction:
            raise ConfigError("small_fraction must be smaller than large_fraction", key='small_fraction')
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}", key='noise_std')

    @property
    def class_means(self) -> np.ndarray:
        return np.array([self.background_intensity, self.large_intensity,
                         self.large_intensity + self.contrast])

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def ellipse_mask(height: int, width: int, center: Tuple[float, float],
                 axes: Tuple[float, float], angle: float) -> np.ndarray:
    """
    Boolean raster of a rotated ellipse, sampled at pixel centres.

    Args:
        height, width: Raster size
        center: (y, x) centre
        axes: (a, b) semi-axes along the rotated x and y directions
        angle: Rotation in radians

    Returns:
        H×W boolean mask
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    cos, sin = math.cos(angle), math.sin(angle)
    u = dx * cos + dy * sin
    v = -dx * sin + dy * cos
    return (u / axes[0]) ** 2 + (v / axes[1]) ** 2 <= 1.0


def _semi_axes(area: float, rng: np.random.Generator) -> Tuple[float, float]:
    aspect = rng.uniform(0.6, 1.0)
    a = math.sqrt(area / (math.pi * aspect))
    return a, a * aspect


def _draw_mask(config: SynthConfig, rng: np.random.Generator) -> Optional[np.ndarray]:
    """One attempt at a nested-ellipse mask; None if the draw violates a constraint."""
    h, w = config.height, config.width
    pixels = h * w

    a_large, b_large = _semi_axes(config.large_fraction * pixels, rng)
    margin_y, margin_x = a_large + 1.0, a_large + 1.0
    if 2 * margin_y > h or 2 * margin_x > w:
        return None
    center_large = (rng.uniform(margin_y, h - margin_y), rng.uniform(margin_x, w - margin_x))
    angle_large = rng.uniform(0.0, math.pi)

    a_small, b_small = _semi_axes(config.small_fraction * pixels, rng)
    room = b_large - a_small - 1.0
    if room < 0:
        return None
    radius = rng.uniform(0.0, room)
    direction = rng.uniform(0.0, 2.0 * math.pi)
    center_small = (center_large[0] + radius * math.sin(direction),
                    center_large[1] + radius * math.cos(direction))
    angle_small = rng.uniform(0.0, math.pi)

    large = ellipse_mask(h, w, center_large, (a_large, b_large), angle_large)
    small = ellipse_mask(h, w, center_small, (a_small, b_small), angle_small)

    n_small = int(small.sum())
    if n_small == 0 or np.any(small & ~large):
        return None
    n_large_only = int((large & ~small).sum())
    n_background = pixels - int(large.sum())
    if not n_background > n_large_only > n_small:
        return None

    mask = np.zeros((h, w), dtype=np.int64)
    mask[large] = 1
    mask[small] = 2
    return mask


def generate(config: SynthConfig) -> Dataset:
    """
    Generate a seed-deterministic synthetic dataset.

    Args:
        config: Validated generation settings

    Returns:
        Dataset of `count` samples with ids synth_0000, synth_0001, ...
    """
    config.validate()
    if config.small_fraction * config.height * config.width < 1.0:
        raise GenerationError(
            f"small_fraction={config.small_fraction} is below one pixel at {config.height}×{config.width}"
        )

    rng = np.random.default_rng(config.seed)
    means = config.class_means
    samples = []
    for index in range(config.count):
        mask = None
        for _ in range(config.max_retries):
            mask = _draw_mask(config, rng)
            if mask is not None:
                break
        if mask is None:
            raise GenerationError(
                f"sample {index}: no feasible geometry for small_fraction={config.small_fraction}, "
                f"large_fraction={config.large_fraction} at {config.height}×{config.width} "
                f"after {config.max_retries} retries"
            )
        noise = rng.normal(0.0, config.noise_std, size=mask.shape) if config.noise_std > 0 else 0.0
        image = np.clip(means[mask] + noise, 0.0, 1.0)
        samples.append(Sample(image, mask, f"synth_{index:04d}"))

    dataset = Dataset(samples, NUM_CLASSES)
    achieved = dataset.small_class_fraction()
    if abs(achieved - config.small_fraction) > FRACTION_TOLERANCE * config.small_fraction:
        raise GenerationError(
            f"achieved small-class fraction {achieved:.4f} is outside ±50% of the target {config.small_fraction}"
        )
    logger.info(f"Generated {len(dataset)} samples ({config.height}×{config.width}), "
                f"small-class fraction {achieved:.4f}")
    return dataset
