"""Training orchestration and prediction with a confidence forest."""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np
from django.conf import settings

from core.labelgen.types import LabelImage
from .forest import PixelReader, forest_confidences, patch_reader, restructure_leaves, route, train_forest
from .patches import extract_samples, to_lab
from .types import ConfidenceForest, ConfidenceImage, ForestConfig, PatchSamples

logger = logging.getLogger(__name__)

MIN_BIN_MASS = 0.01


def _confidence_setting(name: str, default):
    return getattr(settings, 'VIEWFORGE_CONFIDENCE', {}).get(name, default)


def image_reader(image: np.ndarray, rows: np.ndarray, cols: np.ndarray, radius: int) -> PixelReader:
    """Reader over the edge-padded Lab image for patches centered at (rows, cols)."""
    padded = np.pad(to_lab(image), ((radius, radius), (radius, radius), (0, 0)), mode='edge')

    def read(idx, dy, dx, channel):
        return padded[rows[idx] + radius + dy, cols[idx] + radius + dx, channel]
    return read


def predict_grid(forest: ConfidenceForest, image: np.ndarray, step: int = 1, image_id: str = '') -> ConfidenceImage:
    """Evaluate the forest every `step` pixels; channels are per-bin confidences averaged over trees."""
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    height, width = image.shape[:2]
    grid_rows = np.arange(0, height, step)
    grid_cols = np.arange(0, width, step)
    rr, cc = np.meshgrid(grid_rows, grid_cols, indexing='ij')
    read = image_reader(image, rr.ravel(), cc.ravel(), forest.radius)
    values = forest_confidences(forest, read, rr.size)
    logger.debug(f"Predicted {rr.size} grid nodes (step {step}) for image {image_id!r}")
    return ConfidenceImage(
        values=values.T.reshape(forest.bins, len(grid_rows), len(grid_cols)),
        step=step,
        gamma_max=forest.gamma_max,
        image_id=image_id,
        image_size=(width, height),
    )


@dataclass(frozen=True)
class ConfidenceCurve:
    confidence: np.ndarray
    mass: np.ndarray
    valid: np.ndarray
    bin_centers: np.ndarray


def confidence_curve(forest: ConfidenceForest, image: np.ndarray, pixel: Tuple[int, int]) -> ConfidenceCurve:
    """Per-bin confidence at one pixel plus the training mass behind each bin.

    Bins holding less than 1% of the routed training mass are invalid.
    """
    col, row = int(pixel[0]), int(pixel[1])
    height, width = image.shape[:2]
    if not (0 <= col < width and 0 <= row < height):
        raise ValueError(f"pixel {pixel} outside image of size {(width, height)}")
    read = image_reader(image, np.array([row]), np.array([col]), forest.radius)
    confidence = np.zeros(forest.bins)
    mass = np.zeros(forest.bins)
    for tree in forest.trees:
        leaf = route(tree, read, 1)[0]
        confidence += tree.confidence()[leaf]
        mass += tree.counts()[leaf].sum(axis=-1)
    confidence /= len(forest.trees)
    total = mass.sum()
    mass = mass / total if total else mass
    return ConfidenceCurve(confidence, mass, mass >= MIN_BIN_MASS, forest.bin_centers())


def sample_confidences(forest: ConfidenceForest, samples: PatchSamples) -> np.ndarray:
    """Confidence of each sample at the bin of its own angle."""
    values = forest_confidences(forest, patch_reader(samples.patches, forest.radius), len(samples))
    return values[np.arange(len(samples)), forest.bin_of(samples.angles)]


def classify(forest: ConfidenceForest, samples: PatchSamples) -> np.ndarray:
    """Positive iff the mean confidence at the sample's bin is at least 0.5."""
    return sample_confidences(forest, samples) >= 0.5


def classification_accuracy(forest: ConfidenceForest, samples: PatchSamples) -> float:
    return float(np.mean(classify(forest, samples) == samples.positive))


def grid_step_disagreement(forest: ConfidenceForest, image: np.ndarray, step: int) -> float:
    """Fraction of (pixel, bin) decisions that differ between `step` and per-pixel prediction."""
    exact = predict_grid(forest, image, 1)
    coarse = predict_grid(forest, image, step)
    height, width = image.shape[:2]
    rr, cc = np.meshgrid(np.arange(height), np.arange(width), indexing='ij')
    row, col = coarse.grid_index(np.stack([cc.ravel(), rr.ravel()], axis=1))
    upsampled = coarse.values[:, row, col].reshape(coarse.bins, height, width)
    return float(np.mean((upsampled >= 0.5) != (exact.values >= 0.5)))


def train_from_labels(images: Mapping[str, np.ndarray], labels: Mapping[str, LabelImage],
                      config: Optional[ForestConfig] = None, bins: Optional[int] = None,
                      gamma_max: Optional[float] = None,
                      per_class_cap: Optional[int] = None) -> Tuple[ConfidenceForest, PatchSamples]:
    """Extract balanced samples, train, and restructure leaves into angle bins."""
    config = config or ForestConfig.from_settings()
    bins = bins or _confidence_setting('BINS', 9)
    gamma_max = gamma_max or _confidence_setting('GAMMA_MAX', 45.0)
    per_class_cap = per_class_cap or _confidence_setting('PER_CLASS_CAP', 5000)
    samples = extract_samples(images, labels, per_class_cap, seed=config.seed, patch_size=config.patch_size)
    forest = restructure_leaves(train_forest(samples, config), samples, bins, gamma_max)
    return forest, samples
