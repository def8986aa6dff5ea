"""Where the planner reads predicted MVS confidence from."""

from typing import Mapping, Protocol, runtime_checkable

import numpy as np

from core.confidence.types import ConfidenceImage

PRIOR_CONFIDENCE = 0.5


@runtime_checkable
class ConfidenceLookup(Protocol):
    bins: int
    gamma_max: float
    prior: float

    def has_image(self, camera_id: str) -> bool:
        ...

    def lookup(self, camera_id: str, pixels: np.ndarray) -> np.ndarray:
        """(N, bins) confidence of the image at full-resolution pixels."""
        ...


def angle_bins(lookup: ConfidenceLookup, angles) -> np.ndarray:
    width = lookup.gamma_max / lookup.bins
    return np.clip(np.floor(np.asarray(angles, dtype=float) / width), 0, lookup.bins - 1).astype(np.int64)


class ConfidenceMaps:
    """Confidence images predicted by the forest for captured cameras."""

    def __init__(self, images: Mapping[str, ConfidenceImage], prior: float = PRIOR_CONFIDENCE):
        self.images = dict(images)
        self.prior = prior
        first = next(iter(self.images.values()), None)
        self.bins = first.bins if first is not None else 1
        self.gamma_max = first.gamma_max if first is not None else 45.0
        for image in self.images.values():
            if image.bins != self.bins or image.gamma_max != self.gamma_max:
                raise ValueError(f"confidence image {image.image_id} has a different bin layout")

    def has_image(self, camera_id: str) -> bool:
        return camera_id in self.images

    def lookup(self, camera_id: str, pixels: np.ndarray) -> np.ndarray:
        image = self.images[camera_id]
        row, col = image.grid_index(pixels)
        return image.values[:, row, col].T.astype(float)


class ConstantConfidence:
    """Every image, captured or planned, predicts the same confidence in every bin."""

    def __init__(self, value: float = 1.0, bins: int = 9, gamma_max: float = 45.0):
        self.value = float(value)
        self.bins = bins
        self.gamma_max = gamma_max
        self.prior = float(value)

    def has_image(self, camera_id: str) -> bool:
        return True

    def lookup(self, camera_id: str, pixels: np.ndarray) -> np.ndarray:
        return np.full((len(np.atleast_2d(pixels)), self.bins), self.value)
