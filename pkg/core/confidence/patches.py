"""Lab conversion and balanced patch sampling from labeled images."""

import logging
from typing import Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from skimage.color import rgb2lab

from core.exceptions import NoSamplesError
from core.labelgen.types import NEGATIVE, POSITIVE, LabelImage
from .types import PatchSamples

logger = logging.getLogger(__name__)


def to_lab(rgb: np.ndarray) -> np.ndarray:
    """CIE Lab (D65) of an RGB image with values in [0, 1]."""
    return rgb2lab(np.clip(np.asarray(rgb, dtype=float), 0.0, 1.0)).astype(np.float32)


def extract_patches(lab: np.ndarray, rows: np.ndarray, cols: np.ndarray, patch_size: int) -> np.ndarray:
    """(N, P, P, 3) patches centered on pixels lying at least P//2 from the border."""
    radius = patch_size // 2
    windows = sliding_window_view(lab, (patch_size, patch_size), axis=(0, 1))
    return np.ascontiguousarray(windows[rows - radius, cols - radius].transpose(0, 2, 3, 1))


def extract_samples(images: Mapping[str, np.ndarray], labels: Mapping[str, LabelImage],
                    per_class_cap: int, seed: int = 0, patch_size: int = 27) -> PatchSamples:
    """
    Balanced positive/negative Lab patches around labeled pixels.

    Border pixels without a full patch are skipped. Both classes get
    min(cap, available positives, available negatives) samples.

    Raises:
        NoSamplesError: if either class has no usable pixel
    """
    radius = patch_size // 2
    records = {POSITIVE: [], NEGATIVE: []}
    image_ids = sorted(set(images) & set(labels))
    for index, image_id in enumerate(image_ids):
        label = labels[image_id]
        height, width = label.labels.shape
        inner = np.zeros_like(label.labeled)
        inner[radius:height - radius, radius:width - radius] = True
        for cls in (POSITIVE, NEGATIVE):
            rows, cols = np.nonzero((label.labels == cls) & inner)
            records[cls].append(np.stack([np.full(len(rows), index), rows, cols], axis=1))

    pools = {cls: np.concatenate(parts) if parts else np.zeros((0, 3), dtype=np.int64) for cls, parts in records.items()}
    for cls, name in ((POSITIVE, 'positive'), (NEGATIVE, 'negative')):
        if not len(pools[cls]):
            raise NoSamplesError(f"no {name} samples in the labeled images")

    n = min(per_class_cap, len(pools[POSITIVE]), len(pools[NEGATIVE]))
    rng = np.random.default_rng(seed)
    chosen = {cls: pools[cls][np.sort(rng.permutation(len(pools[cls]))[:n])] for cls in (POSITIVE, NEGATIVE)}

    patches, positive, angles = [], [], []
    for index, image_id in enumerate(image_ids):
        lab = None
        for cls in (POSITIVE, NEGATIVE):
            picked = chosen[cls][chosen[cls][:, 0] == index]
            if not len(picked):
                continue
            if lab is None:
                lab = to_lab(images[image_id])
            patches.append(extract_patches(lab, picked[:, 1], picked[:, 2], patch_size))
            positive.append(np.full(len(picked), cls == POSITIVE))
            angles.append(labels[image_id].angles[picked[:, 1], picked[:, 2]])

    samples = PatchSamples(
        patches=np.concatenate(patches).astype(np.float32),
        positive=np.concatenate(positive),
        angles=np.concatenate(angles).astype(float),
    )
    logger.info(f"Extracted {n} positive and {n} negative patches from {len(image_ids)} images")
    return samples
