"""Forest, sample and confidence-image types."""

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings

LEAF = -1
VALUE, SUM, DIFFERENCE, ABS_DIFFERENCE = 0, 1, 2, 3
TEST_KINDS = ('value', 'sum', 'difference', 'abs-difference')


@dataclass(frozen=True)
class ForestConfig:
    trees: int = 20
    max_depth: int = 20
    min_leaf: int = 50
    node_tests: int = 5000
    thresholds: int = 100
    node_samples: int = 1000
    patch_size: int = 27
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd")
        if min(self.trees, self.max_depth, self.min_leaf, self.node_tests, self.thresholds, self.node_samples) < 1:
            raise ValueError("forest parameters must be positive")

    @property
    def radius(self) -> int:
        return self.patch_size // 2

    @classmethod
    def from_settings(cls, **overrides) -> 'ForestConfig':
        conf = getattr(settings, 'VIEWFORGE_CONFIDENCE', {})
        values = dict(
            trees=conf.get('TREES', 20),
            max_depth=conf.get('MAX_DEPTH', 20),
            min_leaf=conf.get('MIN_LEAF', 50),
            node_tests=conf.get('NODE_TESTS', 5000),
            thresholds=conf.get('THRESHOLDS', 100),
            node_samples=conf.get('NODE_SAMPLES', 1000),
            patch_size=conf.get('PATCH_SIZE', 27),
            seed=conf.get('SEED', 0),
        )
        values.update(overrides)
        return cls(**values)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class PatchSamples:
    """Lab patches (N, P, P, 3) float32 with labels (1 positive, 0 negative) and angles."""
    patches: np.ndarray
    positive: np.ndarray
    angles: np.ndarray

    def __len__(self) -> int:
        return len(self.positive)

    def subset(self, index) -> 'PatchSamples':
        return PatchSamples(self.patches[index], self.positive[index], self.angles[index])


@dataclass
class Tree:
    """Flat node table; leaves carry class counts and, once restructured, per-bin counts."""
    kind: np.ndarray  # int8, LEAF for leaves
    offsets: np.ndarray  # (nodes, 4) int8: dx1, dy1, dx2, dy2
    channels: np.ndarray  # (nodes, 2) int8
    threshold: np.ndarray  # float64
    children: np.ndarray  # (nodes, 2) int32
    leaf: np.ndarray  # int32 leaf index, -1 for split nodes
    class_counts: np.ndarray  # (leaves, 2) int64: negative, positive
    bin_counts: Optional[np.ndarray] = None  # (leaves, bins, 2)
    oob: Optional[np.ndarray] = field(default=None, repr=False)  # training-time only

    @property
    def n_nodes(self) -> int:
        return len(self.kind)

    @property
    def n_leaves(self) -> int:
        return len(self.class_counts)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.kind[node] != LEAF:
                depths[self.children[node]] = depths[node] + 1
        return int(depths.max(initial=0))

    def counts(self) -> np.ndarray:
        """(leaves, bins, 2) counts; a single bin before restructuring."""
        if self.bin_counts is None:
            return self.class_counts[:, None, :]
        return self.bin_counts

    def confidence(self) -> np.ndarray:
        """Laplace-smoothed positive fraction per leaf and bin."""
        counts = self.counts()
        return (counts[..., 1] + 1.0) / (counts.sum(axis=-1) + 2.0)


@dataclass
class ConfidenceForest:
    trees: List[Tree]
    config: ForestConfig
    bins: int = 1
    gamma_max: float = 45.0

    @property
    def radius(self) -> int:
        return self.config.radius

    def bin_of(self, angles) -> np.ndarray:
        """Bin i covers [i, i+1) * gamma_max / bins; the last bin absorbs larger angles."""
        width = self.gamma_max / self.bins
        return np.minimum(np.floor(np.asarray(angles, dtype=float) / width), self.bins - 1).astype(np.int64)

    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.bins) + 0.5) * self.gamma_max / self.bins


@dataclass
class ConfidenceImage:
    """b-channel confidence sampled every `step` pixels."""
    values: np.ndarray  # (bins, grid_h, grid_w)
    step: int
    gamma_max: float
    image_id: str
    image_size: Tuple[int, int]  # (width, height)

    @property
    def bins(self) -> int:
        return int(self.values.shape[0])

    def bin_of(self, angles) -> np.ndarray:
        width = self.gamma_max / self.bins
        return np.clip(np.floor(np.asarray(angles, dtype=float) / width), 0, self.bins - 1).astype(np.int64)

    def grid_index(self, pixels: np.ndarray):
        """Nearest grid node (row, col) for (N, 2) pixel coordinates."""
        pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
        col = np.clip(np.rint(pixels[:, 0] / self.step), 0, self.values.shape[2] - 1).astype(np.int64)
        row = np.clip(np.rint(pixels[:, 1] / self.step), 0, self.values.shape[1] - 1).astype(np.int64)
        return row, col

    def lookup(self, pixels: np.ndarray, bins) -> np.ndarray:
        row, col = self.grid_index(pixels)
        return self.values[np.asarray(bins, dtype=np.int64), row, col]

    def lookup_angles(self, pixels: np.ndarray, angles) -> np.ndarray:
        return self.lookup(pixels, self.bin_of(angles))

    def max_over_bins(self, pixels: np.ndarray) -> np.ndarray:
        row, col = self.grid_index(pixels)
        return self.values[:, row, col].max(axis=0)


@dataclass(frozen=True)
class AuscResult:
    ausc: float
    optimal: float
    random: float
    relative: Optional[float]  # None when every pixel is correct or every pixel wrong
