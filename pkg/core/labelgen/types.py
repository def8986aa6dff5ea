"""Types of the label generation pipeline."""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from django.conf import settings

from core.geometry.types import Camera, TripletSummary

UNLABELED = 0
NEGATIVE = 1
POSITIVE = 2


def _labelgen_settings() -> dict:
    return getattr(settings, 'VIEWFORGE_LABELGEN', {})


@dataclass(frozen=True)
class TripletSample:
    id: int
    camera_ids: Tuple[str, str, str]
    angle_bin: int
    angle: float  # representative triangulation angle, degrees


@dataclass(frozen=True)
class SupportConfig:
    alpha_min: float = 10.0
    s_min: float = 1.5
    positive_sigma: float = 1.0
    blocking_sigma: float = 3.0
    reprojection_tolerance: float = 1.5
    require_disjoint: bool = True

    def __post_init__(self):
        if self.alpha_min <= 0:
            raise ValueError("alpha_min must be positive")
        if self.s_min <= 1:
            raise ValueError("s_min must be greater than 1")

    @classmethod
    def from_settings(cls, **overrides) -> 'SupportConfig':
        conf = _labelgen_settings()
        values = dict(
            alpha_min=conf.get('ALPHA_MIN', 10.0),
            s_min=conf.get('S_MIN', 1.5),
            positive_sigma=conf.get('POSITIVE_SIGMA', 1.0),
            blocking_sigma=conf.get('BLOCKING_SIGMA', 3.0),
            reprojection_tolerance=conf.get('REPROJECTION_TOLERANCE', 1.5),
            require_disjoint=conf.get('REQUIRE_DISJOINT', True),
        )
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class LabelGenConfig:
    bins: int = 5
    alpha0: float = 4.0
    per_bin: int = 6
    min_overlap: float = 0.3
    augment_window: int = 9
    augment_min_valid: float = 0.25
    augment_spread_sigma: float = 3.0
    accuracy_sigma: float = 3.0
    pixel_noise_std: float = 1.0
    seed: int = 0
    support: SupportConfig = field(default_factory=SupportConfig)

    @classmethod
    def from_settings(cls, **overrides) -> 'LabelGenConfig':
        conf = _labelgen_settings()
        values = dict(
            bins=conf.get('BINS', 5),
            alpha0=conf.get('ALPHA0', 4.0),
            per_bin=conf.get('PER_BIN', 6),
            min_overlap=conf.get('MIN_OVERLAP', 0.3),
            augment_window=conf.get('AUGMENT_WINDOW', 9),
            augment_min_valid=conf.get('AUGMENT_MIN_VALID', 0.25),
            augment_spread_sigma=conf.get('AUGMENT_SPREAD_SIGMA', 3.0),
            accuracy_sigma=conf.get('ACCURACY_SIGMA', 3.0),
            pixel_noise_std=getattr(settings, 'VIEWFORGE_GEOMETRY', {}).get('PIXEL_NOISE_STD', 1.0),
            seed=conf.get('SEED', 0),
            support=SupportConfig.from_settings(),
        )
        values.update(overrides)
        return cls(**values)

    def with_support(self, **overrides) -> 'LabelGenConfig':
        return replace(self, support=replace(self.support, **overrides))


@dataclass
class MeasurementGrid:
    """Per-pixel measurements of one image of a reconstructed triplet."""
    camera: Camera
    depth: np.ndarray
    points: np.ndarray  # (H, W, 3), NaN where invalid
    u: np.ndarray  # (H, W), inf where invalid
    support: np.ndarray  # (H, W) int
    downscale: int = 1

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth) & (self.depth > 0) & np.isfinite(self.u)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.u)


@dataclass
class TripletReconstruction:
    """Backend output for one triplet with per-image measurement grids."""
    sample: TripletSample
    cameras: List[Camera]
    summary: TripletSummary
    grids: List[MeasurementGrid]

    @property
    def camera_ids(self) -> Tuple[str, ...]:
        return tuple(camera.id for camera in self.cameras)

    def shares_cameras(self, other: 'TripletReconstruction') -> bool:
        return bool(set(self.camera_ids) & set(other.camera_ids))


@dataclass
class VoteTally:
    positive: np.ndarray
    negative: np.ndarray

    @classmethod
    def zeros(cls, shape) -> 'VoteTally':
        return cls(np.zeros(shape), np.zeros(shape))

    @property
    def voted(self) -> np.ndarray:
        return (self.positive > 0) | (self.negative > 0)


@dataclass
class LabelImage:
    """Per-pixel labels, producing-triplet angle (NaN if unlabeled) and triplet id (-1)."""
    camera_id: str
    labels: np.ndarray
    angles: np.ndarray
    triplet_ids: np.ndarray

    @classmethod
    def empty(cls, camera_id: str, shape) -> 'LabelImage':
        return cls(
            camera_id,
            np.full(shape, UNLABELED, dtype=np.uint8),
            np.full(shape, np.nan),
            np.full(shape, -1, dtype=np.int64),
        )

    @property
    def labeled(self) -> np.ndarray:
        return self.labels != UNLABELED

    @property
    def density(self) -> float:
        return float(self.labeled.mean()) if self.labels.size else 0.0


@dataclass
class LabelReport:
    n_triplets: int = 0
    n_reconstructed: int = 0
    skipped: List[int] = field(default_factory=list)
    density: float = 0.0
    positive_fraction: float = 0.0
    accuracy: Optional[float] = None
    per_image: Dict[str, dict] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            'n_triplets': self.n_triplets,
            'n_reconstructed': self.n_reconstructed,
            'skipped': list(self.skipped),
            'density': self.density,
            'positive_fraction': self.positive_fraction,
            'accuracy': self.accuracy,
            'per_image': self.per_image,
        }


@dataclass
class LabelSet:
    images: Dict[str, LabelImage]
    samples: List[TripletSample]
    report: LabelReport
