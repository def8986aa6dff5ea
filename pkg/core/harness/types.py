"""Scene, oracle, acquisition and metrics types of the simulation harness."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from core.geometry.types import Camera, DepthMap, TriangleMesh

SMOOTH = 0
ROUGH = 1
MATERIAL_NAMES = {SMOOTH: 'smooth', ROUGH: 'rough'}


def _harness_settings() -> dict:
    return getattr(settings, 'VIEWFORGE_HARNESS', {})


@dataclass
class SyntheticScene:
    """
    A generated scene: mesh with per-face materials, the region of interest
    and the seed that drives its texture.
    """
    preset: str
    seed: int
    mesh: TriangleMesh
    roi: np.ndarray
    ground_truth: TriangleMesh

    @property
    def roi_bounds(self) -> Tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the region of interest."""
        points = self.mesh.triangles[self.roi].reshape(-1, 3)
        lo, hi = points.min(axis=0), points.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def roi_center(self) -> np.ndarray:
        return self.mesh.centroids()[self.roi].mean(axis=0)

    @property
    def ground_level(self) -> float:
        return float(self.mesh.vertices[:, 2].min())


@dataclass(frozen=True)
class OracleModel:
    """Which pixels the synthetic MVS backend reconstructs, and how well."""
    gamma_cut: Dict[str, float] = field(default_factory=lambda: {'smooth': 60.0, 'rough': 15.0})
    noise_multiplier: float = 1.0
    outlier_rate: float = 0.0
    min_views: int = 3
    softness_deg: Optional[float] = None

    def __post_init__(self):
        missing = set(MATERIAL_NAMES.values()) - set(self.gamma_cut)
        if missing:
            raise ValueError(f"gamma_cut lacks materials {sorted(missing)}")
        if not self.gamma_cut['smooth'] > self.gamma_cut['rough']:
            raise ValueError("gamma_cut(smooth) must exceed gamma_cut(rough)")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError(f"outlier_rate must lie in [0, 1], got {self.outlier_rate}")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be non-negative")
        if self.softness_deg is not None and self.softness_deg <= 0:
            raise ValueError("softness_deg must be positive")

    def cut_for(self, materials: np.ndarray) -> np.ndarray:
        table = np.array([self.gamma_cut[MATERIAL_NAMES[m]] for m in sorted(MATERIAL_NAMES)])
        return table[np.clip(materials, 0, len(table) - 1)]

    @classmethod
    def from_settings(cls, **overrides) -> 'OracleModel':
        conf = _harness_settings()
        values = dict(
            gamma_cut=dict(conf.get('GAMMA_CUT', {'smooth': 60.0, 'rough': 15.0})),
            noise_multiplier=conf.get('NOISE_MULTIPLIER', 1.0),
            outlier_rate=conf.get('OUTLIER_RATE', 0.0),
            softness_deg=conf.get('SOFTNESS_DEG'),
        )
        values.update(overrides)
        return cls(**values)

    def as_dict(self) -> dict:
        return {
            'gamma_cut': dict(self.gamma_cut),
            'noise_multiplier': self.noise_multiplier,
            'outlier_rate': self.outlier_rate,
            'min_views': self.min_views,
            'softness_deg': self.softness_deg,
        }


@dataclass(frozen=True)
class HarnessConfig:
    acceptance_tolerance: float = 0.03
    eval_max_edge: float = 0.08
    grid_overlap: float = 0.8
    grid_height: float = 1.6
    init_height: float = 2.2
    init_radius: float = 1.8
    init_views: int = 6
    training_views: int = 12
    histogram_bins: int = 40
    planner: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def from_settings(cls, **overrides) -> 'HarnessConfig':
        conf = _harness_settings()
        values = dict(
            acceptance_tolerance=conf.get('ACCEPTANCE_TOLERANCE', 0.03),
            eval_max_edge=conf.get('EVAL_MAX_EDGE', 0.08),
            grid_overlap=conf.get('GRID_OVERLAP', 0.8),
            grid_height=conf.get('GRID_HEIGHT', 1.6),
            init_height=conf.get('INIT_HEIGHT', 2.2),
            init_radius=conf.get('INIT_RADIUS', 1.8),
            init_views=conf.get('INIT_VIEWS', 6),
            training_views=conf.get('TRAINING_VIEWS', 12),
            histogram_bins=conf.get('HISTOGRAM_BINS', 40),
            planner={key.lower(): value for key, value in conf.get('PLANNER', {}).items()},
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class TripletOutcome:
    """One oracle reconstruction of a captured triplet."""
    triplet_id: str
    source: str  # init, grid or plan
    cameras: Tuple[Camera, Camera, Camera]
    depthmaps: List[DepthMap]

    @property
    def camera_ids(self) -> Tuple[str, ...]:
        return tuple(camera.id for camera in self.cameras)

    @property
    def valid_pixels(self) -> int:
        return int(sum(depthmap.valid.sum() for depthmap in self.depthmaps))

    @property
    def success(self) -> bool:
        return self.valid_pixels > 0


@dataclass
class AcquisitionLog:
    """Append-only record of one acquisition run."""
    strategy: str
    preset: str
    seed: int
    model: OracleModel
    events: List[dict] = field(default_factory=list)
    cameras: List[Camera] = field(default_factory=list)
    outcomes: List[TripletOutcome] = field(default_factory=list)
    timings: List[float] = field(default_factory=list)

    def record(self, event: str, **payload) -> dict:
        entry = {'event': event, **payload}
        self.events.append(entry)
        return entry

    def success_rate(self, source: str = 'plan') -> Optional[float]:
        """Share of `source` triplets with any 3D output; None when there were none."""
        outcomes = [o for o in self.outcomes if o.source == source]
        if not outcomes:
            return None
        return sum(o.success for o in outcomes) / len(outcomes)

    def outcomes_from(self, sources: Sequence[str]) -> List[TripletOutcome]:
        return [o for o in self.outcomes if o.source in sources]


@dataclass
class ErrorHistogram:
    bin_centers: np.ndarray
    mass: np.ndarray
    sigma_bound: float
    surface_coverage: float  # percent of ground-truth faces
    errors: np.ndarray

    def as_dict(self) -> dict:
        return {
            'sigma_bound_m': self.sigma_bound,
            'surface_coverage': self.surface_coverage,
            'points': int(len(self.errors)),
        }


@dataclass
class MeshMetrics:
    """Percentages over the region triangles of one evaluation mesh."""
    name: str
    coverage: float
    f_res: float
    f_unc: float
    f: float


@dataclass
class Metrics:
    images: int
    per_mesh: List[MeshMetrics]
    success_rate: Optional[float] = None
    histogram: Optional[ErrorHistogram] = None

    def _stat(self, name: str) -> Dict[str, float]:
        values = np.array([getattr(m, name) for m in self.per_mesh], dtype=float)
        if not len(values):
            return {'mean': 0.0, 'std': 0.0}
        return {'mean': float(values.mean()), 'std': float(values.std())}

    @property
    def coverage(self) -> Dict[str, float]:
        return self._stat('coverage')

    @property
    def fulfillment(self) -> Dict[str, float]:
        return self._stat('f')

    def as_dict(self) -> dict:
        return {
            'images': self.images,
            'coverage': self.coverage,
            'f_res': self._stat('f_res'),
            'f_unc': self._stat('f_unc'),
            'f': self.fulfillment,
            'success_rate': self.success_rate,
            'per_mesh': [vars(m) for m in self.per_mesh],
            'error': self.histogram.as_dict() if self.histogram is not None else None,
        }
