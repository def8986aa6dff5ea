"""Types of the view planner."""

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from core.geometry.types import Camera, CameraIntrinsics, TriangleMesh

ROLE_TRIPLET = 'triplet-member'
ROLE_REGISTRATION = 'registration'
ROLE_GRID = 'grid'


@dataclass(frozen=True)
class PlannerConfig:
    c: int = 3
    r_d: float = 10000.0
    a_d: float = 0.01
    alpha: float = 0.5
    n_t: int = 2000
    n_p: int = 5000
    n_v: int = 200
    phi: float = 120.0
    bins: int = 9
    gamma_max: float = 45.0
    k: int = 4
    o_min: float = 0.5
    safety_distance: float = 0.3
    voxel_resolution: float = 0.05
    pixel_noise_std: float = 1.0
    virtual_resolution: int = 48
    aim_distance: Optional[float] = None
    max_insertions: int = 8
    max_triplet_cameras: Optional[int] = 12
    render_downscale: int = 2
    surrogate_margin: float = 1.5
    surrogate_retries: int = 20
    min_opening_angle: Optional[float] = None
    seed: int = 0
    intrinsics: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics.centered(120.0, 160, 120))

    def __post_init__(self):
        positive = dict(
            c=self.c, r_d=self.r_d, a_d=self.a_d, n_t=self.n_t, n_p=self.n_p, n_v=self.n_v,
            phi=self.phi, bins=self.bins, gamma_max=self.gamma_max, k=self.k,
            safety_distance=self.safety_distance, voxel_resolution=self.voxel_resolution,
            pixel_noise_std=self.pixel_noise_std, virtual_resolution=self.virtual_resolution,
            render_downscale=self.render_downscale,
        )
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_v > self.n_t:
            raise ValueError(f"n_v ({self.n_v}) must not exceed n_t ({self.n_t})")
        if not 0.0 < self.o_min < 1.0:
            raise ValueError(f"o_min must lie in (0, 1), got {self.o_min}")
        # None enumerates every observer of a triangle
        if self.max_triplet_cameras is not None and self.max_triplet_cameras < 3:
            raise ValueError(f"max_triplet_cameras must be at least 3, got {self.max_triplet_cameras}")
        if self.aim_distance is not None and self.aim_distance <= 0:
            raise ValueError("aim_distance must be positive")

    @property
    def opening_angle(self) -> float:
        """Mean-shift bandwidth in degrees."""
        if self.min_opening_angle is not None:
            return float(self.min_opening_angle)
        return 0.5 * min(self.intrinsics.fov_degrees)

    @property
    def bin_angles(self) -> np.ndarray:
        """Representative (center) triangulation angle of each bin, degrees."""
        width = self.gamma_max / self.bins
        return (np.arange(self.bins) + 0.5) * width

    @classmethod
    def from_settings(cls, **overrides) -> 'PlannerConfig':
        conf = getattr(settings, 'VIEWFORGE_PLANNER', {})
        values = dict(
            c=conf.get('C', 3),
            r_d=conf.get('R_D', 10000.0),
            a_d=conf.get('A_D', 0.01),
            alpha=conf.get('ALPHA', 0.5),
            n_t=conf.get('N_T', 2000),
            n_p=conf.get('N_P', 5000),
            n_v=conf.get('N_V', 200),
            phi=conf.get('PHI', 120.0),
            bins=conf.get('BINS', 9),
            gamma_max=conf.get('GAMMA_MAX', 45.0),
            k=conf.get('K', 4),
            o_min=conf.get('O_MIN', 0.5),
            safety_distance=conf.get('SAFETY_DISTANCE', 0.3),
            voxel_resolution=conf.get('VOXEL_RESOLUTION', 0.05),
            pixel_noise_std=getattr(settings, 'VIEWFORGE_GEOMETRY', {}).get('PIXEL_NOISE_STD', 1.0),
            virtual_resolution=conf.get('VIRTUAL_RESOLUTION', 48),
            aim_distance=conf.get('AIM_DISTANCE'),
            max_insertions=conf.get('MAX_INSERTIONS', 8),
            max_triplet_cameras=conf.get('MAX_TRIPLET_CAMERAS', 12),
            render_downscale=conf.get('RENDER_DOWNSCALE', 2),
            surrogate_margin=conf.get('SURROGATE_MARGIN', 1.5),
            surrogate_retries=conf.get('SURROGATE_RETRIES', 20),
            min_opening_angle=conf.get('MIN_OPENING_ANGLE'),
            seed=conf.get('SEED', 0),
            intrinsics=CameraIntrinsics.from_settings(),
        )
        values.update(overrides)
        return cls(**values)

    def as_dict(self) -> dict:
        data = asdict(self)
        intrinsics = data.pop('intrinsics')
        data['camera_model'] = {
            'focal': intrinsics['focal_length'],
            'width': intrinsics['image_size'][0],
            'height': intrinsics['image_size'][1],
        }
        return data


@dataclass(frozen=True)
class FulfillmentRecord:
    """Fulfillment of one triangle and the triplet that achieves it.

    `f_conf_max` is the best confidence any observing image predicts for the
    triangle (the prior when none does); it normalises the target weight.
    """
    triangle: int
    f_cov: int
    f_res: float
    f_unc: float
    f_conf: float
    f: float
    triplet: Tuple[str, ...] = ()
    f_conf_max: float = 0.0
    prior: bool = False

    @property
    def weight(self) -> float:
        if self.f_conf_max <= 0:
            return 0.0
        return float(np.clip(1.0 - self.f / self.f_conf_max, 0.0, 1.0))


@dataclass
class SurrogateCamera:
    index: int
    position: np.ndarray
    links: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))  # target positions
    gains: Optional[np.ndarray] = None  # (links, bins) potential gain per angle bin
    orientation: Optional[np.ndarray] = None
    aim_distance: Optional[float] = None

    @property
    def link_gains(self) -> np.ndarray:
        if self.gains is None or not len(self.links):
            return np.zeros(len(self.links))
        return self.gains.max(axis=1)

    @property
    def total_gain(self) -> float:
        return float(self.link_gains.sum())

    @property
    def oriented(self) -> bool:
        return self.orientation is not None


@dataclass
class CameraTriplet:
    cameras: Tuple[Camera, Camera, Camera]
    center: np.ndarray
    angle_bin: int
    angle: float  # design triangulation angle, degrees
    aim_point: np.ndarray
    gain: float = 0.0
    surrogate: int = -1

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(camera.id for camera in self.cameras)

    @property
    def key(self) -> Tuple[int, int]:
        return self.surrogate, self.angle_bin


@dataclass
class ViewPlan:
    cameras: List[Camera]
    roles: List[str]
    total_path_m: float

    def __len__(self) -> int:
        return len(self.cameras)

    @property
    def registration_count(self) -> int:
        return sum(1 for role in self.roles if role == ROLE_REGISTRATION)


@dataclass
class SearchReport:
    """Book-keeping of one best-triplet search."""
    exhaustive: bool = False
    surrogates: int = 0
    visited: int = 0
    evaluated: int = 0
    pruned: int = 0
    bound_checks: int = 0
    bound_violations: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class PlanningSnapshot:
    """Everything the planner reads: captured cameras, mesh, region and confidences."""
    cameras: List[Camera]
    mesh: TriangleMesh
    roi: Sequence[int]
    confidences: object  # ConfidenceLookup


@dataclass
class PlanResult:
    triplets: List[CameraTriplet]
    reports: List[SearchReport] = field(default_factory=list)
    target_fulfillment: List[Tuple[float, float]] = field(default_factory=list)  # sum over T before/after
    timings: List[float] = field(default_factory=list)
    total_seconds: float = 0.0

    @property
    def cameras(self) -> List[Camera]:
        return [camera for triplet in self.triplets for camera in triplet.cameras]
