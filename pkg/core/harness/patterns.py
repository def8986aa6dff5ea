"""Fixed flight patterns: nadir lawnmower grids and camera rings."""

import logging
from typing import List, Tuple

import numpy as np

from core.geometry.camera import look_at
from core.geometry.types import Camera, CameraIntrinsics, CameraPose
from core.planner.types import ROLE_GRID, ViewPlan

logger = logging.getLogger(__name__)

NADIR = np.array([
    [1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, -1.0],
])


def footprint(intrinsics: CameraIntrinsics, height: float) -> Tuple[float, float]:
    """Ground footprint (x, y) in meters of a nadir image taken `height` above the ground."""
    return intrinsics.width * height / intrinsics.focal_length, intrinsics.height * height / intrinsics.focal_length


def _axis_positions(lo: float, hi: float, spacing: float) -> np.ndarray:
    extent = max(hi - lo, 0.0)
    count = int(np.floor(extent / spacing + 1e-9)) + 1
    offset = 0.5 * (extent - (count - 1) * spacing)
    return lo + offset + spacing * np.arange(count)


def grid_plan(bounds: Tuple[float, float, float, float], overlap: float, height: float,
              intrinsics: CameraIntrinsics, ground: float = 0.0, prefix: str = 'grid') -> ViewPlan:
    """
    Nadir lawnmower grid over (xmin, ymin, xmax, ymax).

    Spacing is (1 - overlap) x footprint along each axis; rows run along x
    and alternate direction.
    """
    if not 0.0 < overlap < 1.0:
        raise ValueError(f"overlap must lie in (0, 1), got {overlap}")
    if height <= 0:
        raise ValueError(f"height must be positive, got {height}")
    xmin, ymin, xmax, ymax = bounds
    width_m, height_m = footprint(intrinsics, height)
    xs = _axis_positions(xmin, xmax, (1.0 - overlap) * width_m)
    ys = _axis_positions(ymin, ymax, (1.0 - overlap) * height_m)

    cameras: List[Camera] = []
    for row, y in enumerate(ys):
        for x in (xs if row % 2 == 0 else xs[::-1]):
            pose = CameraPose(NADIR, np.array([x, y, ground + height]))
            cameras.append(Camera(intrinsics, pose, f'{prefix}-{len(cameras):03d}'))

    centers = np.array([camera.center for camera in cameras])
    length = float(np.linalg.norm(np.diff(centers, axis=0), axis=1).sum()) if len(cameras) > 1 else 0.0
    logger.info(f"Grid of {len(xs)} x {len(ys)} poses at {height:.2f} m, {int(overlap * 100)}% overlap")
    return ViewPlan(cameras=cameras, roles=[ROLE_GRID] * len(cameras), total_path_m=length)


def ring_cameras(target: np.ndarray, radius: float, height: float, count: int, intrinsics: CameraIntrinsics,
                 prefix: str, phase: float = 0.0) -> List[Camera]:
    """`count` cameras evenly spaced on a horizontal circle, all looking at `target`."""
    target = np.asarray(target, dtype=float)
    cameras = []
    for index in range(count):
        angle = phase + 2 * np.pi * index / count
        center = target + np.array([radius * np.cos(angle), radius * np.sin(angle), 0.0])
        center[2] = height
        cameras.append(look_at(intrinsics, center, target, f'{prefix}-{index:02d}'))
    return cameras


def consecutive_triplets(cameras: List[Camera], closed: bool = False) -> List[Tuple[Camera, Camera, Camera]]:
    """Sliding windows of three neighbours along a camera sequence."""
    n = len(cameras)
    if n < 3:
        return []
    starts = range(n) if closed else range(n - 2)
    return [(cameras[i], cameras[(i + 1) % n], cameras[(i + 2) % n]) for i in starts]
