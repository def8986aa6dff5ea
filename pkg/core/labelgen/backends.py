"""MVS backends: anything that turns a camera triplet into per-image depthmaps."""

import logging
from pathlib import Path
from typing import List, Protocol, Sequence, runtime_checkable

import numpy as np

from core.exceptions import BackendError
from core.geometry.camera import project_points
from core.geometry.io import read_points_ply
from core.geometry.types import INVALID_DEPTH, Camera, DepthMap

logger = logging.getLogger(__name__)


@runtime_checkable
class MVSBackend(Protocol):
    def reconstruct(self, cameras: Sequence[Camera]) -> List[DepthMap]:
        """One depthmap per camera, in the given order; raises BackendError on failure."""
        ...


def points_to_depthmap(camera: Camera, points: np.ndarray) -> DepthMap:
    """Project a point cloud into a camera keeping the nearest point per pixel."""
    width, height = camera.intrinsics.width, camera.intrinsics.height
    depth = np.full(height * width, INVALID_DEPTH)
    if len(points):
        pixels, z = project_points(camera, points)
        ok = z > 0
        cols = np.rint(np.where(ok, pixels[:, 0], -1)).astype(np.int64)
        rows = np.rint(np.where(ok, pixels[:, 1], -1)).astype(np.int64)
        ok &= (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
        np.minimum.at(depth, rows[ok] * width + cols[ok], z[ok])
    return DepthMap(depth.reshape(height, width), camera.id)


class RecordedBackend:
    """
    Replays reconstructions stored as one PLY point cloud per triplet.

    Files are named after the member camera ids joined by '_' in triplet
    order, e.g. `cam03_cam07_cam11.ply`.
    """

    def __init__(self, directory):
        self.directory = Path(directory)

    def path_for(self, cameras: Sequence[Camera]) -> Path:
        return self.directory / ('_'.join(camera.id for camera in cameras) + '.ply')

    def reconstruct(self, cameras: Sequence[Camera]) -> List[DepthMap]:
        path = self.path_for(cameras)
        if not path.exists():
            raise BackendError(f"no recorded reconstruction at {path}")
        points = read_points_ply(path)
        logger.debug(f"Loaded {len(points)} recorded points from {path}")
        return [points_to_depthmap(camera, points) for camera in cameras]
