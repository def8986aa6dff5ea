"""Obstacle clearance from a voxel Euclidean distance transform."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from core.geometry.mesh import edge_lengths
from core.geometry.types import TriangleMesh

logger = logging.getLogger(__name__)

# Surface points lie within half a voxel of a sample, samples within half a
# voxel diagonal of their voxel center, queries likewise.
CLEARANCE_SLACK = np.sqrt(3.0) + 0.5


@dataclass
class DistanceField:
    origin: np.ndarray
    resolution: float
    distances: np.ndarray  # (nx, ny, nz) metres to the nearest occupied voxel center
    bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None  # box holding all geometry

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.distances.shape)

    @property
    def empty(self) -> bool:
        return self.bounds is None

    def voxel_of(self, points: np.ndarray):
        """Voxel indices (N, 3) and whether each point falls inside the grid."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        index = np.floor((points - self.origin) / self.resolution + 0.5).astype(np.int64)
        inside = np.all((index >= 0) & (index < np.array(self.shape)), axis=1)
        return np.clip(index, 0, np.array(self.shape) - 1), inside

    def distance_at(self, points: np.ndarray) -> np.ndarray:
        """Transform value of the voxel containing each point (inf outside the grid)."""
        index, inside = self.voxel_of(points)
        values = self.distances[index[:, 0], index[:, 1], index[:, 2]]
        return np.where(inside, values, np.inf)

    def clearance(self, points: np.ndarray) -> np.ndarray:
        """Lower bound on the distance from each point to the voxelized geometry."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.empty:
            return np.full(len(points), np.inf)
        lo, hi = self.bounds
        to_box = np.linalg.norm(np.maximum(np.maximum(lo - points, points - hi), 0.0), axis=1)
        index, inside = self.voxel_of(points)
        grid = self.distances[index[:, 0], index[:, 1], index[:, 2]] - CLEARANCE_SLACK * self.resolution
        return np.maximum(np.where(inside, grid, -np.inf), to_box)

    def is_safe(self, points: np.ndarray, safety_distance: float) -> np.ndarray:
        return self.clearance(points) >= safety_distance

    @classmethod
    def from_occupancy(cls, occupancy: np.ndarray, origin, resolution: float,
                       bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> 'DistanceField':
        occupancy = np.asarray(occupancy, dtype=bool)
        if not occupancy.any():
            distances = np.full(occupancy.shape, np.inf)
        else:
            distances = ndimage.distance_transform_edt(~occupancy, sampling=resolution)
        return cls(np.asarray(origin, dtype=float), float(resolution), distances, bounds)


def _barycentric_grid(n: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing='ij')
    keep = i + j <= n
    i, j = i[keep], j[keep]
    return np.stack([n - i - j, i, j], axis=1) / float(n)


def surface_samples(mesh: TriangleMesh, spacing: float) -> np.ndarray:
    """Points on every face no farther than `spacing` apart along edges."""
    if not mesh.n_faces:
        return np.zeros((0, 3))
    tri = mesh.triangles
    longest = edge_lengths(mesh).max(axis=1)
    steps = np.maximum(1, np.ceil(longest / spacing)).astype(np.int64)
    chunks = []
    for n in np.unique(steps):
        weights = _barycentric_grid(int(n))
        chunks.append(np.einsum('pk,fkd->fpd', weights, tri[steps == n]).reshape(-1, 3))
    return np.concatenate(chunks)


def build_distance_field(mesh: TriangleMesh, voxel_resolution: float, margin: float = 0.0) -> DistanceField:
    """Exact EDT over the voxels the mesh surface passes through.

    The grid spans the mesh bounds padded by `margin` plus one voxel.
    """
    if voxel_resolution <= 0:
        raise ValueError(f"voxel_resolution must be positive, got {voxel_resolution}")
    if not mesh.n_faces:
        logger.info("Distance field of an empty mesh: no obstacles")
        return DistanceField.from_occupancy(np.zeros((1, 1, 1), dtype=bool), np.zeros(3), voxel_resolution)

    used = mesh.vertices[np.unique(mesh.faces)]
    lo, hi = used.min(axis=0), used.max(axis=0)
    origin = lo - margin - voxel_resolution
    shape = np.ceil((hi + margin + voxel_resolution - origin) / voxel_resolution).astype(np.int64) + 1

    samples = surface_samples(mesh, 0.5 * voxel_resolution)
    index = np.clip(np.floor((samples - origin) / voxel_resolution + 0.5).astype(np.int64), 0, shape - 1)
    occupancy = np.zeros(tuple(shape), dtype=bool)
    occupancy[index[:, 0], index[:, 1], index[:, 2]] = True

    field = DistanceField.from_occupancy(occupancy, origin, voxel_resolution, bounds=(lo, hi))
    logger.info(f"Distance field {tuple(shape)} at {voxel_resolution} m: "
                f"{int(occupancy.sum())} occupied voxels")
    return field
