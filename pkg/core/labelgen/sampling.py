"""Triplet sampling over logarithmic triangulation-angle bins."""

import itertools
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.geometry.camera import triangulation_angles
from core.geometry.render import image_overlap, render_depth, visibility_mask
from core.geometry.types import Camera, RenderResult, TriangleMesh
from .types import TripletSample

logger = logging.getLogger(__name__)


def angle_bin_edges(bins: int, alpha0: float) -> np.ndarray:
    """Edges alpha0 * 2^i for i = 0..bins; bin i is [edge_i, edge_i+1)."""
    if bins < 1 or alpha0 <= 0:
        raise ValueError("bins must be >= 1 and alpha0 positive")
    return alpha0 * 2.0 ** np.arange(bins + 1)


def angle_bin_of(angle: float, edges: np.ndarray) -> Optional[int]:
    if not edges[0] <= angle < edges[-1]:
        return None
    return int(np.searchsorted(edges, angle, side='right') - 1)


def representative_angle(cameras: Sequence[Camera], points: np.ndarray) -> float:
    """Median pairwise triangulation angle over points seen by all three cameras."""
    angles = [
        triangulation_angles(a.center, b.center, points)
        for a, b in itertools.combinations(cameras, 2)
    ]
    return float(np.median(np.concatenate(angles)))


def sample_triplets(cameras: Sequence[Camera], mesh: TriangleMesh, bins: int, per_bin: int,
                    min_overlap: float, alpha0: float, seed: int = 0,
                    renders: Optional[Dict[str, RenderResult]] = None) -> List[TripletSample]:
    """
    Randomly sample up to `per_bin` overlapping camera triplets per angle bin.

    Returns:
        Samples ordered by bin, ids assigned in output order
    """
    edges = angle_bin_edges(bins, alpha0)
    cameras = list(cameras)
    if len(cameras) < 3 or not mesh.n_faces:
        logger.info("Fewer than three cameras or an empty mesh, no triplets sampled")
        return []

    renders = dict(renders or {})
    for camera in cameras:
        if camera.id not in renders:
            renders[camera.id] = render_depth(camera, mesh)

    all_faces = np.arange(mesh.n_faces)
    visible = np.stack([visibility_mask(renders[c.id], mesh, all_faces) for c in cameras])
    centroids = mesh.centroids()

    n = len(cameras)
    overlaps = np.eye(n)
    for i, j in itertools.permutations(range(n), 2):
        overlaps[i, j] = image_overlap(cameras[i], cameras[j], mesh, renders=renders)
    pair_ok = np.minimum(overlaps, overlaps.T) >= min_overlap

    candidates: Dict[int, list] = {b: [] for b in range(bins)}
    for i, j, k in itertools.combinations(range(n), 3):
        if not (pair_ok[i, j] and pair_ok[j, k] and pair_ok[i, k]):
            continue
        common = visible[i] & visible[j] & visible[k]
        if not common.any():
            continue
        triple = [cameras[i], cameras[j], cameras[k]]
        angle = representative_angle(triple, centroids[common])
        angle_bin = angle_bin_of(angle, edges)
        if angle_bin is not None:
            candidates[angle_bin].append(((i, j, k), angle))

    rng = np.random.default_rng(seed)
    samples: List[TripletSample] = []
    for angle_bin in range(bins):
        pool = candidates[angle_bin]
        order = rng.permutation(len(pool))[:per_bin]
        if len(order) < per_bin:
            logger.warning(
                f"Angle bin {angle_bin} [{edges[angle_bin]:.1f}, {edges[angle_bin + 1]:.1f}) deg: "
                f"only {len(order)} of {per_bin} triplets available"
            )
        for idx in order:
            (i, j, k), angle = pool[idx]
            samples.append(TripletSample(
                id=len(samples),
                camera_ids=(cameras[i].id, cameras[j].id, cameras[k].id),
                angle_bin=angle_bin,
                angle=angle,
            ))

    logger.info(f"Sampled {len(samples)} triplets over {bins} angle bins")
    return samples
