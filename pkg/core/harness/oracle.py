"""Synthetic MVS backend with a material- and angle-dependent success model."""

import logging
import zlib
from typing import List, Sequence

import numpy as np
from django.conf import settings

from core.geometry.camera import point_uncertainty_batch, project_points, unproject_pixels
from core.geometry.render import NEAR_PLANE, render_depth
from core.geometry.types import INVALID_DEPTH, Camera, DepthMap, RenderResult
from core.planner.fulfillment import min_pairwise_angles
from .types import OracleModel, SyntheticScene

logger = logging.getLogger(__name__)


def triplet_seed(seed: int, cameras: Sequence[Camera]) -> List[int]:
    """Seed sequence of one oracle call; independent of call order."""
    return [int(seed), zlib.crc32('_'.join(camera.id for camera in cameras).encode('utf-8'))]


def sees(render: RenderResult, points: np.ndarray, depth_agreement: float) -> np.ndarray:
    """Which points lie in the rendered camera's image and are not occluded."""
    camera = render.camera
    pixels, depth = project_points(camera, points)
    in_front = depth > NEAR_PLANE
    cols = np.rint(np.where(in_front, pixels[:, 0], -1)).astype(np.int64)
    rows = np.rint(np.where(in_front, pixels[:, 1], -1)).astype(np.int64)
    inside = in_front & (cols >= 0) & (cols < camera.intrinsics.width) & (rows >= 0) & (rows < camera.intrinsics.height)
    seen = np.zeros(len(points), dtype=bool)
    idx = np.flatnonzero(inside)
    seen[idx] = depth[idx] <= render.depth.depths[rows[idx], cols[idx]] * (1.0 + depth_agreement)
    return seen


def oracle_mvs(cameras: Sequence[Camera], scene: SyntheticScene, model: OracleModel, seed: int = 0) -> List[DepthMap]:
    """
    One depthmap per camera of a triplet.

    A pixel gets a depth when its surface point is seen by at least
    `min_views` cameras and the smallest pairwise triangulation angle there
    passes the material's cut (hard, or logistic with `softness_deg`).
    Depths carry Gaussian noise of `noise_multiplier` x sqrt(u); a share
    `outlier_rate` of them is replaced by wrong depths.
    """
    geometry = getattr(settings, 'VIEWFORGE_GEOMETRY', {})
    pixel_noise_std = geometry.get('PIXEL_NOISE_STD', 1.0)
    depth_agreement = geometry.get('DEPTH_AGREEMENT', 0.01)
    cameras = list(cameras)
    rng = np.random.default_rng(triplet_seed(seed, cameras))
    renders = [render_depth(camera, scene.ground_truth) for camera in cameras]
    centers = np.array([camera.center for camera in cameras])

    outputs = []
    for index, (camera, render) in enumerate(zip(cameras, renders)):
        depth = render.depth.depths
        result = np.full(depth.shape, INVALID_DEPTH)
        rows, cols = np.nonzero(np.isfinite(depth))
        if not len(rows):
            outputs.append(DepthMap(result, camera.id))
            continue
        true_depth = depth[rows, cols]
        points = unproject_pixels(camera, np.stack([cols, rows], axis=1).astype(float), true_depth)
        views = np.ones(len(points), dtype=np.int64)
        for other_index, other in enumerate(renders):
            if other_index != index:
                views += sees(other, points, depth_agreement)

        angles = min_pairwise_angles(centers[None], points)
        cut = model.cut_for(scene.ground_truth.material_of(render.face_ids[rows, cols]))
        if model.softness_deg is None:
            accepted = angles <= cut
        else:
            probability = 1.0 / (1.0 + np.exp((angles - cut) / model.softness_deg))
            accepted = rng.random(len(points)) < probability
        accepted &= views >= model.min_views

        measured = true_depth.copy()
        if model.noise_multiplier > 0:
            u = point_uncertainty_batch(cameras, points, pixel_noise_std)
            accepted &= np.isfinite(u)
            sigma = model.noise_multiplier * np.sqrt(np.where(np.isfinite(u), u, 0.0))
            measured = measured + rng.normal(0.0, 1.0, len(points)) * sigma
        if model.outlier_rate > 0:
            outlier = rng.random(len(points)) < model.outlier_rate
            factor = np.where(rng.random(len(points)) < 0.5,
                              rng.uniform(0.5, 0.8, len(points)), rng.uniform(1.25, 2.0, len(points)))
            measured = np.where(outlier, true_depth * factor, measured)
        accepted &= measured > 0
        result[rows[accepted], cols[accepted]] = measured[accepted]
        outputs.append(DepthMap(result, camera.id))

    logger.debug(f"Oracle on {'_'.join(c.id for c in cameras)}: "
                 f"{sum(int(d.valid.sum()) for d in outputs)} valid pixels")
    return outputs


class OracleBackend:
    """MVSBackend over a synthetic scene; calls are pure given the seed."""

    def __init__(self, scene: SyntheticScene, model: OracleModel, seed: int = 0):
        self.scene = scene
        self.model = model
        self.seed = seed

    def reconstruct(self, cameras: Sequence[Camera]) -> List[DepthMap]:
        return oracle_mvs(cameras, self.scene, self.model, self.seed)
