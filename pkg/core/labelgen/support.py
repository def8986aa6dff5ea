"""
Support counting and consistency voting between triplet reconstructions.

A reference measurement is consistent with a query measurement when the
reference point found by projecting the query point into a reference image
reprojects onto the query pixel and lies within the query's positive-vote
interval along the viewing ray.
"""

import logging
from typing import List, Sequence, Tuple

import numpy as np

from core.geometry.camera import (
    point_uncertainty_batch,
    project_points,
    triangulation_angle,
    triangulation_angles,
    unproject_pixels,
)
from core.geometry.types import Camera, DepthMap, TripletSummary
from .types import (
    NEGATIVE,
    POSITIVE,
    LabelImage,
    MeasurementGrid,
    SupportConfig,
    TripletReconstruction,
    VoteTally,
)

logger = logging.getLogger(__name__)


def support_metrics(query: TripletSummary, reference: TripletSummary, point) -> Tuple[float, float]:
    """View-angle difference (deg) and resolution ratio res_ref / res_query at a point."""
    point = np.asarray(point, dtype=float)
    alpha_diff = triangulation_angle(reference.mean_center, query.mean_center, point)
    res_ref = reference.mean_focal / np.linalg.norm(reference.mean_center - point)
    res_query = query.mean_focal / np.linalg.norm(query.mean_center - point)
    return alpha_diff, float(res_ref / res_query)


def support_metrics_batch(query: TripletSummary, reference: TripletSummary,
                          points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    alpha_diff = triangulation_angles(reference.mean_center, query.mean_center, points)
    res_ref = reference.mean_focal / np.linalg.norm(reference.mean_center - points, axis=1)
    res_query = query.mean_focal / np.linalg.norm(query.mean_center - points, axis=1)
    return alpha_diff, res_ref / res_query


def build_measurement_grid(camera: Camera, depthmap: DepthMap, triplet: Sequence[Camera],
                           pixel_noise_std: float = 1.0) -> MeasurementGrid:
    """Unproject a depthmap and attach the triplet's uncertainty to every valid pixel."""
    scaled = Camera(camera.intrinsics.scaled(depthmap.downscale), camera.pose, camera.id)
    depth = np.where(depthmap.valid, depthmap.depths, np.inf)
    rows, cols = np.nonzero(np.isfinite(depth))
    points = np.full(depth.shape + (3,), np.nan)
    u = np.full(depth.shape, np.inf)
    if len(rows):
        world = unproject_pixels(scaled, np.stack([cols, rows], axis=1), depth[rows, cols])
        points[rows, cols] = world
        u[rows, cols] = point_uncertainty_batch(triplet, world, pixel_noise_std)
    return MeasurementGrid(scaled, depth, points, u, np.zeros(depth.shape, dtype=np.int64), depthmap.downscale)


def _pixel_lookup(camera: Camera, points: np.ndarray):
    """Rounded pixel indices of points in a camera plus an in-image mask."""
    pixels, depth = project_points(camera, points)
    ok = depth > 0
    cols = np.rint(np.where(ok, pixels[:, 0], -1)).astype(np.int64)
    rows = np.rint(np.where(ok, pixels[:, 1], -1)).astype(np.int64)
    ok &= (cols >= 0) & (cols < camera.intrinsics.width) & (rows >= 0) & (rows < camera.intrinsics.height)
    return rows, cols, depth, pixels, ok


def _consistent_with_image(query: MeasurementGrid, rows: np.ndarray, cols: np.ndarray,
                           reference: MeasurementGrid, cfg: SupportConfig, supported_only: bool):
    """Backward consistency test of query pixels against one reference image.

    Returns (consistent mask, weight of the matched reference measurement).
    """
    p_query = query.points[rows, cols]
    d_query = query.depth[rows, cols]
    sigma_query = query.sigma[rows, cols]
    r_rows, r_cols, _, _, inside = _pixel_lookup(reference.camera, p_query)

    consistent = np.zeros(len(rows), dtype=bool)
    weight = np.zeros(len(rows))
    idx = np.flatnonzero(inside)
    ref_valid = reference.valid[r_rows[idx], r_cols[idx]]
    if supported_only:
        ref_valid &= reference.support[r_rows[idx], r_cols[idx]] > 0
    idx = idx[ref_valid]
    if not len(idx):
        return consistent, weight

    p_ref = reference.points[r_rows[idx], r_cols[idx]]
    back_pixels, back_depth = project_points(query.camera, p_ref)
    reprojection = np.hypot(back_pixels[:, 0] - cols[idx], back_pixels[:, 1] - rows[idx])
    ok = (back_depth > 0) & (reprojection <= cfg.reprojection_tolerance) \
        & (np.abs(back_depth - d_query[idx]) <= cfg.positive_sigma * sigma_query[idx])
    consistent[idx] = ok
    ref_support = reference.support[r_rows[idx], r_cols[idx]]
    ref_sigma = reference.sigma[r_rows[idx], r_cols[idx]]
    weight[idx] = np.where(ok, ref_support / ref_sigma, 0.0)
    return consistent, weight


def reference_pool(query: TripletReconstruction, reconstructions: Sequence[TripletReconstruction],
                   cfg: SupportConfig) -> List[TripletReconstruction]:
    """Reconstructions usable as references for `query`."""
    pool = []
    for other in reconstructions:
        if other.sample.id == query.sample.id:
            continue
        if cfg.require_disjoint and query.shares_cameras(other):
            continue
        pool.append(other)
    return pool


def compute_support(query: TripletReconstruction, references: Sequence[TripletReconstruction],
                    cfg: SupportConfig) -> List[MeasurementGrid]:
    """
    Count, per valid query pixel, the sufficiently different reference
    clusters holding a consistent measurement. References whose mean
    centers subtend less than alpha_min at the point share one count.

    Returns:
        The query's measurement grids with `support` filled in
    """
    for grid in query.grids:
        grid.support[:] = 0
        rows, cols = np.nonzero(grid.valid)
        if not len(rows) or not references:
            continue
        points = grid.points[rows, cols]
        counted = np.zeros((len(references), len(rows)), dtype=bool)
        directions = np.zeros((len(references), len(rows), 3))

        for r, reference in enumerate(references):
            alpha_diff, s_res = support_metrics_batch(query.summary, reference.summary, points)
            different = (alpha_diff > cfg.alpha_min) | (s_res > cfg.s_min)
            consistent = np.zeros(len(rows), dtype=bool)
            for ref_grid in reference.grids:
                ok, _ = _consistent_with_image(grid, rows, cols, ref_grid, cfg, supported_only=False)
                consistent |= ok
            counted[r] = different & consistent
            rays = reference.summary.mean_center - points
            directions[r] = rays / np.linalg.norm(rays, axis=1, keepdims=True)

        cos_min = np.cos(np.radians(cfg.alpha_min))
        accepted = np.zeros_like(counted)
        support = np.zeros(len(rows), dtype=np.int64)
        for r in range(len(references)):
            similar = np.zeros(len(rows), dtype=bool)
            for s in range(r):
                # angle < alpha_min  <=>  cos > cos(alpha_min)
                similar |= accepted[s] & (np.einsum('ij,ij->i', directions[r], directions[s]) > cos_min)
            accepted[r] = counted[r] & ~similar
            support += accepted[r]
        grid.support[rows, cols] = support
        logger.debug(
            f"Triplet {query.sample.id} image {grid.camera.id}: "
            f"{np.count_nonzero(support)} of {len(rows)} measurements supported"
        )
    return query.grids


def _forward_nearest(query: MeasurementGrid, reference: MeasurementGrid):
    """Z-buffer the supported reference points into the query image.

    Returns per query pixel the nearest projected depth (inf if none) and
    that point's weight.
    """
    shape = query.depth.shape
    nearest = np.full(shape, np.inf)
    weight = np.zeros(shape)
    mask = reference.valid & (reference.support > 0)
    if not mask.any():
        return nearest, weight
    points = reference.points[mask]
    weights = reference.support[mask] / reference.sigma[mask]
    rows, cols, depth, _, inside = _pixel_lookup(query.camera, points)
    rows, cols, depth, weights = rows[inside], cols[inside], depth[inside], weights[inside]
    pix = rows * shape[1] + cols
    order = np.lexsort((depth, pix))
    pix, depth, weights = pix[order], depth[order], weights[order]
    _, first = np.unique(pix, return_index=True)
    nearest.ravel()[pix[first]] = depth[first]
    weight.ravel()[pix[first]] = weights[first]
    return nearest, weight


def cast_votes(query: MeasurementGrid, references: Sequence[TripletReconstruction],
               cfg: SupportConfig) -> VoteTally:
    """
    Accumulate weighted positive and negative votes for each valid query pixel.

    Each reference cluster casts at most one vote per pixel: positive if any
    of its images holds a consistent supported measurement, otherwise
    negative if one of its supported points blocks the query's line of sight
    or the query point blocks one of its rays.
    """
    tally = VoteTally.zeros(query.depth.shape)
    rows, cols = np.nonzero(query.valid)
    if not len(rows):
        return tally
    d_query = query.depth[rows, cols]
    sigma_query = query.sigma[rows, cols]
    p_query = query.points[rows, cols]

    for reference in references:
        positive = np.zeros(len(rows))
        negative = np.zeros(len(rows))
        for ref_grid in reference.grids:
            ok, weight = _consistent_with_image(query, rows, cols, ref_grid, cfg, supported_only=True)
            positive = np.maximum(positive, np.where(ok, weight, 0.0))

            # a supported reference point in front of the query point on the query ray
            nearest, near_weight = _forward_nearest(query, ref_grid)
            blocks_query = nearest[rows, cols] < d_query - cfg.blocking_sigma * sigma_query
            negative = np.maximum(negative, np.where(blocks_query, near_weight[rows, cols], 0.0))

            # the query point in front of a supported reference measurement
            r_rows, r_cols, d_in_ref, _, inside = _pixel_lookup(ref_grid.camera, p_query)
            idx = np.flatnonzero(inside)
            supported = ref_grid.valid[r_rows[idx], r_cols[idx]] & (ref_grid.support[r_rows[idx], r_cols[idx]] > 0)
            idx = idx[supported]
            ref_depth = ref_grid.depth[r_rows[idx], r_cols[idx]]
            ref_sigma = ref_grid.sigma[r_rows[idx], r_cols[idx]]
            blocks_ref = d_in_ref[idx] < ref_depth - cfg.blocking_sigma * ref_sigma
            ref_weight = ref_grid.support[r_rows[idx], r_cols[idx]] / ref_sigma
            negative[idx] = np.maximum(negative[idx], np.where(blocks_ref, ref_weight, 0.0))

        tally.positive[rows, cols] += positive
        tally.negative[rows, cols] += np.where(positive > 0, 0.0, negative)
    return tally


def label_from_votes(tally: VoteTally, camera_id: str = '') -> LabelImage:
    """Majority of vote weight; ties and unvoted pixels stay unlabeled."""
    image = LabelImage.empty(camera_id, tally.positive.shape)
    image.labels[tally.positive > tally.negative] = POSITIVE
    image.labels[tally.negative > tally.positive] = NEGATIVE
    return image
