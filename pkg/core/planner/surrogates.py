"""
Surrogate cameras: free-space sampling, inverse visibility, potential
gains and mean-shift orientation.
"""

import logging
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import NoFreeSpaceError
from core.geometry.camera import look_at, project_points
from core.geometry.render import NEAR_PLANE, render_depth
from core.geometry.types import CameraIntrinsics, TriangleMesh
from .distance import DistanceField
from .fulfillment import FulfillmentModel, combine_fulfillment
from .lookup import angle_bins
from .triplets import triplet_layout
from .types import PlannerConfig, SurrogateCamera

logger = logging.getLogger(__name__)

MEAN_SHIFT_ITERATIONS = 50
MEAN_SHIFT_TOLERANCE = 1e-6


def surrogate_bounds(mesh: TriangleMesh, roi: Sequence[int], margin: float) -> Tuple[np.ndarray, np.ndarray]:
    """Sampling box around the region: padded sideways and upward, not below it."""
    vertices = mesh.vertices[np.unique(mesh.faces[np.asarray(list(roi), dtype=np.int64)])]
    lo, hi = vertices.min(axis=0), vertices.max(axis=0)
    return (np.array([lo[0] - margin, lo[1] - margin, lo[2]]),
            np.array([hi[0] + margin, hi[1] + margin, hi[2] + margin]))


def sample_surrogates(mesh: TriangleMesh, dfield: DistanceField, n_p: int,
                      bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                      safety_distance: float = 0.3, seed: int = 0, retries: int = 20,
                      margin: float = 1.5) -> List[SurrogateCamera]:
    """Uniform free-space positions at least `safety_distance` from all geometry.

    Raises:
        NoFreeSpaceError: if no sampled position is safe
    """
    if bounds is None:
        bounds = surrogate_bounds(mesh, range(mesh.n_faces), margin) if mesh.n_faces else (
            np.full(3, -margin), np.full(3, margin))
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    rng = np.random.default_rng(seed)
    accepted = []
    have = 0
    for _ in range(max(1, retries)):
        need = n_p - have
        if need <= 0:
            break
        draws = rng.uniform(lo, hi, size=(need, 3))
        safe = draws[dfield.is_safe(draws, safety_distance)]
        accepted.append(safe)
        have += len(safe)

    positions = np.concatenate(accepted) if accepted else np.zeros((0, 3))
    if not len(positions):
        raise NoFreeSpaceError(f"no position within {lo.tolist()}..{hi.tolist()} keeps "
                               f"{safety_distance} m from the geometry")
    if len(positions) < n_p:
        logger.warning(f"Only {len(positions)} of {n_p} surrogate positions are safe after {retries} rounds")
    return [SurrogateCamera(index=i, position=p) for i, p in enumerate(positions[:n_p])]


def virtual_intrinsics(phi: float, resolution: int) -> CameraIntrinsics:
    focal = 0.5 * resolution / np.tan(np.radians(phi) / 2.0)
    return CameraIntrinsics.centered(focal, resolution, resolution)


def inverse_visibility(mesh: TriangleMesh, triangles: Sequence[int], positions: np.ndarray,
                       phi: float = 120.0, resolution: int = 48) -> List[np.ndarray]:
    """Surrogate indices each triangle sees, by rendering from the triangle outward.

    One virtual camera sits on each triangle's centroid looking along its
    normal; a position is linked when it lies inside that frustum and in
    front of the buffered depth.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    triangles = np.asarray(list(triangles), dtype=np.int64)
    intrinsics = virtual_intrinsics(phi, resolution)
    normals = mesh.face_normals()
    centroids = mesh.centroids()
    extent = np.ptp(mesh.vertices, axis=0).max() if len(mesh.vertices) else 1.0
    offset = 1e-6 * max(float(extent), 1.0)

    links = []
    for t in triangles:
        center = centroids[t] + offset * normals[t]
        camera = look_at(intrinsics, center, center + normals[t], f'virtual-{t}')
        render = render_depth(camera, mesh)
        pixels, depth = project_points(camera, positions)
        in_front = depth > NEAR_PLANE
        cols = np.rint(np.where(in_front, pixels[:, 0], -1)).astype(np.int64)
        rows = np.rint(np.where(in_front, pixels[:, 1], -1)).astype(np.int64)
        inside = in_front & (cols >= 0) & (cols < resolution) & (rows >= 0) & (rows < resolution)
        idx = np.flatnonzero(inside)
        buffered = render.depth.depths[rows[idx], cols[idx]]
        links.append(idx[depth[idx] < buffered])
    logger.info(f"Inverse visibility: {sum(len(l) for l in links)} links between "
                f"{len(triangles)} triangles and {len(positions)} surrogates")
    return links


def attach_links(surrogates: Sequence[SurrogateCamera], links: Sequence[np.ndarray]) -> None:
    """Store per-triangle links on the surrogates as target positions."""
    owners = np.concatenate([np.asarray(l, dtype=np.int64) for l in links]) if len(links) else np.zeros(0, dtype=np.int64)
    targets = np.repeat(np.arange(len(links)), [len(l) for l in links]).astype(np.int64)
    order = np.lexsort((targets, owners))
    counts = np.bincount(owners, minlength=len(surrogates))
    for surrogate, block in zip(surrogates, np.split(targets[order], np.cumsum(counts)[:-1])):
        surrogate.links = block


def hypothetical_fulfillment(model: FulfillmentModel, position: int, surrogates: np.ndarray,
                             config: PlannerConfig) -> np.ndarray:
    """f(t, c3) of the equilateral triplets aimed at one triangle's centroid.

    The triangle sits on every camera's optical axis, so its projection is
    evaluated in closed form. Returns (S, bins).
    """
    surrogates = np.atleast_2d(np.asarray(surrogates, dtype=float))
    centroid = model.centroids[position]
    normal = model.normals[position]
    angles = config.bin_angles
    to_triangle = centroid - surrogates
    d = np.linalg.norm(to_triangle, axis=1)
    centers, _, _, radii = triplet_layout(surrogates, to_triangle / d[:, None], d, angles)

    viewing = np.sqrt(d[:, None] ** 2 + radii ** 2)  # (S, b)
    focal = config.intrinsics.focal_length
    facing = np.einsum('sbjk,k->sbj', centers - centroid, normal) / viewing[..., None]
    r_min = ((focal / viewing) ** 2)[..., None] * np.maximum(facing, 0.0)
    r_min = r_min.min(axis=2)

    # J^T J of an on-axis point summed over the ring of three cameras.
    sin2 = (radii / viewing) ** 2
    eigen = np.minimum(3.0 * sin2, 3.0 - 1.5 * sin2)
    safe = np.where(eigen > 0, eigen, 1.0)
    u = np.where(eigen > 0, config.pixel_noise_std ** 2 * viewing ** 2 / (focal ** 2 * safe), np.inf)

    nearest = model.nearest_confidence(surrogates, np.full(len(surrogates), position))
    bins = angle_bins(model.confidences, angles)
    f_conf = nearest[:, bins]
    f_conf = np.where(np.isfinite(f_conf), f_conf, model.confidences.prior)
    covered = model.counts[position] + 3 >= config.c
    f, _, _ = combine_fulfillment(r_min, u, f_conf, covered, config)
    return np.where(np.isfinite(radii), f, 0.0)


def potential_gains(model: FulfillmentModel, targets: np.ndarray, surrogates: Sequence[SurrogateCamera],
                    config: PlannerConfig) -> None:
    """Fill each surrogate's per-link, per-bin potential gain max(f(t, c3) - f(t), 0)."""
    counts = np.array([len(s.links) for s in surrogates], dtype=np.int64)
    linked = np.concatenate([s.links for s in surrogates]) if len(surrogates) else np.zeros(0, dtype=np.int64)
    owners = np.repeat(np.arange(len(surrogates)), counts)
    positions = np.array([s.position for s in surrogates]).reshape(-1, 3)
    gains = np.zeros((len(linked), config.bins))

    order = np.argsort(linked, kind='stable')
    targets_sorted, starts = np.unique(linked[order], return_index=True)
    ends = np.append(starts[1:], len(order))
    for t, start, end in zip(targets_sorted, starts, ends):
        rows = order[start:end]
        position = targets[t]
        f = hypothetical_fulfillment(model, position, positions[owners[rows]], config)
        gains[rows] = np.maximum(f - model.f[position], 0.0)

    for surrogate, block in zip(surrogates, np.split(gains, np.cumsum(counts)[:-1])):
        surrogate.gains = block


def potential_gain(model: FulfillmentModel, position, triangle: int, config: PlannerConfig):
    """Per-bin potential gain of one surrogate position for one model triangle, and its maximum."""
    f = hypothetical_fulfillment(model, triangle, np.asarray(position, dtype=float).reshape(1, 3), config)[0]
    gains = np.maximum(f - model.f[triangle], 0.0)
    return gains, float(gains.max())


def mean_shift_direction(rays: np.ndarray, weights: np.ndarray, bandwidth: float,
                         max_iterations: int = MEAN_SHIFT_ITERATIONS, tolerance: float = MEAN_SHIFT_TOLERANCE):
    """Weighted flat-kernel mean shift on unit directions.

    Every ray seeds a mode; the winner is the mode with the largest summed
    weight within `bandwidth` degrees (first seed on ties).

    Returns:
        (direction, summed weight)
    """
    rays = np.atleast_2d(np.asarray(rays, dtype=float))
    rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)
    weights = np.asarray(weights, dtype=float)
    cos_bw = np.cos(np.radians(bandwidth))
    modes = rays.copy()
    active = np.ones(len(rays), dtype=bool)
    for _ in range(max_iterations):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        window = (modes[idx] @ rays.T) >= cos_bw
        shifted = (window * weights) @ rays
        norm = np.linalg.norm(shifted, axis=1)
        stuck = norm <= 0
        shifted = shifted / np.where(stuck, 1.0, norm)[:, None]
        shifted[stuck] = modes[idx[stuck]]
        moved = np.arccos(np.clip(np.sum(shifted * modes[idx], axis=1), -1.0, 1.0))
        modes[idx] = shifted
        active[idx] = (moved > tolerance) & ~stuck
    support = ((modes @ rays.T) >= cos_bw) @ weights
    winner = int(np.argmax(support))
    return modes[winner], float(support[winner])


def in_frustum(intrinsics: CameraIntrinsics, position: np.ndarray, orientation: np.ndarray,
               points: np.ndarray) -> np.ndarray:
    camera = look_at(intrinsics, position, position + orientation, 'surrogate')
    pixels, depth = project_points(camera, points)
    with np.errstate(invalid='ignore'):
        return ((depth > NEAR_PLANE) & (pixels[:, 0] >= 0) & (pixels[:, 0] <= intrinsics.width)
                & (pixels[:, 1] >= 0) & (pixels[:, 1] <= intrinsics.height))


def orient_surrogates(surrogates: Sequence[SurrogateCamera], centroids: np.ndarray,
                      config: PlannerConfig) -> List[SurrogateCamera]:
    """Give every surrogate with positive gain its dominant viewing direction.

    Links outside the oriented frustum are dropped; so are surrogates left
    without gain. `centroids` are the target centroids the links index.
    """
    bandwidth = config.opening_angle
    oriented = []
    for surrogate in surrogates:
        weights = surrogate.link_gains
        keep = weights > 0
        if not keep.any():
            continue
        rays = centroids[surrogate.links[keep]] - surrogate.position
        direction, _ = mean_shift_direction(rays, weights[keep], bandwidth)

        inside = in_frustum(config.intrinsics, surrogate.position, direction, centroids[surrogate.links])
        links = surrogate.links[inside]
        gains = surrogate.gains[inside]
        link_weights = gains.max(axis=1) if len(links) else np.zeros(0)
        if link_weights.sum() <= 0:
            continue
        if config.aim_distance is not None:
            aim = float(config.aim_distance)
        else:
            target = (link_weights[:, None] * centroids[links]).sum(axis=0) / link_weights.sum()
            offset = target - surrogate.position
            aim = float(offset @ direction)
            if aim <= 1e-6:
                aim = float(np.linalg.norm(offset))
        oriented.append(replace(surrogate, links=links, gains=gains, orientation=direction, aim_distance=aim))
    logger.info(f"Oriented {len(oriented)} of {len(surrogates)} surrogates (bandwidth {bandwidth:.1f} deg)")
    return oriented
