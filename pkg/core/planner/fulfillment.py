"""
Per-triangle fulfillment (coverage, resolution, uncertainty, confidence).

`FulfillmentModel` caches, for every captured camera and selected
triangle, the visibility, ground resolution, information matrix and
confidence row so that triplet fulfillment can be scored for both real
camera triplets and hypothetical ones in vectorised form.
"""

import itertools
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import EmptyRegionError
from core.geometry.camera import information_matrices, project_points, projected_areas, uncertainty_from_information
from core.geometry.mesh import subdivide_roi
from core.geometry.render import render_depth, visibility_mask
from core.geometry.types import Camera, RenderResult, TriangleMesh
from .lookup import ConfidenceLookup, angle_bins
from .types import FulfillmentRecord, PlannerConfig

logger = logging.getLogger(__name__)

CHUNK_TRIANGLES = 256


def combine_fulfillment(r_min, u, f_conf, covered, config: PlannerConfig):
    """Weighted fulfillment from resolution, uncertainty, coverage and confidence arrays.

    Returns (f, f_res, f_unc).
    """
    r_min = np.asarray(r_min, dtype=float)
    u = np.asarray(u, dtype=float)
    f_res = np.minimum(1.0, r_min / config.r_d)
    with np.errstate(divide='ignore', invalid='ignore'):
        f_unc = np.where(np.isfinite(u) & (u > 0), np.minimum(1.0, config.a_d / np.sqrt(u)), 0.0)
    f_unc = np.where(u == 0, 1.0, f_unc)
    f = (config.alpha * f_res + (1.0 - config.alpha) * f_unc) * np.asarray(covered, dtype=float) * f_conf
    return f, f_res, f_unc


def min_pairwise_angles(centers: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Smallest triangulation angle (degrees) among the three camera pairs.

    centers (..., 3, 3) broadcast against points (..., 3).
    """
    rays = centers - points[..., None, :]
    rays = rays / np.linalg.norm(rays, axis=-1, keepdims=True)
    dots = np.stack([
        np.sum(rays[..., 0, :] * rays[..., 1, :], axis=-1),
        np.sum(rays[..., 0, :] * rays[..., 2, :], axis=-1),
        np.sum(rays[..., 1, :] * rays[..., 2, :], axis=-1),
    ], axis=-1)
    return np.degrees(np.arccos(np.clip(dots.max(axis=-1), -1.0, 1.0)))


class FulfillmentModel:
    """
    Fulfillment of a fixed set of triangles under a growing camera set.

    Cameras are added with `add_cameras`; `evaluate` enumerates camera
    triplets (the nearest `max_triplet_cameras` observers of each triangle
    together with its current best triplet) and keeps the best, so adding
    cameras never lowers f. Planned triplets are folded in with
    `append_triplet` as one measurement unit.
    """

    def __init__(self, mesh: TriangleMesh, triangles: Iterable[int], confidences: ConfidenceLookup,
                 config: PlannerConfig):
        self.mesh = mesh
        self.triangles = np.asarray(list(triangles), dtype=np.int64)
        self.confidences = confidences
        self.config = config

        tri = mesh.triangles[self.triangles]
        self.tri = tri
        self.centroids = tri.mean(axis=1)
        normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        lengths = np.linalg.norm(normals, axis=1)
        self.areas = 0.5 * lengths
        self.normals = normals / np.where(lengths > 0, lengths, 1.0)[:, None]

        n = len(self.triangles)
        self.cameras: List[Camera] = []
        self.renders: Dict[str, RenderResult] = {}
        self.visible = np.zeros((0, n), dtype=bool)
        self.resolution = np.zeros((0, n))
        self.information = np.zeros((0, n, 3, 3))
        self.confidence = np.zeros((0, n, confidences.bins))

        self.f = np.zeros(n)
        self.f_cov = np.zeros(n, dtype=np.int64)
        self.f_res = np.zeros(n)
        self.f_unc = np.zeros(n)
        self.f_conf = np.zeros(n)
        self.best: List[Tuple[str, ...]] = [() for _ in range(n)]

    def __len__(self) -> int:
        return len(self.triangles)

    @property
    def centers(self) -> np.ndarray:
        return np.array([camera.center for camera in self.cameras]).reshape(-1, 3)

    @property
    def counts(self) -> np.ndarray:
        return self.visible.sum(axis=0)

    # Camera bookkeeping

    def render(self, camera: Camera) -> RenderResult:
        render = self.renders.get(camera.id)
        if render is None:
            render = render_depth(camera, self.mesh, self.config.render_downscale)
            self.renders[camera.id] = render
        return render

    def camera_visibility(self, camera: Camera, subset: Optional[np.ndarray] = None) -> np.ndarray:
        """Centroid visibility of the selected triangles (or a subset of positions)."""
        positions = np.arange(len(self)) if subset is None else np.asarray(subset, dtype=np.int64)
        return visibility_mask(self.render(camera), self.mesh, self.triangles[positions])

    def _camera_terms(self, camera: Camera, visible: np.ndarray):
        focal = camera.focal
        resolution = projected_areas(camera.center, camera.rotation, focal, self.tri)
        with np.errstate(divide='ignore', invalid='ignore'):
            resolution = np.where(visible & (self.areas > 0), resolution / self.areas, 0.0)
        information = information_matrices(camera.center, camera.rotation, focal, self.centroids)
        information = np.where(visible[:, None, None], np.nan_to_num(information), 0.0)
        confidence = np.full((len(self), self.confidences.bins), np.nan)
        if visible.any() and self.confidences.has_image(camera.id):
            pixels, _ = project_points(camera, self.centroids[visible])
            confidence[visible] = self.confidences.lookup(camera.id, pixels)
        return resolution, information, confidence

    def add_cameras(self, cameras: Sequence[Camera]) -> None:
        for camera in cameras:
            if camera.id in {c.id for c in self.cameras}:
                raise ValueError(f"camera {camera.id} is already part of the fulfillment model")
            visible = self.camera_visibility(camera)
            resolution, information, confidence = self._camera_terms(camera, visible)
            self.cameras.append(camera)
            self.visible = np.concatenate([self.visible, visible[None]])
            self.resolution = np.concatenate([self.resolution, resolution[None]])
            self.information = np.concatenate([self.information, information[None]])
            self.confidence = np.concatenate([self.confidence, confidence[None]])
        logger.debug(f"Fulfillment model holds {len(self.cameras)} cameras")

    # Confidence sources

    def nearest_confidence(self, reference: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """(M, bins) confidence of the camera closest to `reference` that observes
        each triangle and has a confidence image; NaN rows where there is none.

        `reference` is one point (3,) or one point per position (M, 3).
        """
        result = np.full((len(positions), self.confidences.bins), np.nan)
        if not len(self.cameras) or not len(positions):
            return result
        available = self.visible[:, positions] & np.isfinite(self.confidence[:, positions, 0])
        reference = np.broadcast_to(np.asarray(reference, dtype=float), (len(positions), 3))
        dist = np.linalg.norm(self.centers[:, None, :] - reference[None], axis=2)
        dist = np.where(available, dist, np.inf)
        nearest = np.argmin(dist, axis=0)
        has = np.isfinite(dist[nearest, np.arange(len(positions))])
        result[has] = self.confidence[nearest[has], positions[has]]
        return result

    def confidence_upper(self, positions: Optional[np.ndarray] = None) -> np.ndarray:
        """Largest confidence any observing image predicts, or the prior."""
        positions = np.arange(len(self)) if positions is None else np.asarray(positions, dtype=np.int64)
        if not len(self.cameras):
            return np.full(len(positions), self.confidences.prior)
        values = np.where(self.visible[:, positions, None], self.confidence[:, positions], np.nan)
        finite = np.isfinite(values)
        best = np.where(finite, values, -np.inf).max(axis=(0, 2))
        return np.where(finite.any(axis=(0, 2)), best, self.confidences.prior)

    # Scoring

    def evaluate(self, positions: Optional[np.ndarray] = None) -> None:
        """Best triplet per triangle by enumeration over its nearest observers.

        The candidate pool of a triangle is its nearest `max_triplet_cameras`
        observers plus the members of its current best triplet, and a stored
        result is only replaced by a better one. With `max_triplet_cameras`
        set to None every observer is enumerated.
        """
        positions = np.arange(len(self)) if positions is None else np.asarray(positions, dtype=np.int64)
        n = len(self.cameras)
        counts = self.counts
        if n < 3:
            self._reset(positions)
            return

        limit = self.config.max_triplet_cameras
        m = n if limit is None else min(limit, n)
        width = min(m + 3, n)
        combos = np.array(list(itertools.combinations(range(width), 3)), dtype=np.int64)
        dist = np.linalg.norm(self.centers[:, None, :] - self.centroids[None], axis=2)
        dist = np.where(self.visible, dist, np.inf)
        order = np.argsort(dist, axis=0, kind='stable')
        index = {camera.id: i for i, camera in enumerate(self.cameras)}
        fallback = self.nearest_confidence(self.centroids[positions], positions)

        for start in range(0, len(positions), CHUNK_TRIANGLES):
            chunk = positions[start:start + CHUNK_TRIANGLES]
            pools, sizes = self._candidate_pools(chunk, order, dist, index, m, width)
            valid = combos.max(axis=1)[None, :] < sizes[:, None]
            members = pools[:, combos]  # (C, K, 3)
            tri_idx = chunk[:, None, None]

            r_min = self.resolution[members, tri_idx].min(axis=2)
            u = uncertainty_from_information(self.information[members, tri_idx].sum(axis=2),
                                             self.config.pixel_noise_std)
            angles = min_pairwise_angles(self.centers[members], self.centroids[chunk][:, None, :])
            bins = angle_bins(self.confidences, angles)
            member_conf = self.confidence[members, tri_idx, bins[..., None]]  # (C, K, 3)
            has = np.isfinite(member_conf)
            first = np.argmax(has, axis=2)
            f_conf = np.take_along_axis(member_conf, first[..., None], axis=2)[..., 0]
            fb = fallback[start:start + CHUNK_TRIANGLES]
            fb_values = np.take_along_axis(fb, bins, axis=1)
            fb_values = np.where(np.isfinite(fb_values), fb_values, self.confidences.prior)
            f_conf = np.where(has.any(axis=2), f_conf, fb_values)

            covered = (counts[chunk] >= self.config.c)[:, None]
            f, f_res, f_unc = combine_fulfillment(r_min, u, f_conf, covered, self.config)
            f = np.where(valid, f, -1.0)
            best = np.argmax(f, axis=1)
            rows = np.arange(len(chunk))
            has_triplet = valid.any(axis=1)
            new_f = np.where(has_triplet, f[rows, best], 0.0)
            # f never decreases; cameras are only ever added
            replace = new_f >= self.f[chunk]

            updates = (
                (self.f, new_f),
                (self.f_cov, np.where(has_triplet, covered[:, 0], 0).astype(np.int64)),
                (self.f_res, np.where(has_triplet, f_res[rows, best], 0.0)),
                (self.f_unc, np.where(has_triplet, f_unc[rows, best], 0.0)),
                (self.f_conf, np.where(has_triplet, f_conf[rows, best], 0.0)),
            )
            for target, values in updates:
                target[chunk] = np.where(replace, values, target[chunk])
            for row, position in enumerate(chunk):
                if not replace[row]:
                    continue
                if has_triplet[row]:
                    self.best[position] = tuple(self.cameras[i].id for i in members[row, best[row]])
                else:
                    self.best[position] = ()
        logger.info(f"Evaluated fulfillment of {len(positions)} triangles over {n} cameras: "
                    f"mean f = {self.f[positions].mean():.3f}")

    def _candidate_pools(self, chunk: np.ndarray, order: np.ndarray, dist: np.ndarray, index: Dict[str, int],
                         m: int, width: int):
        """(C, width) camera indices per triangle, nearest first, and the pool sizes."""
        pools = np.zeros((len(chunk), width), dtype=np.int64)
        sizes = np.zeros(len(chunk), dtype=np.int64)
        for row, position in enumerate(chunk):
            pool = [int(i) for i in order[:m, position] if np.isfinite(dist[i, position])]
            for camera_id in self.best[position]:
                i = index.get(camera_id)
                if i is not None and i not in pool and np.isfinite(dist[i, position]):
                    pool.append(i)
            pool.sort(key=lambda i: (dist[i, position], i))
            pools[row, :len(pool)] = pool
            sizes[row] = len(pool)
        return pools, sizes

    def _reset(self, positions: np.ndarray) -> None:
        self.f[positions] = 0.0
        self.f_cov[positions] = 0
        self.f_res[positions] = 0.0
        self.f_unc[positions] = 0.0
        self.f_conf[positions] = 0.0
        for position in positions:
            self.best[position] = ()

    def score_triplet(self, cameras: Sequence[Camera], positions: np.ndarray):
        """f(t, c3) of a hypothetical triplet for the given triangle positions.

        Visibility is the caller's business; confidence comes from the captured
        image nearest the triplet that observes the triangle.

        Returns:
            (f, f_res, f_unc, f_conf) arrays over `positions`
        """
        positions = np.asarray(positions, dtype=np.int64)
        if not len(positions):
            empty = np.zeros(0)
            return empty, empty, empty, empty
        centers = np.array([camera.center for camera in cameras])
        rotations = np.array([camera.rotation for camera in cameras])
        focals = np.array([camera.focal for camera in cameras])
        tri = self.tri[positions]

        areas = projected_areas(centers[:, None], rotations[:, None], focals[:, None], tri[None])
        with np.errstate(divide='ignore', invalid='ignore'):
            resolution = np.where(self.areas[positions] > 0, areas / self.areas[positions], 0.0)
        r_min = resolution.min(axis=0)
        information = information_matrices(centers[:, None], rotations[:, None], focals[:, None],
                                           self.centroids[positions][None])
        u = uncertainty_from_information(np.nan_to_num(information, nan=np.inf).sum(axis=0),
                                         self.config.pixel_noise_std)
        angles = min_pairwise_angles(centers[None], self.centroids[positions])
        f_conf = self.hypothetical_confidence(centers.mean(axis=0), positions, angles)
        covered = self.counts[positions] + 3 >= self.config.c
        f, f_res, f_unc = combine_fulfillment(r_min, u, f_conf, covered, self.config)
        return f, f_res, f_unc, f_conf

    def hypothetical_confidence(self, reference: np.ndarray, positions: np.ndarray, angles) -> np.ndarray:
        nearest = self.nearest_confidence(reference, positions)
        bins = angle_bins(self.confidences, angles)
        values = np.take_along_axis(nearest, np.broadcast_to(bins, (len(positions),))[:, None], axis=1)[:, 0]
        missing = ~np.isfinite(values)
        if missing.any():
            logger.debug(f"{int(missing.sum())} triangles fall back to the prior confidence")
        return np.where(missing, self.confidences.prior, values)

    def append_triplet(self, cameras: Sequence[Camera]) -> np.ndarray:
        """Fold a planned triplet in as one measurement unit.

        Triangles seen by all three cameras take max(f, f(t, c3)); the cameras
        then join the model. Returns the positions whose fulfillment rose.
        """
        visible = np.ones(len(self), dtype=bool)
        for camera in cameras:
            visible &= self.camera_visibility(camera)
        positions = np.flatnonzero(visible)
        f, f_res, f_unc, f_conf = self.score_triplet(cameras, positions)
        better = f > self.f[positions]
        raised = positions[better]
        self.f[raised] = f[better]
        self.f_cov[raised] = 1
        self.f_res[raised] = f_res[better]
        self.f_unc[raised] = f_unc[better]
        self.f_conf[raised] = f_conf[better]
        ids = tuple(camera.id for camera in cameras)
        for position in raised:
            self.best[position] = ids
        self.add_cameras(cameras)
        return raised

    def records(self) -> List[FulfillmentRecord]:
        upper = self.confidence_upper()
        observed = self.visible.any(axis=0) if len(self.cameras) else np.zeros(len(self), dtype=bool)
        return [
            FulfillmentRecord(
                triangle=int(self.triangles[i]),
                f_cov=int(self.f_cov[i]),
                f_res=float(self.f_res[i]),
                f_unc=float(self.f_unc[i]),
                f_conf=float(self.f_conf[i]),
                f=float(self.f[i]),
                triplet=self.best[i],
                f_conf_max=float(upper[i]),
                prior=not bool(observed[i]),
            )
            for i in range(len(self))
        ]


def select_roi_triangles(mesh: TriangleMesh, roi: Iterable[int], n_t: int, seed: int = 0,
                         max_edge: Optional[float] = None) -> Tuple[TriangleMesh, np.ndarray]:
    """Subdivide the region of interest and draw up to n_t of its triangles.

    Raises:
        EmptyRegionError: if the region holds no triangles
    """
    roi = list(roi)
    if not roi:
        raise EmptyRegionError("region of interest is empty")
    mesh, roi_ids = subdivide_roi(mesh, roi, max_edge=max_edge)
    if not len(roi_ids):
        raise EmptyRegionError("region of interest is empty after subdivision")
    rng = np.random.default_rng(seed)
    count = min(n_t, len(roi_ids))
    if count < n_t:
        logger.info(f"Region holds only {len(roi_ids)} triangles; using all of them")
    selected = np.sort(rng.choice(roi_ids, size=count, replace=False))
    return mesh, selected


def estimate_fulfillment(cameras: Sequence[Camera], mesh: TriangleMesh, roi: Iterable[int],
                         confidences: ConfidenceLookup, config: Optional[PlannerConfig] = None,
                         seed: Optional[int] = None) -> List[FulfillmentRecord]:
    """Fulfillment records of N_t randomly selected region triangles.

    Record triangle ids refer to the subdivided mesh.
    """
    config = config or PlannerConfig.from_settings()
    seed = config.seed if seed is None else seed
    mesh, selected = select_roi_triangles(mesh, roi, config.n_t, seed)
    model = FulfillmentModel(mesh, selected, confidences, config)
    model.add_cameras(cameras)
    model.evaluate()
    return model.records()


def target_weights(records: Sequence[FulfillmentRecord]) -> np.ndarray:
    return np.array([record.weight for record in records], dtype=float)


def select_targets(records: Sequence[FulfillmentRecord], n_v: int, seed: int = 0) -> np.ndarray:
    """Draw n_v triangles without replacement, weighted by 1 - f/f_conf.

    Returns positions into `records`.
    """
    if not records:
        raise ValueError("no fulfillment records to select from")
    rng = np.random.default_rng(seed)
    weights = target_weights(records)
    total = weights.sum()
    if total <= 0:
        logger.warning(f"All {len(records)} triangles have zero weight; selecting uniformly")
        count = min(n_v, len(records))
        return np.sort(rng.choice(len(records), size=count, replace=False))
    count = min(n_v, int(np.count_nonzero(weights)))
    if count < n_v:
        logger.info(f"Only {count} triangles have positive weight (asked for {n_v})")
    return np.sort(rng.choice(len(records), size=count, replace=False, p=weights / total))
