"""Label generation pipeline: sample, reconstruct, support, vote, detect missing parts."""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.exceptions import ViewforgeError
from core.geometry.camera import project_points, unproject_pixels
from core.geometry.mesh import shrink_expand_mesh
from core.geometry.render import render_depth
from core.geometry.types import Camera, DepthMap, RenderResult, TriangleMesh, TripletSummary
from .backends import MVSBackend
from .missing import detect_missing
from .sampling import sample_triplets
from .support import build_measurement_grid, cast_votes, compute_support, label_from_votes, reference_pool
from .types import (
    NEGATIVE,
    POSITIVE,
    LabelGenConfig,
    LabelImage,
    LabelReport,
    LabelSet,
    TripletReconstruction,
    TripletSample,
)

logger = logging.getLogger(__name__)


class LabelGenerator:
    """
    Turns a calibrated image set, its mesh and an MVS backend into per-image
    positive/negative labels.
    """

    def __init__(self, cameras: Sequence[Camera], mesh: TriangleMesh, backend: MVSBackend,
                 config: Optional[LabelGenConfig] = None, ground_truth: Optional[TriangleMesh] = None):
        self.cameras = {camera.id: camera for camera in cameras}
        self.mesh = mesh
        self.backend = backend
        self.config = config or LabelGenConfig.from_settings()
        self.ground_truth = ground_truth
        self._renders: Dict[tuple, RenderResult] = {}

    def generate(self, samples: Optional[List[TripletSample]] = None) -> LabelSet:
        cfg = self.config
        if samples is None:
            samples = sample_triplets(
                list(self.cameras.values()), self.mesh, cfg.bins, cfg.per_bin,
                cfg.min_overlap, cfg.alpha0, seed=cfg.seed,
            )
        report = LabelReport(n_triplets=len(samples))
        reconstructions = self._reconstruct(samples, report)
        report.n_reconstructed = len(reconstructions)

        # Stage 1: support of every measurement
        for reconstruction in reconstructions:
            compute_support(reconstruction, reference_pool(reconstruction, reconstructions, cfg.support), cfg.support)

        # Stage 2: votes and missing parts, merged by ascending triplet id
        shrunk, expanded = shrink_expand_mesh(self.mesh)
        images: Dict[str, LabelImage] = {}
        correct: Dict[str, np.ndarray] = {}
        for reconstruction in sorted(reconstructions, key=lambda r: r.sample.id):
            pool = [
                other for other in reference_pool(reconstruction, reconstructions, cfg.support)
                if any(grid.support.any() for grid in other.grids)
            ]
            for index, grid in enumerate(reconstruction.grids):
                partial = label_from_votes(cast_votes(grid, pool, cfg.support), grid.camera.id)
                missing = detect_missing(
                    self._depthmap(reconstruction, index), grid.camera, shrunk, expanded,
                    sigma=grid.sigma, window=cfg.augment_window,
                    min_valid=cfg.augment_min_valid, spread_sigma=cfg.augment_spread_sigma,
                )
                missing &= self._observed_by_triplet(reconstruction, index)
                partial.labels[missing & ~partial.labeled] = NEGATIVE
                self._merge(images, correct, partial, reconstruction, index)

        self._fill_report(report, images, correct)
        logger.info(
            f"Generated labels for {len(images)} images from {report.n_reconstructed} triplets: "
            f"density {report.density:.3f}, accuracy {report.accuracy}"
        )
        return LabelSet(images=images, samples=list(samples), report=report)

    def _reconstruct(self, samples: Sequence[TripletSample], report: LabelReport) -> List[TripletReconstruction]:
        reconstructions = []
        for sample in samples:
            cameras = [self.cameras[camera_id] for camera_id in sample.camera_ids]
            try:
                depthmaps = self.backend.reconstruct(cameras)
            except ViewforgeError as e:
                logger.error(f"Backend failed on triplet {sample.id} {sample.camera_ids}: {e}")
                report.skipped.append(sample.id)
                continue
            grids = [
                build_measurement_grid(camera, depthmap, cameras, self.config.pixel_noise_std)
                for camera, depthmap in zip(cameras, depthmaps)
            ]
            reconstructions.append(TripletReconstruction(
                sample=sample,
                cameras=cameras,
                summary=TripletSummary.from_cameras(cameras),
                grids=grids,
            ))
        return reconstructions

    def _depthmap(self, reconstruction: TripletReconstruction, index: int) -> DepthMap:
        grid = reconstruction.grids[index]
        return DepthMap(grid.depth, grid.camera.id, grid.downscale)

    def _render(self, camera: Camera, mesh: TriangleMesh, downscale: int, key: str) -> RenderResult:
        cache_key = (key, camera.id, downscale)
        if cache_key not in self._renders:
            self._renders[cache_key] = render_depth(camera, mesh, downscale)
        return self._renders[cache_key]

    def _observed_by_triplet(self, reconstruction: TripletReconstruction, index: int) -> np.ndarray:
        """Pixels whose mesh surface point is seen unoccluded by the other two triplet cameras."""
        grid = reconstruction.grids[index]
        downscale = self._depthmap(reconstruction, index).downscale
        own = self._render(reconstruction.cameras[index], self.mesh, downscale, 'mesh')
        observed = np.isfinite(own.depth.depths)
        rows, cols = np.nonzero(observed)
        if not len(rows):
            return observed
        points = unproject_pixels(grid.camera, np.stack([cols, rows], axis=1), own.depth.depths[rows, cols])
        seen = np.ones(len(rows), dtype=bool)
        for other_index, other in enumerate(reconstruction.cameras):
            if other_index == index:
                continue
            render = self._render(other, self.mesh, downscale, 'mesh')
            pixels, depth = project_points(render.camera, points)
            ok = depth > 0
            c = np.rint(np.where(ok, pixels[:, 0], -1)).astype(np.int64)
            r = np.rint(np.where(ok, pixels[:, 1], -1)).astype(np.int64)
            ok &= (c >= 0) & (c < render.camera.intrinsics.width) & (r >= 0) & (r < render.camera.intrinsics.height)
            idx = np.flatnonzero(ok)
            ok[idx] = depth[idx] <= render.depth.depths[r[idx], c[idx]] * 1.01
            seen &= ok
        observed[rows, cols] = seen
        return observed

    def _correctness(self, reconstruction: TripletReconstruction, index: int, labels: np.ndarray) -> Optional[np.ndarray]:
        """Per-pixel label correctness against the ground-truth mesh."""
        if self.ground_truth is None:
            return None
        grid = reconstruction.grids[index]
        downscale = self._depthmap(reconstruction, index).downscale
        truth = self._render(reconstruction.cameras[index], self.ground_truth, downscale, 'truth').depth.depths
        error = np.abs(np.where(grid.valid, grid.depth, np.inf) - truth)
        accurate = grid.valid & np.isfinite(truth) & (error <= self.config.accuracy_sigma * grid.sigma)
        return np.where(labels == POSITIVE, accurate, ~accurate)

    def _merge(self, images: Dict[str, LabelImage], correct: Dict[str, np.ndarray], partial: LabelImage,
               reconstruction: TripletReconstruction, index: int) -> None:
        camera_id = partial.camera_id
        if camera_id not in images:
            images[camera_id] = LabelImage.empty(camera_id, partial.labels.shape)
            correct[camera_id] = np.zeros(partial.labels.shape, dtype=bool)
        target = images[camera_id]
        write = partial.labeled
        target.labels[write] = partial.labels[write]
        target.angles[write] = reconstruction.sample.angle
        target.triplet_ids[write] = reconstruction.sample.id
        verdict = self._correctness(reconstruction, index, partial.labels)
        if verdict is not None:
            correct[camera_id][write] = verdict[write]

    def _fill_report(self, report: LabelReport, images: Dict[str, LabelImage], correct: Dict[str, np.ndarray]) -> None:
        total = labeled = positive = hits = 0
        for camera_id, image in sorted(images.items()):
            n_labeled = int(image.labeled.sum())
            n_positive = int((image.labels == POSITIVE).sum())
            report.per_image[camera_id] = {
                'labeled': n_labeled,
                'positive': n_positive,
                'negative': n_labeled - n_positive,
                'density': image.density,
            }
            total += image.labels.size
            labeled += n_labeled
            positive += n_positive
            hits += int(correct[camera_id][image.labeled].sum())
        report.density = labeled / total if total else 0.0
        report.positive_fraction = positive / labeled if labeled else 0.0
        if self.ground_truth is not None and labeled:
            report.accuracy = hits / labeled


def generate_labels(cameras: Sequence[Camera], mesh: TriangleMesh, backend: MVSBackend,
                    config: Optional[LabelGenConfig] = None,
                    ground_truth: Optional[TriangleMesh] = None,
                    samples: Optional[List[TripletSample]] = None) -> LabelSet:
    """Run the full pipeline; see LabelGenerator."""
    return LabelGenerator(cameras, mesh, backend, config, ground_truth).generate(samples)
