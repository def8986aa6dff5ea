"""Coverage, fulfillment and error statistics of an acquisition log."""

import logging
from dataclasses import replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.geometry.camera import project_points, unproject_pixels
from core.geometry.mesh import nearest_faces, shrink_expand_mesh, subdivide_roi
from core.geometry.types import Camera, DepthMap, TriangleMesh
from core.planner.fulfillment import FulfillmentModel
from core.planner.lookup import ConstantConfidence
from core.planner.types import PlannerConfig
from .types import AcquisitionLog, ErrorHistogram, HarnessConfig, MeshMetrics, Metrics, SyntheticScene, TripletOutcome

logger = logging.getLogger(__name__)

SIGMA_PERCENTILE = 68.3


def evaluation_meshes(scene: SyntheticScene, max_edge: float) -> List[Tuple[str, TriangleMesh, np.ndarray]]:
    """Base, shrunk and expanded ground truth with the region split to `max_edge`."""
    shrunk, expanded = shrink_expand_mesh(scene.ground_truth)
    meshes = []
    for name, mesh in (('base', scene.ground_truth), ('shrunk', shrunk), ('expanded', expanded)):
        split, roi = subdivide_roi(mesh, scene.roi, max_edge=max_edge)
        meshes.append((name, split, roi))
    return meshes


def accepted_measurements(camera: Camera, depthmap: DepthMap, points: np.ndarray, tolerance: float) -> np.ndarray:
    """Points whose pixel holds a depth beyond, or within `tolerance` of, the point depth."""
    pixels, depth = project_points(camera, points)
    in_front = depth > 0
    cols = np.rint(np.where(in_front, pixels[:, 0], -1)).astype(np.int64)
    rows = np.rint(np.where(in_front, pixels[:, 1], -1)).astype(np.int64)
    inside = in_front & (cols >= 0) & (cols < depthmap.width) & (rows >= 0) & (rows < depthmap.height)
    if np.isinf(tolerance):
        return inside
    accepted = np.zeros(len(points), dtype=bool)
    idx = np.flatnonzero(inside)
    measured = depthmap.depths[rows[idx], cols[idx]]
    accepted[idx] = np.isfinite(measured) & (measured >= depth[idx] - tolerance)
    return accepted


def mesh_metrics(name: str, mesh: TriangleMesh, roi: np.ndarray, outcomes: Iterable[TripletOutcome],
                 tolerance: float, config: PlannerConfig) -> MeshMetrics:
    """
    Fulfillment of every region triangle from the captured triplets.

    A triplet covers a triangle seen by all three of its cameras when at
    least one of them holds an accepted measurement there.
    """
    config = replace(config, render_downscale=1)
    model = FulfillmentModel(mesh, roi, ConstantConfidence(1.0, config.bins, config.gamma_max), config)
    n = len(model)
    covered = np.zeros(n, dtype=bool)
    best_f, best_res, best_unc = np.zeros(n), np.zeros(n), np.zeros(n)

    for outcome in sorted(outcomes, key=lambda o: o.camera_ids):
        seen_by_all = np.ones(n, dtype=bool)
        accepted = np.zeros(n, dtype=bool)
        for camera, depthmap in zip(outcome.cameras, outcome.depthmaps):
            visible = model.camera_visibility(camera)
            seen_by_all &= visible
            accepted |= visible & accepted_measurements(camera, depthmap, model.centroids, tolerance)
        positions = np.flatnonzero(seen_by_all & accepted)
        if not len(positions):
            continue
        covered[positions] = True
        f, f_res, f_unc, _ = model.score_triplet(outcome.cameras, positions)
        better = f > best_f[positions]
        best_f[positions[better]] = f[better]
        best_res[positions[better]] = f_res[better]
        best_unc[positions[better]] = f_unc[better]

    if not n:
        return MeshMetrics(name, 0.0, 0.0, 0.0, 0.0)
    return MeshMetrics(
        name=name,
        coverage=100.0 * float(covered.mean()),
        f_res=100.0 * float(best_res.mean()),
        f_unc=100.0 * float(best_unc.mean()),
        f=100.0 * float(best_f.mean()),
    )


def outcome_points(outcomes: Iterable[TripletOutcome]) -> np.ndarray:
    """3D points of every valid oracle depth."""
    parts = [np.zeros((0, 3))]
    for outcome in outcomes:
        for camera, depthmap in zip(outcome.cameras, outcome.depthmaps):
            rows, cols = np.nonzero(depthmap.valid)
            if len(rows):
                pixels = np.stack([cols, rows], axis=1).astype(float)
                parts.append(unproject_pixels(camera, pixels, depthmap.depths[rows, cols]))
    return np.vstack(parts)


def error_histogram(points: np.ndarray, mesh: TriangleMesh, tolerance: float,
                    faces: Optional[Sequence[int]] = None, bins: int = 40) -> ErrorHistogram:
    """
    Unsigned point-to-mesh errors, their normalized histogram, the 68.3rd
    percentile and the share of faces with a point within `tolerance`.

    With `faces`, points nearest to other faces are ignored and coverage is
    measured over `faces` only.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if not len(points):
        raise ValueError("error histogram needs at least one point")
    distances, nearest = nearest_faces(points, mesh)
    region = np.arange(mesh.n_faces) if faces is None else np.asarray(faces, dtype=np.int64)
    keep = np.isin(nearest, region)
    errors = distances[keep]
    if not len(errors):
        logger.warning("No point lies nearest to the evaluated faces")
        return ErrorHistogram(np.zeros(0), np.zeros(0), 0.0, 0.0, errors)

    upper = float(errors.max()) if errors.max() > 0 else max(tolerance, 1e-9)
    counts, edges = np.histogram(errors, bins=bins, range=(0.0, upper))
    hit = np.unique(nearest[keep][errors <= tolerance])
    return ErrorHistogram(
        bin_centers=0.5 * (edges[:-1] + edges[1:]),
        mass=counts / counts.sum(),
        sigma_bound=float(np.percentile(errors, SIGMA_PERCENTILE)),
        surface_coverage=100.0 * len(hit) / len(region) if len(region) else 0.0,
        errors=errors,
    )


def evaluate_metrics(log: AcquisitionLog, scene: SyntheticScene, config: Optional[HarnessConfig] = None,
                     planner_config: Optional[PlannerConfig] = None,
                     tolerance: Optional[float] = None) -> Metrics:
    """Table of coverage and fulfillment over the three evaluation meshes plus the error histogram."""
    config = config or HarnessConfig.from_settings()
    planner_config = planner_config or PlannerConfig.from_settings()
    tolerance = config.acceptance_tolerance if tolerance is None else tolerance
    outcomes = list(log.outcomes)

    per_mesh = [
        mesh_metrics(name, mesh, roi, outcomes, tolerance, planner_config)
        for name, mesh, roi in evaluation_meshes(scene, config.eval_max_edge)
    ]
    points = outcome_points(outcomes)
    histogram = None
    if len(points):
        histogram = error_histogram(points, scene.ground_truth, tolerance, faces=scene.roi,
                                    bins=config.histogram_bins)
    metrics = Metrics(images=len(log.cameras), per_mesh=per_mesh, success_rate=log.success_rate('plan'),
                      histogram=histogram)
    logger.info(f"{log.strategy}: coverage {metrics.coverage['mean']:.1f} +- {metrics.coverage['std']:.1f}%, "
                f"f {metrics.fulfillment['mean']:.1f} +- {metrics.fulfillment['std']:.1f}%")
    return metrics
