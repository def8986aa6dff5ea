"""
Equilateral camera triplets and the search for the best one.

The search visits oriented surrogates by a sound upper bound on their
triplet gains and skips every triplet whose bound cannot beat the best
gain found so far, which returns the same triplet as exhaustive
enumeration.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import DegenerateGeometryError, InfeasibleTripletError
from core.geometry.camera import look_at_rotations
from core.geometry.render import render_depth, visibility_mask
from core.geometry.types import Camera, CameraIntrinsics, CameraPose, RenderResult
from .types import CameraTriplet, PlannerConfig, SearchReport, SurrogateCamera

logger = logging.getLogger(__name__)

TRIPLET_PHASES = np.radians([90.0, 210.0, 330.0])
MAX_TRIPLET_ANGLE = 120.0
BOUND_SLACK = 1e-9
CHUNK_SURROGATES = 256
VISIBILITY_MARGIN = 1.0  # pixels at render resolution


def triplet_layout(positions: np.ndarray, orientations: np.ndarray, distances: np.ndarray, angles):
    """Camera centers and rotations of equilateral triplets.

    For S surrogates and b angles returns centers (S, b, 3, 3), rotations
    (S, b, 3, 3, 3), aim points (S, 3) and ring radii (S, b). Angles of
    120 degrees or more have no layout and come back as NaN.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    orientations = np.atleast_2d(np.asarray(orientations, dtype=float))
    distances = np.asarray(distances, dtype=float).reshape(-1)
    angles = np.atleast_1d(np.asarray(angles, dtype=float))

    half = np.sin(np.radians(angles) / 2.0)
    feasible = (angles >= 0) & (angles < MAX_TRIPLET_ANGLE)
    with np.errstate(invalid='ignore', divide='ignore'):
        scale = np.where(feasible, half / np.sqrt(np.where(feasible, 0.75 - half ** 2, 1.0)), np.nan)
    radii = distances[:, None] * scale[None, :]

    basis = look_at_rotations(positions, positions + orientations)
    ring = (np.cos(TRIPLET_PHASES)[None, :, None] * basis[:, None, 0, :]
            + np.sin(TRIPLET_PHASES)[None, :, None] * basis[:, None, 1, :])  # (S, 3, 3)
    centers = positions[:, None, None, :] + radii[:, :, None, None] * ring[:, None]
    aims = positions + distances[:, None] * orientations
    with np.errstate(invalid='ignore', divide='ignore'):
        rotations = look_at_rotations(centers, aims[:, None, None, :])
    return centers, rotations, aims, radii


def equilateral_triplet(position, orientation, aim_distance: float, angle: float,
                        intrinsics: CameraIntrinsics, prefix: str = 'triplet',
                        angle_bin: int = -1, surrogate: int = -1) -> CameraTriplet:
    """Three cameras on a ring around `position` aimed at a common point.

    Raises:
        DegenerateGeometryError: if aim_distance is not positive
        InfeasibleTripletError: if angle is outside [0, 120) degrees
    """
    if not aim_distance > 0:
        raise DegenerateGeometryError(f"aim distance must be positive, got {aim_distance}")
    if not 0.0 <= angle < MAX_TRIPLET_ANGLE:
        raise InfeasibleTripletError(f"no equilateral triplet realises a {angle} degree triangulation angle")
    position = np.asarray(position, dtype=float)
    orientation = np.asarray(orientation, dtype=float)
    orientation = orientation / np.linalg.norm(orientation)
    centers, rotations, aims, _ = triplet_layout(position, orientation, [aim_distance], [angle])
    cameras = tuple(
        Camera(intrinsics, CameraPose(rotations[0, 0, j], centers[0, 0, j]), f'{prefix}-{j}')
        for j in range(3)
    )
    return CameraTriplet(cameras=cameras, center=position.copy(), angle_bin=angle_bin, angle=float(angle),
                         aim_point=aims[0], surrogate=surrogate)


def make_triplet(surrogate: SurrogateCamera, aim_distance: float, angle_bin: int, config: PlannerConfig,
                 prefix: str = 'plan') -> CameraTriplet:
    if surrogate.orientation is None:
        raise ValueError(f"surrogate {surrogate.index} has no orientation yet")
    angle = float(config.bin_angles[angle_bin])
    return equilateral_triplet(surrogate.position, surrogate.orientation, aim_distance, angle,
                               config.intrinsics, prefix=f'{prefix}-s{surrogate.index}-b{angle_bin}',
                               angle_bin=angle_bin, surrogate=surrogate.index)


@dataclass
class TripletEvaluation:
    gain: float
    positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))  # visible target positions
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))  # f(t, c3) over `positions`
    renders: Dict[str, RenderResult] = field(default_factory=dict)


class TripletSearch:
    """
    Scores camera triplets against the selected targets of a fulfillment model.

    Args:
        model: FulfillmentModel holding captured and virtually appended cameras
        targets: positions of the selected targets T within the model
        dfield: DistanceField for the safety check
        config: PlannerConfig
        prefix: camera id prefix of generated triplets
    """

    def __init__(self, model, targets: np.ndarray, dfield, config: PlannerConfig, prefix: str = 'plan'):
        self.model = model
        self.targets = np.asarray(targets, dtype=np.int64)
        self.dfield = dfield
        self.config = config
        self.prefix = prefix
        self.best_evaluation: Optional[TripletEvaluation] = None

        covered = model.counts[self.targets] + 3 >= config.c
        self.upper = np.where(covered, np.maximum(model.confidence_upper(self.targets) - model.f[self.targets], 0.0), 0.0)
        self._scaled = config.intrinsics.scaled(config.render_downscale)

    # Geometry helpers

    def triplets_for(self, surrogate: SurrogateCamera) -> List[CameraTriplet]:
        return [make_triplet(surrogate, surrogate.aim_distance, b, self.config, self.prefix)
                for b in range(self.config.bins) if self.config.bin_angles[b] < MAX_TRIPLET_ANGLE]

    def _safe(self, centers: np.ndarray) -> np.ndarray:
        """Clearance test of camera centers (..., 3, 3) per triplet."""
        flat = centers.reshape(-1, 3)
        ok = np.all(np.isfinite(flat), axis=1)
        safe = np.zeros(len(flat), dtype=bool)
        safe[ok] = self.dfield.is_safe(flat[ok], self.config.safety_distance)
        return safe.reshape(centers.shape[:-1]).all(axis=-1)

    def _optimistic(self, centers: np.ndarray, rotations: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """Relaxed visibility ignoring occlusion, a superset of the rendered test.

        centers (..., 3, 3) and rotations (..., 3, 3, 3); returns (..., T).
        """
        points = self.model.centroids[positions]
        normals = self.model.normals[positions]
        rp = np.einsum('...jik,tk->...jti', rotations, points)
        rc = np.einsum('...jik,...jk->...ji', rotations, centers)
        local = rp - rc[..., None, :]
        z = local[..., 2]
        focal = self._scaled.focal_length
        px, py = self._scaled.principal_point
        with np.errstate(divide='ignore', invalid='ignore'):
            u = focal * local[..., 0] / z + px
            v = focal * local[..., 1] / z + py
        low = -0.5 - VISIBILITY_MARGIN
        inside = ((z > 0) & (u >= low) & (u <= self._scaled.width - 0.5 + VISIBILITY_MARGIN)
                  & (v >= low) & (v <= self._scaled.height - 0.5 + VISIBILITY_MARGIN))
        facing = np.einsum('...jk,tk->...jt', centers, normals) - np.einsum('tk,tk->t', normals, points) > -BOUND_SLACK
        return np.all(inside & facing, axis=-2)

    # Bounds and gains

    def coarse_bounds(self, surrogates: Sequence[SurrogateCamera]) -> np.ndarray:
        """(S, bins) upper bounds on triplet gain from relaxed visibility alone."""
        bounds = np.zeros((len(surrogates), self.config.bins))
        angles = self.config.bin_angles
        for start in range(0, len(surrogates), CHUNK_SURROGATES):
            chunk = surrogates[start:start + CHUNK_SURROGATES]
            positions = np.array([s.position for s in chunk])
            orientations = np.array([s.orientation for s in chunk])
            distances = np.array([s.aim_distance for s in chunk])
            centers, rotations, _, radii = triplet_layout(positions, orientations, distances, angles)
            visible = self._optimistic(centers, rotations, self.targets)
            values = visible.astype(float) @ self.upper
            usable = np.isfinite(radii) & self._safe(centers)
            bounds[start:start + len(chunk)] = np.where(usable, values, 0.0)
        return bounds

    def _gain(self, triplet: CameraTriplet, visible: np.ndarray) -> TripletEvaluation:
        positions = self.targets[visible]
        values = self.model.score_triplet(triplet.cameras, positions)[0]
        gain = float(np.maximum(values - self.model.f[positions], 0.0).sum())
        return TripletEvaluation(gain, positions, values)

    def optimistic_gain(self, triplet: CameraTriplet) -> float:
        centers = np.array([camera.center for camera in triplet.cameras])
        if not self._safe(centers[None])[0]:
            return -np.inf
        rotations = np.array([camera.rotation for camera in triplet.cameras])
        return self._gain(triplet, self._optimistic(centers, rotations, self.targets)).gain

    def evaluate(self, triplet: CameraTriplet) -> TripletEvaluation:
        """Gain summed over targets every camera of the triplet actually sees."""
        centers = np.array([camera.center for camera in triplet.cameras])
        if not self._safe(centers[None])[0]:
            return TripletEvaluation(-np.inf)
        triangles = self.model.triangles[self.targets]
        visible = np.ones(len(self.targets), dtype=bool)
        renders = {}
        for camera in triplet.cameras:
            render = render_depth(camera, self.model.mesh, self.config.render_downscale)
            renders[camera.id] = render
            visible &= visibility_mask(render, self.model.mesh, triangles)
        evaluation = self._gain(triplet, visible)
        evaluation.renders = renders
        return evaluation

    # Search

    def search(self, surrogates: Sequence[SurrogateCamera], prune: bool = True) -> Tuple[Optional[CameraTriplet], SearchReport]:
        """Best triplet over all oriented surrogates and angle bins.

        Ties go to the lower surrogate index, then the lower bin. None when
        no triplet has positive gain.
        """
        report = SearchReport(exhaustive=not prune, surrogates=len(surrogates))
        best: Optional[CameraTriplet] = None
        best_gain = 0.0
        self.best_evaluation = None

        def better(gain, key):
            if not gain > 0:
                return False
            if best is None or gain > best_gain:
                return True
            return gain == best_gain and key < best.key

        def promising(bound):
            return bound > 0 and (best is None or bound >= best_gain - BOUND_SLACK)

        if prune:
            bounds = self.coarse_bounds(surrogates)
            totals = bounds.max(axis=1) if len(surrogates) else np.zeros(0)
            order = np.argsort(-totals, kind='stable')
        else:
            bounds = totals = None
            order = np.arange(len(surrogates))

        for s in order:
            surrogate = surrogates[s]
            if prune and not promising(totals[s]):
                break
            report.visited += 1
            for triplet in self.triplets_for(surrogate):
                b = triplet.angle_bin
                if prune:
                    if not promising(bounds[s, b]):
                        report.pruned += 1
                        continue
                    optimistic = self.optimistic_gain(triplet)
                    report.bound_checks += 1
                    if optimistic > bounds[s, b] + BOUND_SLACK:
                        report.bound_violations += 1
                    if not promising(optimistic):
                        report.pruned += 1
                        continue
                evaluation = self.evaluate(triplet)
                report.evaluated += 1
                if prune and evaluation.gain > optimistic + BOUND_SLACK:
                    report.bound_violations += 1
                if better(evaluation.gain, triplet.key):
                    best = replace(triplet, gain=evaluation.gain)
                    best_gain = evaluation.gain
                    self.best_evaluation = evaluation

        if report.bound_violations:
            logger.warning(f"Triplet search saw {report.bound_violations} bound violations")
        if best is None:
            logger.info(f"No triplet with positive gain among {len(surrogates)} surrogates")
        else:
            logger.info(f"Best triplet: surrogate {best.surrogate}, bin {best.angle_bin} "
                        f"({best.angle:.1f} deg), gain {best.gain:.3f}; "
                        f"{report.evaluated} evaluated, {report.pruned} pruned")
        return best, report


def triplet_gain(triplet: CameraTriplet, search: TripletSearch) -> float:
    """Summed fulfillment gain of a triplet over the targets it sees; -inf if unsafe."""
    return search.evaluate(triplet).gain


def best_triplet(surrogates: Sequence[SurrogateCamera], search: TripletSearch,
                 prune: bool = True) -> Tuple[Optional[CameraTriplet], SearchReport]:
    return search.search(surrogates, prune=prune)
