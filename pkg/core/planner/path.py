"""Greedy ordering of planned cameras with registration-safe insertions."""

import logging
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from core.exceptions import RegistrationChainError
from core.geometry.render import image_overlap, render_depth
from core.geometry.types import Camera, CameraPose, RenderResult, TriangleMesh
from .types import ROLE_REGISTRATION, ROLE_TRIPLET, CameraTriplet, ViewPlan

logger = logging.getLogger(__name__)

BISECTION_STEPS = 8


def greedy_order(anchor: np.ndarray, centers: np.ndarray) -> List[int]:
    """Nearest-neighbour visiting order starting from `anchor` (ties to the lower index)."""
    remaining = list(range(len(centers)))
    order = []
    current = np.asarray(anchor, dtype=float)
    while remaining:
        dist = np.linalg.norm(centers[remaining] - current, axis=1)
        pick = remaining[int(np.argmin(dist))]
        order.append(pick)
        remaining.remove(pick)
        current = centers[pick]
    return order


def interpolate_pose(start: Camera, end: Camera, fraction: float, camera_id: str) -> Camera:
    """Linear position and spherical orientation interpolation."""
    center = (1.0 - fraction) * start.center + fraction * end.center
    slerp = Slerp([0.0, 1.0], Rotation.from_matrix(np.stack([start.rotation, end.rotation])))
    rotation = slerp([fraction]).as_matrix()[0]
    return Camera(end.intrinsics, CameraPose(rotation, center), camera_id)


class PathOptimizer:
    """
    Orders planned cameras and inserts registration poses where needed.

    Args:
        mesh: scene mesh the overlap is measured on
        o_min: required overlap with at least one earlier image
        is_safe: optional clearance test for inserted poses
        max_insertions: cap per target camera
    """

    def __init__(self, mesh: TriangleMesh, o_min: float, is_safe: Optional[Callable[[np.ndarray], bool]] = None,
                 max_insertions: int = 8):
        self.mesh = mesh
        self.o_min = o_min
        self.is_safe = is_safe
        self.max_insertions = max_insertions
        self.renders: Dict[str, RenderResult] = {}

    def _render(self, camera: Camera) -> RenderResult:
        render = self.renders.get(camera.id)
        if render is None:
            render = render_depth(camera, self.mesh)
            self.renders[camera.id] = render
        return render

    def overlap(self, camera: Camera, earlier: Camera) -> float:
        renders = {camera.id: self._render(camera), earlier.id: self._render(earlier)}
        return image_overlap(camera, earlier, self.mesh, renders=renders)

    def _nearest_first(self, camera: Camera, earlier: Sequence[Camera]) -> List[Camera]:
        if not earlier:
            return []
        centers = np.array([c.center for c in earlier])
        order = np.argsort(np.linalg.norm(centers - camera.center, axis=1), kind='stable')
        return [earlier[i] for i in order]

    def registered(self, camera: Camera, earlier: Sequence[Camera]) -> bool:
        """Overlap of at least o_min with any earlier camera (nearest checked first)."""
        return any(self.overlap(camera, e) >= self.o_min for e in self._nearest_first(camera, earlier))

    def anchor_for(self, target: Camera, earlier: Sequence[Camera]) -> Camera:
        """Nearest earlier camera sharing any view with `target`, else the nearest one."""
        ordered = self._nearest_first(target, earlier)
        for camera in ordered:
            if self.overlap(target, camera) > 0.0:
                return camera
        logger.debug(f"No earlier camera overlaps {target.id}; chaining from the nearest one")
        return ordered[0]

    def _step_toward(self, anchor: Camera, target: Camera, camera_id: str) -> Optional[Camera]:
        """Farthest pose along anchor -> target still overlapping the anchor."""
        lo, hi = 0.0, 1.0
        best = None
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            pose = interpolate_pose(anchor, target, mid, camera_id)
            self.renders.pop(camera_id, None)
            safe = self.is_safe is None or self.is_safe(pose.center)
            if safe and self.overlap(pose, anchor) >= self.o_min:
                lo, best = mid, pose
            else:
                hi = mid
        self.renders.pop(camera_id, None)
        return best

    def chain(self, target: Camera, earlier: List[Camera]) -> List[Camera]:
        """Registration poses leading from the earlier images to `target`.

        Raises:
            RegistrationChainError: if the cap is reached first
        """
        inserted: List[Camera] = []
        if self.registered(target, earlier):
            return inserted
        anchor = self.anchor_for(target, earlier)
        while len(inserted) < self.max_insertions:
            pose = self._step_toward(anchor, target, f'{target.id}-reg{len(inserted)}')
            if pose is None:
                break
            self._render(pose)
            inserted.append(pose)
            anchor = pose
            if self.registered(target, earlier + inserted):
                logger.debug(f"Camera {target.id} registered after {len(inserted)} insertions")
                return inserted
        raise RegistrationChainError(f"camera {target.id} cannot be chained to earlier images "
                                     f"within {self.max_insertions} insertions")

    def optimize(self, planned: Sequence[Camera], previous: Sequence[Camera]) -> ViewPlan:
        if not previous:
            raise ValueError("at least one previously captured camera is needed as anchor")
        anchor = previous[-1]
        centers = np.array([c.center for c in planned]).reshape(-1, 3)
        earlier = list(previous)
        cameras: List[Camera] = []
        roles: List[str] = []
        for index in greedy_order(anchor.center, centers):
            target = planned[index]
            for pose in self.chain(target, earlier):
                cameras.append(pose)
                roles.append(ROLE_REGISTRATION)
                earlier.append(pose)
            cameras.append(target)
            roles.append(ROLE_TRIPLET)
            earlier.append(target)

        waypoints = np.array([anchor.center] + [c.center for c in cameras])
        length = float(np.linalg.norm(np.diff(waypoints, axis=0), axis=1).sum())
        plan = ViewPlan(cameras=cameras, roles=roles, total_path_m=length)
        logger.info(f"Path over {len(planned)} planned cameras: {plan.registration_count} registration "
                    f"poses inserted, {length:.2f} m")
        return plan


def optimize_path(planned: Sequence[CameraTriplet], previous: Sequence[Camera], mesh: TriangleMesh,
                  o_min: float, is_safe: Optional[Callable[[np.ndarray], bool]] = None,
                  max_insertions: int = 8) -> ViewPlan:
    cameras = [camera for triplet in planned for camera in triplet.cameras]
    return PathOptimizer(mesh, o_min, is_safe, max_insertions).optimize(cameras, previous)


def verify_plan(plan: ViewPlan, previous: Sequence[Camera], mesh: TriangleMesh, o_min: float) -> List[str]:
    """Ids of plan cameras overlapping no earlier image by o_min (empty when the chain holds)."""
    checker = PathOptimizer(mesh, o_min)
    earlier = list(previous)
    failures = []
    for camera in plan.cameras:
        if not any(checker.overlap(camera, e) >= o_min for e in earlier):
            failures.append(camera.id)
        earlier.append(camera)
    return failures
