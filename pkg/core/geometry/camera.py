"""
Pinhole projection, triangulation angles, uncertainty propagation and
ground resolution.

All functions are pure; the batched variants broadcast over leading axes
and are what the label generator, oracle and planner call in their inner
loops.
"""

import logging
from typing import NamedTuple, Optional, Sequence

import numpy as np

from core.exceptions import DegenerateGeometryError, SingularGeometryError
from .types import Camera, CameraIntrinsics, CameraPose, UncertaintyEstimate

logger = logging.getLogger(__name__)

MIN_DISTANCE = 1e-9
SINGULAR_RATIO = 1e-12


class Projection(NamedTuple):
    pixel: np.ndarray
    depth: float


def to_camera_frame(camera: Camera, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return (points - camera.center) @ camera.rotation.T


def project_points(camera: Camera, points: np.ndarray):
    """Project (N, 3) world points; returns pixels (N, 2) and depths (N,).

    Pixels of points with depth <= 0 are NaN.
    """
    local = to_camera_frame(camera, np.atleast_2d(points))
    depth = local[:, 2]
    with np.errstate(divide='ignore', invalid='ignore'):
        safe = np.where(depth > 0, depth, np.nan)
        u = camera.focal * local[:, 0] / safe + camera.intrinsics.principal_point[0]
        v = camera.focal * local[:, 1] / safe + camera.intrinsics.principal_point[1]
    return np.stack([u, v], axis=1), depth


def project_point(camera: Camera, point) -> Optional[Projection]:
    """Project one point; None marks a point on or behind the image plane."""
    pixels, depth = project_points(camera, np.asarray(point, dtype=float).reshape(1, 3))
    if depth[0] <= 0:
        return None
    return Projection(pixels[0], float(depth[0]))


def unproject_pixels(camera: Camera, pixels: np.ndarray, depths: np.ndarray) -> np.ndarray:
    """World points at the given optical-axis depths behind (N, 2) pixels."""
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    depths = np.asarray(depths, dtype=float).reshape(-1)
    px, py = camera.intrinsics.principal_point
    local = np.stack([
        (pixels[:, 0] - px) / camera.focal * depths,
        (pixels[:, 1] - py) / camera.focal * depths,
        depths,
    ], axis=1)
    return local @ camera.rotation + camera.center


def unproject_pixel(camera: Camera, pixel, depth: float) -> np.ndarray:
    return unproject_pixels(camera, np.asarray(pixel, dtype=float).reshape(1, 2), np.array([depth]))[0]


def pixel_rays(camera: Camera, pixels: np.ndarray) -> np.ndarray:
    """Camera-frame ray directions with unit z component."""
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    px, py = camera.intrinsics.principal_point
    return np.stack([
        (pixels[:, 0] - px) / camera.focal,
        (pixels[:, 1] - py) / camera.focal,
        np.ones(len(pixels)),
    ], axis=1)


def look_at_rotations(centers: np.ndarray, targets: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World->camera rotations (..., 3, 3) looking from centers toward targets.

    Image x follows the horizontal right direction; image y points down.
    Viewing directions parallel to `up` fall back to world +y as up.
    """
    centers = np.asarray(centers, dtype=float)
    targets = np.asarray(targets, dtype=float)
    z = targets - centers
    z = z / np.linalg.norm(z, axis=-1, keepdims=True)
    up = np.broadcast_to(np.asarray(up, dtype=float), z.shape)
    x = np.cross(z, up)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    fallback = np.cross(z, np.broadcast_to(np.array([0.0, 1.0, 0.0]), z.shape))
    x = np.where(norm > 1e-9, x, fallback)
    x = x / np.linalg.norm(x, axis=-1, keepdims=True)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=-2)


def look_at(intrinsics: CameraIntrinsics, center, target, camera_id: str) -> Camera:
    rotation = look_at_rotations(np.asarray(center, dtype=float), np.asarray(target, dtype=float))
    return Camera(intrinsics, CameraPose(rotation, np.asarray(center, dtype=float)), camera_id)


def triangulation_angles(center_a: np.ndarray, center_b: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Angles in degrees between rays point->a and point->b (broadcasting)."""
    ray_a = np.asarray(center_a, dtype=float) - points
    ray_b = np.asarray(center_b, dtype=float) - points
    cross = np.linalg.norm(np.cross(ray_a, ray_b), axis=-1)
    dot = np.sum(ray_a * ray_b, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def triangulation_angle(center_a, center_b, point) -> float:
    point = np.asarray(point, dtype=float)
    for center in (center_a, center_b):
        if np.linalg.norm(np.asarray(center, dtype=float) - point) <= MIN_DISTANCE:
            raise DegenerateGeometryError("point coincides with a camera center")
    return float(triangulation_angles(np.asarray(center_a), np.asarray(center_b), point))


def projection_jacobians(centers: np.ndarray, rotations: np.ndarray, focals, points: np.ndarray):
    """2x3 Jacobians of the pixel projection w.r.t. the world point.

    centers (..., 3), rotations (..., 3, 3), focals (...) and points (..., 3)
    broadcast together; returns (J (..., 2, 3), depth (...)).
    """
    local = np.einsum('...ij,...j->...i', rotations, points - centers)
    x, y, z = local[..., 0], local[..., 1], local[..., 2]
    focals = np.asarray(focals, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        inv_z = np.where(z > 0, 1.0 / z, np.nan)
        zero = np.zeros_like(x)
        d_local = np.stack([
            np.stack([inv_z, zero, -x * inv_z ** 2], axis=-1),
            np.stack([zero, inv_z, -y * inv_z ** 2], axis=-1),
        ], axis=-2) * focals[..., None, None]
    return np.einsum('...ij,...jk->...ik', d_local, rotations), z


def information_matrices(centers, rotations, focals, points) -> np.ndarray:
    """Per-camera J^T J (..., 3, 3); NaN for points behind the camera."""
    jac, _ = projection_jacobians(centers, rotations, focals, points)
    return np.einsum('...ji,...jk->...ik', jac, jac)


def symmetric_eigenvalues(matrices: np.ndarray) -> np.ndarray:
    """Closed-form ascending eigenvalues of symmetric 3x3 matrices (..., 3)."""
    a = matrices
    p1 = a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2
    q = (a[..., 0, 0] + a[..., 1, 1] + a[..., 2, 2]) / 3.0
    p2 = (a[..., 0, 0] - q) ** 2 + (a[..., 1, 1] - q) ** 2 + (a[..., 2, 2] - q) ** 2 + 2 * p1
    p = np.sqrt(p2 / 6.0)
    safe_p = np.where(p > 0, p, 1.0)
    b = (a - q[..., None, None] * np.eye(3)) / safe_p[..., None, None]
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    largest = q + 2 * p * np.cos(phi)
    smallest = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    middle = 3 * q - largest - smallest
    return np.stack([smallest, middle, largest], axis=-1)


def uncertainty_from_information(information: np.ndarray, pixel_noise_std: float = 1.0) -> np.ndarray:
    """u = sigma^2 / lambda_min(J^T J); inf where the system is singular or invalid."""
    eig = symmetric_eigenvalues(information)
    smallest, largest = eig[..., 0], eig[..., 2]
    valid = np.isfinite(smallest) & (largest > 0) & (smallest > SINGULAR_RATIO * np.abs(largest))
    with np.errstate(divide='ignore', invalid='ignore'):
        u = pixel_noise_std ** 2 / np.where(valid, smallest, np.nan)
    return np.where(valid, u, np.inf)


def point_uncertainty_batch(cameras: Sequence[Camera], points: np.ndarray,
                            pixel_noise_std: float = 1.0) -> np.ndarray:
    """Maximum covariance eigenvalue u for each of (N, 3) points.

    Points behind any camera, or with singular geometry, get u = inf.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    information = np.zeros((len(points), 3, 3))
    for camera in cameras:
        information += information_matrices(camera.center, camera.rotation, camera.focal, points)
    return uncertainty_from_information(information, pixel_noise_std)


def point_uncertainty(cameras: Sequence[Camera], point, pixel_noise_std: float = 1.0) -> UncertaintyEstimate:
    """First-order covariance of a triangulated point.

    Raises:
        SingularGeometryError: if J^T J is rank-deficient
        DegenerateGeometryError: if the point is not in front of every camera
    """
    if len(cameras) < 2:
        raise SingularGeometryError("at least two cameras are needed to triangulate")
    point = np.asarray(point, dtype=float).reshape(3)
    information = np.zeros((3, 3))
    for camera in cameras:
        jac, depth = projection_jacobians(camera.center, camera.rotation, camera.focal, point)
        if not depth > 0:
            raise DegenerateGeometryError(f"point is behind camera {camera.id}")
        information += jac.T @ jac
    eig = np.linalg.eigvalsh(information)
    if eig[0] <= SINGULAR_RATIO * eig[-1]:
        raise SingularGeometryError("triangulation geometry is singular (zero baseline?)")
    covariance = pixel_noise_std ** 2 * np.linalg.inv(information)
    covariance = 0.5 * (covariance + covariance.T)
    return UncertaintyEstimate(covariance=covariance, u=float(np.linalg.eigvalsh(covariance)[-1]))


def projected_areas(centers, rotations, focals, triangles: np.ndarray) -> np.ndarray:
    """Pixel area of triangles (..., 3, 3) projected into cameras.

    Zero for triangles that are back-facing or have a vertex behind the camera.
    """
    local = np.einsum('...ij,...vj->...vi', rotations, triangles - centers[..., None, :])
    z = local[..., 2]
    focals = np.asarray(focals, dtype=float)[..., None]
    with np.errstate(divide='ignore', invalid='ignore'):
        u = focals * local[..., 0] / z
        v = focals * local[..., 1] / z
    normals = np.cross(triangles[..., 1, :] - triangles[..., 0, :], triangles[..., 2, :] - triangles[..., 0, :])
    centroid = triangles.mean(axis=-2)
    facing = np.sum(normals * (centers - centroid), axis=-1) > 0
    area = 0.5 * np.abs((u[..., 1] - u[..., 0]) * (v[..., 2] - v[..., 0]) - (u[..., 2] - u[..., 0]) * (v[..., 1] - v[..., 0]))
    ok = facing & np.all(z > 0, axis=-1) & np.isfinite(area)
    return np.where(ok, area, 0.0)


def ground_resolution(camera: Camera, triangle) -> float:
    """Projected pixel area per square meter of surface; 0 if back-facing or behind."""
    triangle = np.asarray(triangle, dtype=float).reshape(3, 3)
    area3d = 0.5 * np.linalg.norm(np.cross(triangle[1] - triangle[0], triangle[2] - triangle[0]))
    if area3d <= 0:
        return 0.0
    return float(projected_areas(camera.center, camera.rotation, camera.focal, triangle) / area3d)
