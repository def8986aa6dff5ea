"""
Software z-buffer rendering of triangle meshes plus the visibility and
overlap queries built on top of it.

Pixel (i, j) is sampled at the ray through pixel coordinates (i, j); a ray
is tested against every face whose projected bounding box contains it.
"""

import logging
from typing import Dict, Iterable, Optional, Sequence

import numpy as np
from django.conf import settings

from .camera import pixel_rays, project_points, unproject_pixels
from .types import INVALID_DEPTH, Camera, DepthMap, RenderResult, TriangleMesh, VisibilityTable

logger = logging.getLogger(__name__)

NEAR_PLANE = 1e-6
EDGE_EPSILON = 1e-9
CHUNK_PAIRS = 2_000_000


def _geometry_setting(name: str, default):
    return getattr(settings, 'VIEWFORGE_GEOMETRY', {}).get(name, default)


def _face_bounds(local: np.ndarray, focal: float, principal_point, width: int, height: int):
    """Clamped pixel bounding boxes (F, 4) of camera-frame triangles (F, 3, 3).

    Faces straddling the near plane are clipped first; faces fully behind it
    get an empty box.
    """
    z = local[..., 2]
    front = z > NEAR_PLANE
    points = [local]
    masks = [front]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        zi, zj = z[:, i], z[:, j]
        crossing = (zi > NEAR_PLANE) != (zj > NEAR_PLANE)
        with np.errstate(divide='ignore', invalid='ignore'):
            t = np.where(crossing, (NEAR_PLANE - zi) / (zj - zi), 0.0)
        clipped = local[:, i] + t[:, None] * (local[:, j] - local[:, i])
        clipped[:, 2] = NEAR_PLANE
        points.append(clipped[:, None, :])
        masks.append(crossing[:, None])
    candidates = np.concatenate(points, axis=1)
    valid = np.concatenate(masks, axis=1)

    safe_z = np.where(valid, candidates[..., 2], 1.0)
    u = focal * candidates[..., 0] / safe_z + principal_point[0]
    v = focal * candidates[..., 1] / safe_z + principal_point[1]
    u_min = np.where(valid, u, np.inf).min(axis=1)
    u_max = np.where(valid, u, -np.inf).max(axis=1)
    v_min = np.where(valid, v, np.inf).min(axis=1)
    v_max = np.where(valid, v, -np.inf).max(axis=1)

    any_front = front.any(axis=1)
    with np.errstate(invalid='ignore'):
        x0 = np.clip(np.ceil(u_min - EDGE_EPSILON), 0, width)
        x1 = np.clip(np.floor(u_max + EDGE_EPSILON), -1, width - 1)
        y0 = np.clip(np.ceil(v_min - EDGE_EPSILON), 0, height)
        y1 = np.clip(np.floor(v_max + EDGE_EPSILON), -1, height - 1)
    bounds = np.stack([x0, x1, y0, y1], axis=1)
    bounds = np.where(np.isfinite(bounds), bounds, 0).astype(np.int64)
    bounds[~any_front] = (0, -1, 0, -1)
    return bounds


def _intersect(local: np.ndarray, faces: np.ndarray, rays: np.ndarray):
    """Möller–Trumbore against rays from the camera center; returns (hit, t)."""
    v0 = local[faces, 0]
    e1 = local[faces, 1] - v0
    e2 = local[faces, 2] - v0
    pvec = np.cross(rays, e2)
    det = np.einsum('ij,ij->i', e1, pvec)
    ok = np.abs(det) > 1e-15
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = -v0
    bu = np.einsum('ij,ij->i', tvec, pvec) * inv_det
    qvec = np.cross(tvec, e1)
    bv = np.einsum('ij,ij->i', rays, qvec) * inv_det
    t = np.einsum('ij,ij->i', e2, qvec) * inv_det
    hit = ok & (bu >= -EDGE_EPSILON) & (bv >= -EDGE_EPSILON) & (bu + bv <= 1 + EDGE_EPSILON) & (t > NEAR_PLANE)
    return hit, t


def render_depth(camera: Camera, mesh: TriangleMesh, downscale: int = 1) -> RenderResult:
    """Render optical-axis depth and face ids of `mesh` as seen by `camera`."""
    if downscale < 1:
        raise ValueError(f"downscale must be >= 1, got {downscale}")
    intrinsics = camera.intrinsics.scaled(downscale)
    scaled = Camera(intrinsics, camera.pose, camera.id)
    width, height = intrinsics.width, intrinsics.height
    depth = np.full(height * width, INVALID_DEPTH)
    face_ids = np.full(height * width, -1, dtype=np.int64)

    if mesh.n_faces:
        local = (mesh.vertices - camera.center) @ camera.rotation.T
        tri = local[mesh.faces]
        bounds = _face_bounds(tri, intrinsics.focal_length, intrinsics.principal_point, width, height)
        widths = np.maximum(bounds[:, 1] - bounds[:, 0] + 1, 0)
        heights = np.maximum(bounds[:, 3] - bounds[:, 2] + 1, 0)
        counts = widths * heights
        candidates = np.flatnonzero(counts)

        # chunk faces so the (face, pixel) pair arrays stay bounded
        cumulative = np.cumsum(counts[candidates])
        start = 0
        while start < len(candidates):
            limit = (cumulative[start - 1] if start else 0) + CHUNK_PAIRS
            stop = max(start + 1, int(np.searchsorted(cumulative, limit, side='right')))
            chunk = candidates[start:stop]
            start = stop

            n = counts[chunk]
            pair_face = np.repeat(chunk, n)
            offsets = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
            w = np.repeat(widths[chunk], n)
            cols = np.repeat(bounds[chunk, 0], n) + offsets % w
            rows = np.repeat(bounds[chunk, 2], n) + offsets // w
            rays = pixel_rays(scaled, np.stack([cols, rows], axis=1))
            hit, t = _intersect(tri, pair_face, rays)
            if not hit.any():
                continue
            pix = rows[hit] * width + cols[hit]
            cand_faces = pair_face[hit]
            cand_depth = t[hit]
            # fold the running buffer in so earlier chunks compete too
            known = np.flatnonzero(face_ids >= 0)
            pix = np.concatenate([pix, known])
            cand_faces = np.concatenate([cand_faces, face_ids[known]])
            cand_depth = np.concatenate([cand_depth, depth[known]])
            order = np.lexsort((cand_faces, cand_depth, pix))
            pix, cand_faces, cand_depth = pix[order], cand_faces[order], cand_depth[order]
            _, first = np.unique(pix, return_index=True)
            depth[pix[first]] = cand_depth[first]
            face_ids[pix[first]] = cand_faces[first]

    logger.debug(f"Rendered camera {camera.id}: {np.count_nonzero(face_ids >= 0)} covered pixels")
    return RenderResult(
        depth=DepthMap(depth.reshape(height, width), camera.id, downscale),
        face_ids=face_ids.reshape(height, width),
        camera=scaled,
    )


def visibility_mask(render: RenderResult, mesh: TriangleMesh, triangles: np.ndarray,
                    depth_agreement: Optional[float] = None) -> np.ndarray:
    """Which of `triangles` have their centroid visible in a rendered camera."""
    if depth_agreement is None:
        depth_agreement = _geometry_setting('DEPTH_AGREEMENT', 0.01)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1)
    if not len(triangles):
        return np.zeros(0, dtype=bool)
    camera = render.camera
    tri = mesh.triangles[triangles]
    centroids = tri.mean(axis=1)
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    facing = np.einsum('ij,ij->i', normals, camera.center - centroids) > 0

    pixels, depth = project_points(camera, centroids)
    in_front = depth > NEAR_PLANE
    cols = np.rint(np.where(in_front, pixels[:, 0], -1)).astype(np.int64)
    rows = np.rint(np.where(in_front, pixels[:, 1], -1)).astype(np.int64)
    inside = in_front & (cols >= 0) & (cols < camera.intrinsics.width) & (rows >= 0) & (rows < camera.intrinsics.height)

    visible = np.zeros(len(triangles), dtype=bool)
    idx = np.flatnonzero(inside & facing)
    buffer_ids = render.face_ids[rows[idx], cols[idx]]
    buffer_depth = render.depth.depths[rows[idx], cols[idx]]
    same_face = buffer_ids == triangles[idx]
    agrees = np.abs(buffer_depth - depth[idx]) <= depth_agreement * depth[idx]
    visible[idx] = same_face | agrees
    return visible


def compute_visibility(mesh: TriangleMesh, triangles: Iterable[int], cameras: Sequence[Camera],
                       downscale: int = 1, renders: Optional[Dict[str, RenderResult]] = None) -> VisibilityTable:
    """Triangle id -> ids of cameras that see the triangle's centroid.

    `renders` may hold precomputed renders keyed by camera id.
    """
    triangles = np.fromiter((int(t) for t in triangles), dtype=np.int64)
    table = VisibilityTable({int(t): set() for t in triangles})
    for camera in cameras:
        render = renders.get(camera.id) if renders else None
        if render is None:
            render = render_depth(camera, mesh, downscale)
        for t in triangles[visibility_mask(render, mesh, triangles)]:
            table.links[int(t)].add(camera.id)
    return table


def _sample_grid(size: int, grid: int) -> np.ndarray:
    return np.unique(np.clip(np.rint((np.arange(grid) + 0.5) * size / grid - 0.5), 0, size - 1).astype(np.int64))


def image_overlap(cam_a: Camera, cam_b: Camera, mesh: TriangleMesh,
                  renders: Optional[Dict[str, RenderResult]] = None, grid: Optional[int] = None) -> float:
    """Fraction of a grid of a's pixels whose surface point is seen unoccluded by b."""
    if grid is None:
        grid = _geometry_setting('OVERLAP_GRID', 32)
    renders = renders if renders is not None else {}
    render_a = renders.get(cam_a.id) or render_depth(cam_a, mesh)
    render_b = renders.get(cam_b.id) or render_depth(cam_b, mesh)

    cols = _sample_grid(cam_a.intrinsics.width, grid)
    rows = _sample_grid(cam_a.intrinsics.height, grid)
    cc, rr = np.meshgrid(cols, rows)
    cc, rr = cc.ravel(), rr.ravel()
    depth_a = render_a.depth.depths[rr, cc]
    valid = np.isfinite(depth_a)
    if not valid.any():
        return 0.0

    points = unproject_pixels(cam_a, np.stack([cc[valid], rr[valid]], axis=1), depth_a[valid])
    pixels, depth_b = project_points(cam_b, points)
    in_front = depth_b > NEAR_PLANE
    col_b = np.rint(np.where(in_front, pixels[:, 0], -1)).astype(np.int64)
    row_b = np.rint(np.where(in_front, pixels[:, 1], -1)).astype(np.int64)
    inside = in_front & (col_b >= 0) & (col_b < cam_b.intrinsics.width) & (row_b >= 0) & (row_b < cam_b.intrinsics.height)
    seen = np.zeros(len(points), dtype=bool)
    idx = np.flatnonzero(inside)
    tolerance = 1.0 + _geometry_setting('DEPTH_AGREEMENT', 0.01)
    seen[idx] = depth_b[idx] <= render_b.depth.depths[row_b[idx], col_b[idx]] * tolerance
    return float(seen.mean())
