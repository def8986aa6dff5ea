"""Mesh refinement, smoothing and point-to-mesh distance."""

import logging
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from core.exceptions import EmptyRegionError
from .types import TriangleMesh

logger = logging.getLogger(__name__)

EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))


def edge_lengths(mesh: TriangleMesh, faces: Optional[np.ndarray] = None) -> np.ndarray:
    """(F, 3) lengths of edges (v0,v1), (v1,v2), (v2,v0)."""
    tri = mesh.vertices[mesh.faces if faces is None else mesh.faces[faces]]
    return np.stack([np.linalg.norm(tri[:, j] - tri[:, i], axis=1) for i, j in EDGE_PAIRS], axis=1)


def subdivide_roi(mesh: TriangleMesh, roi: Iterable[int],
                  max_edge: Optional[float] = None) -> Tuple[TriangleMesh, np.ndarray]:
    """Split roi triangles at their longest edge until no edge exceeds the bound.

    The bound is the average roi edge length before splitting unless
    `max_edge` is given. The first child of a split keeps the parent's id,
    the second is appended; midpoint vertices are shared between faces
    splitting the same edge.

    Returns:
        (mesh, roi ids in the returned mesh)
    """
    roi = np.unique(np.fromiter((int(t) for t in roi), dtype=np.int64))
    if not len(roi):
        raise EmptyRegionError("region of interest contains no triangles")

    target = float(edge_lengths(mesh, roi).mean()) if max_edge is None else float(max_edge)
    limit = target * (1 + 1e-12)
    vertices = [row for row in mesh.vertices]
    faces = mesh.faces.copy()
    materials = mesh.material_of(np.arange(mesh.n_faces))
    midpoints = {}
    appended_faces, appended_materials = [], []

    active = list(roi)
    new_ids = list(roi)
    face_rows = {int(t): faces[t].tolist() for t in roi}
    while active:
        next_active = []
        for t in active:
            a, b, c = face_rows[t]
            lengths = [np.linalg.norm(vertices[q] - vertices[p]) for p, q in ((a, b), (b, c), (c, a))]
            k = int(np.argmax(lengths))
            if lengths[k] <= limit:
                continue
            a, b, c = [(a, b, c), (b, c, a), (c, a, b)][k]
            key = (min(a, b), max(a, b))
            m = midpoints.get(key)
            if m is None:
                m = len(vertices)
                vertices.append(0.5 * (vertices[a] + vertices[b]))
                midpoints[key] = m
            child = mesh.n_faces + len(appended_faces)
            face_rows[t] = [a, m, c]
            face_rows[child] = [m, b, c]
            appended_faces.append(child)
            appended_materials.append(materials[t] if t < len(materials) else appended_materials[t - mesh.n_faces])
            new_ids.append(child)
            next_active.extend([t, child])
        active = next_active

    all_faces = np.vstack([faces, np.zeros((len(appended_faces), 3), dtype=np.int64)])
    for t, row in face_rows.items():
        all_faces[t] = row
    all_materials = None
    if mesh.materials is not None:
        all_materials = np.concatenate([materials, np.asarray(appended_materials, dtype=np.int64)])
    logger.debug(f"Subdivided {len(roi)} roi faces into {len(new_ids)} (edge bound {target:.4f} m)")
    return TriangleMesh(np.asarray(vertices), all_faces, all_materials), np.asarray(sorted(new_ids), dtype=np.int64)


def vertex_adjacency(mesh: TriangleMesh) -> sparse.csr_matrix:
    """Binary symmetric vertex adjacency built from face edges."""
    f = mesh.faces
    rows = np.concatenate([f[:, i] for i, j in EDGE_PAIRS] + [f[:, j] for i, j in EDGE_PAIRS])
    cols = np.concatenate([f[:, j] for i, j in EDGE_PAIRS] + [f[:, i] for i, j in EDGE_PAIRS])
    n = len(mesh.vertices)
    adjacency = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    adjacency.data[:] = 1.0
    return adjacency


def shrink_expand_mesh(mesh: TriangleMesh, iterations: int = 3, step: float = 0.5,
                       expand_factor: float = 2.0) -> Tuple[TriangleMesh, TriangleMesh]:
    """Shrink a mesh by neighbor smoothing and expand it by the reversed motion.

    Each smoothing iteration moves every vertex `step` of the way to the
    mean of its edge neighbors. The expanded mesh moves each shrunk vertex
    `expand_factor` times the neighborhood-averaged shrink motion in the
    opposite direction.
    """
    adjacency = vertex_adjacency(mesh)
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    has_neighbors = degree > 0
    safe_degree = np.where(has_neighbors, degree, 1.0)[:, None]

    shrunk = mesh.vertices.copy()
    for _ in range(iterations):
        average = adjacency @ shrunk / safe_degree
        shrunk = np.where(has_neighbors[:, None], shrunk + step * (average - shrunk), shrunk)

    motion = shrunk - mesh.vertices
    averaged = (adjacency @ motion + motion) / (degree + 1.0)[:, None]
    expanded = shrunk - expand_factor * averaged

    materials = None if mesh.materials is None else mesh.materials.copy()
    return (TriangleMesh(shrunk, mesh.faces.copy(), materials),
            TriangleMesh(expanded, mesh.faces.copy(), None if materials is None else materials.copy()))


def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point on triangle (a, b, c) to p, row-wise over (N, 3) arrays."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum('ij,ij->i', ab, ap)
    d2 = np.einsum('ij,ij->i', ac, ap)
    bp = p - b
    d3 = np.einsum('ij,ij->i', ab, bp)
    d4 = np.einsum('ij,ij->i', ac, bp)
    cp = p - c
    d5 = np.einsum('ij,ij->i', ab, cp)
    d6 = np.einsum('ij,ij->i', ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    def ratio(num, den):
        return (num / np.where(den != 0, den, 1.0))[:, None]

    denom = va + vb + vc
    on_ab = a + ratio(d1, d1 - d3) * ab
    on_ac = a + ratio(d2, d2 - d6) * ac
    on_bc = b + ratio(d4 - d3, (d4 - d3) + (d5 - d6)) * (c - b)
    inside = a + ratio(vb, denom) * ab + ratio(vc, denom) * ac

    conditions = [
        ((d1 <= 0) & (d2 <= 0))[:, None],
        ((d3 >= 0) & (d4 <= d3))[:, None],
        ((vc <= 0) & (d1 >= 0) & (d3 <= 0))[:, None],
        ((d6 >= 0) & (d5 <= d6))[:, None],
        ((vb <= 0) & (d2 >= 0) & (d6 <= 0))[:, None],
        ((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0))[:, None],
    ]
    return np.select(conditions, [a, b, on_ab, c, on_ac, on_bc], default=inside)


def nearest_faces(points: np.ndarray, mesh: TriangleMesh):
    """Exact distance from each point to the mesh and the id of the nearest face.

    Face ids are -1 (and distances inf) when the mesh is empty.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not mesh.n_faces or not len(points):
        return np.full(len(points), np.inf), np.full(len(points), -1, dtype=np.int64)
    tri = mesh.triangles
    centroids = tri.mean(axis=1)
    radius = float(np.linalg.norm(tri - centroids[:, None, :], axis=2).max())
    tree = cKDTree(centroids)
    nearest, _ = tree.query(points)
    candidates = tree.query_ball_point(points, nearest + radius + 1e-12)

    counts = np.fromiter((len(c) for c in candidates), dtype=np.int64, count=len(points))
    point_idx = np.repeat(np.arange(len(points)), counts)
    face_idx = np.fromiter((f for c in candidates for f in c), dtype=np.int64, count=int(counts.sum()))
    closest = closest_points_on_triangles(points[point_idx], tri[face_idx, 0], tri[face_idx, 1], tri[face_idx, 2])
    dist = np.linalg.norm(points[point_idx] - closest, axis=1)
    order = np.lexsort((face_idx, dist, point_idx))
    first = np.ones(len(order), dtype=bool)
    first[1:] = point_idx[order[1:]] != point_idx[order[:-1]]
    best = order[first]
    distances = np.full(len(points), np.inf)
    faces = np.full(len(points), -1, dtype=np.int64)
    distances[point_idx[best]] = dist[best]
    faces[point_idx[best]] = face_idx[best]
    return distances, faces


def point_mesh_distance(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Exact Euclidean distance from each point to the nearest mesh face."""
    return nearest_faces(points, mesh)[0]
