"""
Synthetic scenes.

Presets:
- plane: one smooth 2 x 2 m quad
- rock: smooth half-spheroid on rough ground, partly hidden under rough canopy blobs
"""

import json
import logging
from pathlib import Path
from typing import Callable, Dict

import numpy as np

from core.exceptions import FormatError, UnknownPresetError
from core.geometry.camera import unproject_pixels
from core.geometry.io import read_mesh_ply, write_mesh_ply
from core.geometry.render import render_depth
from core.geometry.types import Camera, TriangleMesh
from .types import MATERIAL_NAMES, ROUGH, SMOOTH, SyntheticScene

logger = logging.getLogger(__name__)

SKY = np.array([0.55, 0.68, 0.85])
SMOOTH_BASE = np.array([0.62, 0.58, 0.52])
ROUGH_BASE = np.array([0.22, 0.42, 0.16])
ROUGH_CELL = 0.01


def grid_mesh(xmin: float, xmax: float, ymin: float, ymax: float, nx: int, ny: int, z: float = 0.0,
              material: int = SMOOTH) -> TriangleMesh:
    """Upward-facing rectangle split into nx x ny cells of two triangles."""
    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing='ij')
    vertices = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)], axis=1)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing='ij')
    v00 = (i * (ny + 1) + j).ravel()
    v10 = ((i + 1) * (ny + 1) + j).ravel()
    v11 = v10 + 1
    v01 = v00 + 1
    faces = np.concatenate([np.stack([v00, v10, v11], axis=1), np.stack([v00, v11, v01], axis=1)])
    return TriangleMesh(vertices, faces, np.full(len(faces), material))


def spheroid_mesh(center, radii, n_lat: int, n_lon: int, half: bool = False,
                  material: int = SMOOTH) -> TriangleMesh:
    """Outward-facing spheroid; `half` keeps the part above the center (open at the bottom)."""
    center = np.asarray(center, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if half:
        lats = np.linspace(0.0, np.pi / 2, n_lat + 1)[:-1]
    else:
        lats = np.linspace(-np.pi / 2, np.pi / 2, n_lat + 1)[1:-1]
    lons = np.linspace(0.0, 2 * np.pi, n_lon, endpoint=False)
    lat, lon = np.meshgrid(lats, lons, indexing='ij')
    ring = np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)
    vertices = [center + radii * ring.reshape(-1, 3), center + radii * np.array([[0.0, 0.0, 1.0]])]
    top = len(lats) * n_lon

    def index(k, j):
        return k * n_lon + (j % n_lon)

    j = np.arange(n_lon)
    faces = []
    for k in range(len(lats) - 1):
        a, b, c, d = index(k, j), index(k, j + 1), index(k + 1, j + 1), index(k + 1, j)
        faces += [np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)]
    last = len(lats) - 1
    faces.append(np.stack([index(last, j), index(last, j + 1), np.full(n_lon, top)], axis=1))
    if not half:
        bottom = top + 1
        vertices.append(center + radii * np.array([[0.0, 0.0, -1.0]]))
        faces.append(np.stack([index(0, j), np.full(n_lon, bottom), index(0, j + 1)], axis=1))
    faces = np.concatenate(faces)
    return TriangleMesh(np.vstack(vertices), faces, np.full(len(faces), material))


def _plane(seed: int):
    mesh = grid_mesh(-1.0, 1.0, -1.0, 1.0, 1, 1, material=SMOOTH)
    return mesh, np.arange(mesh.n_faces)


def _rock(seed: int):
    rng = np.random.default_rng(seed)
    ground = grid_mesh(-1.6, 1.6, -1.6, 1.6, 16, 16, z=0.0, material=ROUGH)
    rock = spheroid_mesh((0.0, 0.0, -0.02), (0.8, 0.6, 0.5), n_lat=8, n_lon=32, half=True, material=SMOOTH)
    blobs = []
    for base in ((0.35, 0.2, 1.0), (-0.3, 0.3, 0.95)):
        center = np.asarray(base) + rng.uniform(-0.08, 0.08, 3)
        radii = 0.3 * (1.0 + rng.uniform(-0.1, 0.1, 3))
        blobs.append(spheroid_mesh(center, radii, n_lat=6, n_lon=12, material=ROUGH))
    mesh = TriangleMesh.concatenate([ground, rock, *blobs])
    roi = np.arange(ground.n_faces, ground.n_faces + rock.n_faces)
    return mesh, roi


PRESETS: Dict[str, Callable[[int], tuple]] = {
    'plane': _plane,
    'rock': _rock,
}


def build_scene(preset: str, seed: int = 0) -> SyntheticScene:
    """
    Build a named preset.

    Raises:
        UnknownPresetError: for names outside PRESETS
    """
    if preset not in PRESETS:
        raise UnknownPresetError(f"unknown scene preset {preset!r}; choose from {sorted(PRESETS)}")
    mesh, roi = PRESETS[preset](seed)
    logger.info(f"Built scene {preset!r} (seed {seed}): {mesh.n_faces} faces, {len(roi)} in the region")
    return SyntheticScene(preset=preset, seed=seed, mesh=mesh, roi=roi, ground_truth=mesh.copy())


def cell_noise(points: np.ndarray, cell: float, seed: int) -> np.ndarray:
    """Deterministic value in [0, 1) per cubic cell of size `cell`."""
    cells = np.floor(np.asarray(points, dtype=float) / cell).astype(np.int64).astype(np.uint64)
    h = cells[:, 0] * np.uint64(73856093) ^ cells[:, 1] * np.uint64(19349663) ^ cells[:, 2] * np.uint64(83492791)
    h ^= np.uint64(seed) * np.uint64(2654435761)
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    return (h >> np.uint64(40)).astype(np.float64) / float(1 << 24)


def surface_colors(scene: SyntheticScene, points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """RGB in [0, 1] of surface points: low-frequency shading on smooth faces,
    cell noise on rough faces."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    materials = scene.mesh.material_of(faces)
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    gradient = 0.08 * np.sin(2 * np.pi * x / 0.7) * np.cos(2 * np.pi * y / 0.9) + 0.05 * np.sin(2 * np.pi * z / 0.5)
    colors = SMOOTH_BASE[None, :] + gradient[:, None]
    rough = materials == ROUGH
    if rough.any():
        noise = cell_noise(points[rough], ROUGH_CELL, scene.seed)
        colors[rough] = ROUGH_BASE[None, :] * (0.55 + 0.9 * noise[:, None])
    return np.clip(colors, 0.0, 1.0)


def render_image(scene: SyntheticScene, camera: Camera) -> np.ndarray:
    """(H, W, 3) image of the textured scene; sky where no surface is hit."""
    render = render_depth(camera, scene.mesh)
    depth = render.depth.depths
    image = np.broadcast_to(SKY, depth.shape + (3,)).copy()
    rows, cols = np.nonzero(np.isfinite(depth))
    if len(rows):
        points = unproject_pixels(camera, np.stack([cols, rows], axis=1).astype(float), depth[rows, cols])
        image[rows, cols] = surface_colors(scene, points, render.face_ids[rows, cols])
    return image


def write_scene(directory, scene: SyntheticScene) -> None:
    """mesh.ply with per-face materials plus scene.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_mesh_ply(directory / 'mesh.ply', scene.mesh)
    (directory / 'scene.json').write_text(json.dumps({
        'preset': scene.preset,
        'seed': scene.seed,
        'mesh': 'mesh.ply',
        'roi': [int(t) for t in scene.roi],
        'materials': {str(k): v for k, v in MATERIAL_NAMES.items()},
    }, indent=2))
    logger.info(f"Wrote scene {scene.preset!r} to {directory}")


def read_scene(directory) -> SyntheticScene:
    directory = Path(directory)
    try:
        meta = json.loads((directory / 'scene.json').read_text())
        preset, seed, roi = meta['preset'], int(meta['seed']), meta['roi']
        mesh = read_mesh_ply(directory / meta.get('mesh', 'mesh.ply'))
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"cannot read scene from {directory}: {exc}") from exc
    return SyntheticScene(preset=preset, seed=seed, mesh=mesh, roi=np.asarray(roi, dtype=np.int64),
                          ground_truth=mesh.copy())
