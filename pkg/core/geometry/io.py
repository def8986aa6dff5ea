"""
File formats: ASCII PLY meshes and point clouds, PFM depth planes,
camera JSON, PGM label images and PNG color images.
"""

import json
import logging
from pathlib import Path
from typing import BinaryIO, List, Sequence, Union

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement

from core.exceptions import FormatError
from .serializers import cameras_to_list, parse_cameras
from .types import Camera, DepthMap, TriangleMesh

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_mesh_ply(path: PathLike, mesh: TriangleMesh) -> None:
    vertex = np.empty(len(mesh.vertices), dtype=[('x', 'f8'), ('y', 'f8'), ('z', 'f8')])
    vertex['x'], vertex['y'], vertex['z'] = mesh.vertices.T
    face_dtype = [('vertex_indices', 'i4', (3,))]
    if mesh.materials is not None:
        face_dtype.append(('material', 'i4'))
    face = np.empty(mesh.n_faces, dtype=face_dtype)
    face['vertex_indices'] = mesh.faces
    if mesh.materials is not None:
        face['material'] = mesh.materials
    elements = [
        PlyElement.describe(vertex, 'vertex'),
        PlyElement.describe(face, 'face', len_types={'vertex_indices': 'u1'}),
    ]
    PlyData(elements, text=True).write(str(_ensure_parent(path)))
    logger.debug(f"Wrote mesh with {mesh.n_faces} faces to {path}")


def read_mesh_ply(path: PathLike) -> TriangleMesh:
    try:
        ply = PlyData.read(str(path))
        vertex = ply['vertex']
        vertices = np.stack([vertex['x'], vertex['y'], vertex['z']], axis=1).astype(float)
        if 'face' in ply:
            face = ply['face']
            faces = np.vstack([np.asarray(row, dtype=np.int64) for row in face['vertex_indices']]) \
                if face.count else np.zeros((0, 3), dtype=np.int64)
            names = face.data.dtype.names or ()
            materials = np.asarray(face['material'], dtype=np.int64) if 'material' in names else None
        else:
            faces, materials = np.zeros((0, 3), dtype=np.int64), None
        return TriangleMesh(vertices, faces, materials)
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"cannot read mesh {path}: {exc}") from exc


def write_points_ply(path: PathLike, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    vertex = np.empty(len(points), dtype=[('x', 'f8'), ('y', 'f8'), ('z', 'f8')])
    vertex['x'], vertex['y'], vertex['z'] = points.T
    PlyData([PlyElement.describe(vertex, 'vertex')], text=True).write(str(_ensure_parent(path)))


def read_points_ply(path: PathLike) -> np.ndarray:
    try:
        vertex = PlyData.read(str(path))['vertex']
        return np.stack([vertex['x'], vertex['y'], vertex['z']], axis=1).astype(float)
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"cannot read point cloud {path}: {exc}") from exc


def _write_pfm_plane(handle: BinaryIO, data: np.ndarray) -> None:
    height, width = data.shape
    handle.write(f"Pf\n{width} {height}\n-1.0\n".encode('ascii'))
    handle.write(np.flipud(data).astype('<f4').tobytes())


def _read_pfm_plane(handle: BinaryIO) -> np.ndarray:
    header = handle.readline().decode('ascii').rstrip()
    if header != 'Pf':
        raise FormatError(f"expected a grayscale PFM plane, got header {header!r}")
    dims = handle.readline().decode('ascii').strip()
    while dims.startswith('#'):
        dims = handle.readline().decode('ascii').strip()
    width, height = map(int, dims.split())
    scale = float(handle.readline().decode('ascii').strip())
    count = width * height
    data = np.frombuffer(handle.read(4 * count), dtype='<f4' if scale < 0 else '>f4')
    if data.size != count:
        raise FormatError("truncated PFM data")
    return np.flipud(data.reshape(height, width)).astype(float)


def write_pfm(path: PathLike, data: np.ndarray) -> None:
    """Little-endian PFM, scale -1.0; +inf marks invalid pixels."""
    with open(_ensure_parent(path), 'wb') as handle:
        _write_pfm_plane(handle, np.asarray(data))


def read_pfm(path: PathLike) -> np.ndarray:
    with open(path, 'rb') as handle:
        return _read_pfm_plane(handle)


def write_pfm_planes(path: PathLike, planes: Sequence[np.ndarray]) -> None:
    """Several PFM planes concatenated in one file."""
    with open(_ensure_parent(path), 'wb') as handle:
        for plane in planes:
            _write_pfm_plane(handle, np.asarray(plane))


def read_pfm_planes(path: PathLike, count: int) -> List[np.ndarray]:
    with open(path, 'rb') as handle:
        return [_read_pfm_plane(handle) for _ in range(count)]


def write_depthmap(path: PathLike, depthmap: DepthMap) -> None:
    write_pfm(path, depthmap.depths)


def read_depthmap(path: PathLike, camera_id: str, downscale: int = 1) -> DepthMap:
    return DepthMap(read_pfm(path), camera_id, downscale)


def write_cameras(path: PathLike, cameras: Sequence[Camera]) -> None:
    _ensure_parent(path).write_text(json.dumps(cameras_to_list(cameras), indent=2))


def read_cameras(path: PathLike) -> List[Camera]:
    try:
        records = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read cameras {path}: {exc}") from exc
    return parse_cameras(records)


def write_pgm(path: PathLike, data: np.ndarray) -> None:
    Image.fromarray(np.asarray(data, dtype=np.uint8)).save(str(_ensure_parent(path)), format='PPM')


def read_pgm(path: PathLike) -> np.ndarray:
    try:
        with Image.open(str(path)) as image:
            return np.array(image.convert('L'), dtype=np.uint8)
    except OSError as exc:
        raise FormatError(f"cannot read PGM {path}: {exc}") from exc


def write_image(path: PathLike, rgb: np.ndarray) -> None:
    """Save an (H, W, 3) float image in [0, 1] as 8-bit PNG."""
    data = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(str(_ensure_parent(path)))


def read_image(path: PathLike) -> np.ndarray:
    try:
        with Image.open(str(path)) as image:
            return np.asarray(image.convert('RGB'), dtype=float) / 255.0
    except OSError as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
