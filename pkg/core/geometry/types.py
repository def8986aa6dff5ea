"""Camera, mesh and depthmap types shared by all viewforge apps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

INVALID_DEPTH = np.inf


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length: float
    principal_point: Tuple[float, float]
    image_size: Tuple[int, int]  # (width, height)

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError(f"focal_length must be positive, got {self.focal_length}")
        width, height = self.image_size
        if width < 1 or height < 1:
            raise ValueError(f"image_size components must be >= 1, got {self.image_size}")
        px, py = self.principal_point
        if not (0 <= px <= width and 0 <= py <= height):
            raise ValueError(f"principal point {self.principal_point} outside image {self.image_size}")

    @property
    def width(self) -> int:
        return int(self.image_size[0])

    @property
    def height(self) -> int:
        return int(self.image_size[1])

    @property
    def fov_degrees(self) -> Tuple[float, float]:
        """Horizontal and vertical field of view."""
        return (
            float(np.degrees(2 * np.arctan(self.width / (2 * self.focal_length)))),
            float(np.degrees(2 * np.arctan(self.height / (2 * self.focal_length)))),
        )

    def scaled(self, downscale: int) -> 'CameraIntrinsics':
        if downscale < 1:
            raise ValueError(f"downscale must be >= 1, got {downscale}")
        if downscale == 1:
            return self
        width = max(1, self.width // downscale)
        height = max(1, self.height // downscale)
        px = min(self.principal_point[0] / downscale, width)
        py = min(self.principal_point[1] / downscale, height)
        return CameraIntrinsics(self.focal_length / downscale, (px, py), (width, height))

    @classmethod
    def centered(cls, focal_length: float, width: int, height: int) -> 'CameraIntrinsics':
        return cls(float(focal_length), (width / 2.0, height / 2.0), (int(width), int(height)))

    @classmethod
    def from_settings(cls) -> 'CameraIntrinsics':
        """The physical camera model configured in VIEWFORGE_GEOMETRY."""
        model = getattr(settings, 'VIEWFORGE_GEOMETRY', {}).get('CAMERA_MODEL', {})
        return cls.centered(model.get('focal', 120.0), model.get('width', 160), model.get('height', 120))


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray  # world -> camera
    center: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        center = np.asarray(self.center, dtype=float).reshape(3)
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-9) or np.linalg.det(rotation) < 0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'center', center)

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[2]


@dataclass(frozen=True)
class Camera:
    intrinsics: CameraIntrinsics
    pose: CameraPose
    id: str

    @property
    def center(self) -> np.ndarray:
        return self.pose.center

    @property
    def rotation(self) -> np.ndarray:
        return self.pose.rotation

    @property
    def focal(self) -> float:
        return self.intrinsics.focal_length

    def with_id(self, camera_id: str) -> 'Camera':
        return replace(self, id=camera_id)


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    materials: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.materials is not None:
            self.materials = np.asarray(self.materials, dtype=np.int64).reshape(-1)
            if len(self.materials) != len(self.faces):
                raise ValueError("one material per face required")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) vertex coordinates per face."""
        return self.vertices[self.faces]

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        tri = self.triangles
        normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        if normalized:
            norm = np.linalg.norm(normals, axis=1, keepdims=True)
            normals = normals / np.where(norm > 0, norm, 1.0)
        return normals

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(normalized=False), axis=1)

    def centroids(self) -> np.ndarray:
        return self.triangles.mean(axis=1)

    def material_of(self, face_ids) -> np.ndarray:
        face_ids = np.asarray(face_ids, dtype=np.int64)
        if self.materials is None:
            return np.zeros(face_ids.shape, dtype=np.int64)
        return self.materials[face_ids]

    def submesh(self, face_ids: Sequence[int]) -> 'TriangleMesh':
        face_ids = np.asarray(face_ids, dtype=np.int64)
        materials = None if self.materials is None else self.materials[face_ids]
        return TriangleMesh(self.vertices.copy(), self.faces[face_ids].copy(), materials)

    def copy(self) -> 'TriangleMesh':
        materials = None if self.materials is None else self.materials.copy()
        return TriangleMesh(self.vertices.copy(), self.faces.copy(), materials)

    @classmethod
    def empty(cls) -> 'TriangleMesh':
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def concatenate(cls, meshes: Sequence['TriangleMesh']) -> 'TriangleMesh':
        vertices, faces, materials = [], [], []
        offset = 0
        for mesh in meshes:
            vertices.append(mesh.vertices)
            faces.append(mesh.faces + offset)
            materials.append(mesh.material_of(np.arange(mesh.n_faces)))
            offset += len(mesh.vertices)
        if not vertices:
            return cls.empty()
        return cls(np.vstack(vertices), np.vstack(faces), np.concatenate(materials))


@dataclass
class DepthMap:
    depths: np.ndarray  # (height, width); INVALID_DEPTH where nothing was measured
    camera_id: str
    downscale: int = 1

    @property
    def width(self) -> int:
        return int(self.depths.shape[1])

    @property
    def height(self) -> int:
        return int(self.depths.shape[0])

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.depths) & (self.depths > 0)


@dataclass
class RenderResult:
    """Depth buffer plus the parallel face-id buffer (-1 where empty)."""
    depth: DepthMap
    face_ids: np.ndarray
    camera: Camera


@dataclass(frozen=True)
class UncertaintyEstimate:
    covariance: np.ndarray
    u: float

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.u))


@dataclass(frozen=True)
class TripletSummary:
    mean_center: np.ndarray
    mean_focal: float
    camera_ids: Tuple[str, str, str]

    @classmethod
    def from_cameras(cls, cameras: Sequence[Camera]) -> 'TripletSummary':
        return cls(
            mean_center=np.mean([cam.center for cam in cameras], axis=0),
            mean_focal=float(np.mean([cam.focal for cam in cameras])),
            camera_ids=tuple(cam.id for cam in cameras),
        )


@dataclass
class VisibilityTable:
    """Triangle id -> ids of cameras that see the triangle's centroid."""
    links: dict = field(default_factory=dict)

    def cameras_for(self, triangle: int) -> set:
        return self.links.get(int(triangle), set())

    def __getitem__(self, triangle: int) -> set:
        return self.cameras_for(triangle)

    def __len__(self) -> int:
        return len(self.links)
