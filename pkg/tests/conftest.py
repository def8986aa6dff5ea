"""
Pytest configuration and shared fixtures for viewforge tests.
"""
import pytest
import os
import sys
from pathlib import Path

import numpy as np

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# Set Django settings module
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'viewforge.settings')

# Setup Django
import django
django.setup()

from core.geometry.camera import look_at
from core.geometry.types import Camera, CameraIntrinsics, CameraPose, TriangleMesh


@pytest.fixture
def intrinsics():
    """100 x 100 px pinhole with f = 100 and a centered principal point."""
    return CameraIntrinsics(100.0, (50.0, 50.0), (100, 100))


@pytest.fixture
def axis_camera(intrinsics):
    """Camera at the origin looking down +Z."""
    return Camera(intrinsics, CameraPose(np.eye(3), np.zeros(3)), 'axis')


@pytest.fixture
def make_camera(intrinsics):
    """Factory for cameras looking from `center` at `target`."""
    def _make(center, target=(0.0, 0.0, 0.0), camera_id='cam', camera_intrinsics=None):
        return look_at(camera_intrinsics or intrinsics, center, target, camera_id)
    return _make


@pytest.fixture
def square_mesh():
    """Factory for an axis-aligned square at depth z facing a camera at the origin."""
    def _square(z, half=10.0, material=0):
        vertices = np.array([
            [-half, -half, z],
            [half, -half, z],
            [half, half, z],
            [-half, half, z],
        ])
        faces = np.array([[0, 3, 2], [0, 2, 1]])
        return TriangleMesh(vertices, faces, np.full(2, material))
    return _square


@pytest.fixture
def ground_plane():
    """Upward-facing 4 x 4 m ground at z = 0 split into 8 x 8 cells."""
    from core.harness.scenes import grid_mesh
    return grid_mesh(-2.0, 2.0, -2.0, 2.0, 8, 8)


@pytest.fixture
def plane_scene():
    from core.harness.scenes import build_scene
    return build_scene('plane', 0)


@pytest.fixture
def rock_scene():
    from core.harness.scenes import build_scene
    return build_scene('rock', 0)
