"""Region of interest marked as an image polygon."""

import logging
from typing import Sequence

import numpy as np
from skimage.draw import polygon as polygon_pixels

from core.exceptions import EmptyRegionError
from core.geometry.render import render_depth
from core.geometry.types import Camera, TriangleMesh

logger = logging.getLogger(__name__)


def roi_from_polygon(camera: Camera, mesh: TriangleMesh, polygon: Sequence[Sequence[float]]) -> np.ndarray:
    """Ids of the faces rendered at pixels inside the polygon of one image.

    Raises:
        EmptyRegionError: if the polygon covers no surface
    """
    polygon = np.asarray(polygon, dtype=float).reshape(-1, 2)
    render = render_depth(camera, mesh)
    rows, cols = polygon_pixels(polygon[:, 1], polygon[:, 0], shape=render.face_ids.shape)
    faces = np.unique(render.face_ids[rows, cols])
    faces = faces[faces >= 0]
    if not len(faces):
        raise EmptyRegionError(f"polygon on image {camera.id} covers no mesh face")
    logger.info(f"Region of interest: {len(faces)} faces marked on image {camera.id}")
    return faces
