"""Snapshot, region and plan files of the planner."""

import json
import logging
from pathlib import Path
from typing import Optional, Tuple

from django.conf import settings

from core.confidence.io import load_forest, read_confidence_images
from core.confidence.services import predict_grid
from core.exceptions import FormatError
from core.geometry.io import read_cameras, read_image, read_mesh_ply
from core.geometry.serializers import cameras_to_list, parse_cameras
from .lookup import ConfidenceMaps, ConstantConfidence
from .roi import roi_from_polygon
from .serializers import PlanSerializer, RoiSerializer, SnapshotSerializer, validated
from .types import PlannerConfig, PlanningSnapshot, ViewPlan

logger = logging.getLogger(__name__)


def _read_json(path) -> object:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}")


def load_snapshot(path, forest_path=None, config: Optional[PlannerConfig] = None) -> PlanningSnapshot:
    """Read a snapshot file and resolve its confidence source.

    Confidence images listed by the snapshot win; otherwise the forest is run
    on the snapshot images; with neither, every image predicts 1.
    """
    config = config or PlannerConfig.from_settings()
    path = Path(path)
    base = path.parent
    data = validated(SnapshotSerializer, _read_json(path), 'snapshot')

    cameras = data['cameras']
    cameras = read_cameras(base / cameras) if isinstance(cameras, str) else parse_cameras(cameras)
    mesh = read_mesh_ply(base / data['mesh'])
    roi = data['roi'] if data['roi'] is not None else list(range(mesh.n_faces))

    if data['confidences']:
        confidences = ConfidenceMaps(read_confidence_images(base / data['confidences']))
    elif forest_path is not None and data['images']:
        forest = load_forest(forest_path)
        step = getattr(settings, 'VIEWFORGE_CONFIDENCE', {}).get('GRID_STEP', 8)
        images = {
            image_id: predict_grid(forest, read_image(base / image_path), step=step, image_id=image_id)
            for image_id, image_path in data['images'].items()
        }
        confidences = ConfidenceMaps(images)
    else:
        logger.warning("No confidence source in snapshot; planning with constant confidence")
        confidences = ConstantConfidence(1.0, config.bins, config.gamma_max)
    logger.info(f"Snapshot {path}: {len(cameras)} cameras, {mesh.n_faces} faces, {len(roi)} region faces")
    return PlanningSnapshot(cameras=cameras, mesh=mesh, roi=roi, confidences=confidences)


def read_roi(path, snapshot: PlanningSnapshot):
    """Map a region polygon file onto snapshot mesh faces."""
    data = validated(RoiSerializer, _read_json(path), 'region of interest')
    cameras = {camera.id: camera for camera in snapshot.cameras}
    if data['image_id'] not in cameras:
        raise FormatError(f"region refers to unknown image {data['image_id']}")
    return roi_from_polygon(cameras[data['image_id']], snapshot.mesh, data['polygon'])


def plan_to_dict(plan: ViewPlan, config: PlannerConfig, seed: int) -> dict:
    return {
        'cameras': cameras_to_list(plan.cameras),
        'roles': list(plan.roles),
        'order': [camera.id for camera in plan.cameras],
        'total_path_m': plan.total_path_m,
        'config_echo': config.as_dict(),
        'seed': seed,
    }


def write_plan(path, plan: ViewPlan, config: PlannerConfig, seed: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(plan_to_dict(plan, config, seed), handle, indent=2)


def read_plan(path) -> Tuple[ViewPlan, dict]:
    """Plan and its config echo."""
    data = validated(PlanSerializer, _read_json(path), 'plan')
    cameras = [item['camera'] for item in data['cameras']]
    return ViewPlan(cameras=cameras, roles=list(data['roles']), total_path_m=data['total_path_m']), data['config_echo']
