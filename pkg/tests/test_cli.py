"""
Test the management commands end to end on small inputs.
"""
import json

import numpy as np
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from core.geometry.io import read_cameras, write_cameras, write_mesh_ply
from core.harness.io import write_log
from core.harness.patterns import ring_cameras
from core.harness.scenes import grid_mesh, read_scene
from core.harness.services import run_acquisition
from core.harness.types import HarnessConfig, OracleModel
from core.planner.io import read_plan
from core.planner.types import PlannerConfig


@pytest.fixture
def small_planner(settings):
    settings.VIEWFORGE_PLANNER = {
        **settings.VIEWFORGE_PLANNER,
        'N_T': 120, 'N_P': 40, 'N_V': 20, 'VIRTUAL_RESOLUTION': 24,
        'VOXEL_RESOLUTION': 0.1, 'SURROGATE_MARGIN': 1.0, 'O_MIN': 0.1, 'MAX_INSERTIONS': 20,
    }


@pytest.fixture
def snapshot_file(tmp_path):
    intrinsics = PlannerConfig.from_settings().intrinsics
    write_mesh_ply(tmp_path / 'mesh.ply', grid_mesh(-2.0, 2.0, -2.0, 2.0, 8, 8))
    write_cameras(tmp_path / 'cameras.json', ring_cameras(np.zeros(3), 1.5, 1.5, 6, intrinsics, 'ring'))
    path = tmp_path / 'snapshot.json'
    path.write_text(json.dumps({'cameras': 'cameras.json', 'mesh': 'mesh.ply'}))
    return path


class TestSceneCommand:

    def test_writes_scene_and_views(self, tmp_path):
        out = tmp_path / 'scene'
        call_command('scene', '--preset', 'plane', '--out', str(out))
        scene = read_scene(out)
        assert scene.preset == 'plane'
        cameras = read_cameras(out / 'cameras.json')
        assert len(cameras) == 2 * HarnessConfig.from_settings().training_views
        assert all((out / 'images' / f'{camera.id}.png').exists() for camera in cameras)

    def test_unknown_preset(self, tmp_path):
        with pytest.raises(CommandError, match='^unknown-preset'):
            call_command('scene', '--preset', 'volcano', '--out', str(tmp_path / 'scene'))


class TestPlanCommand:

    def test_writes_plan(self, tmp_path, small_planner, snapshot_file):
        out = tmp_path / 'plan.json'
        call_command('plan', '--snapshot', str(snapshot_file), '--np', '--k', '1', '--out', str(out))
        plan, echo = read_plan(out)
        assert echo['k'] == 1
        assert len(plan.cameras) == len(plan.roles)
        assert json.loads(out.read_text())['order'] == [camera.id for camera in plan.cameras]

    def test_invalid_config(self, tmp_path, small_planner, snapshot_file):
        with pytest.raises(CommandError, match='^invalid-config'):
            call_command('plan', '--snapshot', str(snapshot_file), '--k', '0', '--out', str(tmp_path / 'p.json'))

    def test_missing_mesh(self, tmp_path, small_planner, snapshot_file):
        (tmp_path / 'mesh.ply').unlink()
        with pytest.raises(CommandError, match='^bad-format'):
            call_command('plan', '--snapshot', str(snapshot_file), '--out', str(tmp_path / 'p.json'))


class TestEvaluateCommand:

    def test_metrics_from_log(self, tmp_path, settings, plane_scene):
        settings.VIEWFORGE_HARNESS = {**settings.VIEWFORGE_HARNESS, 'EVAL_MAX_EDGE': 0.25}
        log = run_acquisition('init', plane_scene, OracleModel(), config=HarnessConfig(init_views=4), seed=1)
        write_log(tmp_path / 'log.jsonl', log)
        call_command('evaluate', '--log', str(tmp_path / 'log.jsonl'), '--out', str(tmp_path / 'metrics.json'),
                     '--histogram', str(tmp_path / 'histogram.csv'))
        metrics = json.loads((tmp_path / 'metrics.json').read_text())
        assert metrics['images'] == len(log.cameras)
        assert (tmp_path / 'histogram.csv').read_text().startswith('bin_center,mass')

    def test_missing_log(self, tmp_path):
        with pytest.raises(CommandError, match='^bad-format'):
            call_command('evaluate', '--log', str(tmp_path / 'absent.jsonl'), '--out', str(tmp_path / 'm.json'))
