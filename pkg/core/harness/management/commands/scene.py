"""Build a synthetic scene and render its training views."""

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ViewforgeError
from core.geometry.io import write_cameras, write_image
from core.harness.scenes import build_scene, render_image, write_scene
from core.harness.services import training_cameras
from core.harness.types import HarnessConfig
from core.planner.types import PlannerConfig


class Command(BaseCommand):
    help = 'Write a synthetic scene with rendered training images'

    def add_arguments(self, parser):
        parser.add_argument(
            '--preset',
            type=str,
            default='rock',
            help='Scene preset (plane, rock)'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=0,
            help='Scene seed'
        )
        parser.add_argument(
            '--out',
            type=str,
            required=True,
            help='Output directory'
        )

    def handle(self, *args, **options):
        out = Path(options['out'])
        try:
            scene = build_scene(options['preset'], options['seed'])
            write_scene(out, scene)
            cameras = training_cameras(scene, HarnessConfig.from_settings(), PlannerConfig.from_settings().intrinsics)
            write_cameras(out / 'cameras.json', cameras)
            for camera in cameras:
                write_image(out / 'images' / f'{camera.id}.png', render_image(scene, camera))
        except ViewforgeError as exc:
            raise CommandError(f'{exc.code}: {exc}')
        except ValueError as exc:
            raise CommandError(f'invalid-config: {exc}')

        self.stdout.write(self.style.SUCCESS(
            f'Scene {scene.preset} (seed {scene.seed}) written to {out}'
            f'\n  - {scene.mesh.n_faces} faces, {len(scene.roi)} in the region of interest'
            f'\n  - {len(cameras)} training views'
        ))
