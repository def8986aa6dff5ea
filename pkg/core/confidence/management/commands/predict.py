"""Predict per-bin confidence images with a trained forest."""

from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.confidence.io import load_forest, write_confidence_image
from core.confidence.services import predict_grid
from core.exceptions import ViewforgeError
from core.geometry.io import read_image


class Command(BaseCommand):
    help = 'Evaluate a confidence forest on a regular pixel grid'

    def add_arguments(self, parser):
        parser.add_argument(
            '--forest',
            type=str,
            required=True,
            help='Forest file'
        )
        parser.add_argument(
            '--images',
            type=str,
            required=True,
            help='An image file or a directory of PNG images'
        )
        parser.add_argument(
            '--step',
            type=int,
            default=None,
            help='Grid step in pixels'
        )
        parser.add_argument(
            '--out',
            type=str,
            required=True,
            help='Output directory for confidence images'
        )

    def handle(self, *args, **options):
        step = options['step'] or getattr(settings, 'VIEWFORGE_CONFIDENCE', {}).get('GRID_STEP', 8)
        source = Path(options['images'])
        paths = sorted(source.glob('*.png')) if source.is_dir() else [source]
        out = Path(options['out'])
        out.mkdir(parents=True, exist_ok=True)
        try:
            forest = load_forest(options['forest'])
            for path in paths:
                image = predict_grid(forest, read_image(path), step=step, image_id=path.stem)
                write_confidence_image(out, image)
        except ViewforgeError as exc:
            raise CommandError(f'{exc.code}: {exc}')
        except ValueError as exc:
            raise CommandError(f'invalid-config: {exc}')

        self.stdout.write(self.style.SUCCESS(f'Predicted {len(paths)} confidence images (step {step}) into {out}'))
