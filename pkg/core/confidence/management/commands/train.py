"""Train a confidence forest on labeled images."""

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.confidence.forest import oob_accuracy
from core.confidence.io import save_forest
from core.confidence.services import train_from_labels
from core.confidence.types import ForestConfig
from core.exceptions import ViewforgeError
from core.geometry.io import read_image
from core.labelgen.io import read_label_images


class Command(BaseCommand):
    help = 'Train a confidence forest with angle-binned leaves'

    def add_arguments(self, parser):
        parser.add_argument(
            '--images',
            type=str,
            required=True,
            help='Directory of <image_id>.png images'
        )
        parser.add_argument(
            '--labels',
            type=str,
            required=True,
            help='Label directory written by genlabels'
        )
        parser.add_argument(
            '--trees',
            type=int,
            default=None,
            help='Number of trees'
        )
        parser.add_argument(
            '--bins',
            type=int,
            default=None,
            help='Angle bins per leaf'
        )
        parser.add_argument(
            '--gamma-max',
            type=float,
            default=None,
            help='Largest triangulation angle covered by the bins (degrees)'
        )
        parser.add_argument(
            '--cap',
            type=int,
            default=None,
            help='Samples per class'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Random seed'
        )
        parser.add_argument(
            '--out',
            type=str,
            required=True,
            help='Forest file to write'
        )

    def handle(self, *args, **options):
        overrides = {name: options[name] for name in ('trees', 'seed') if options[name] is not None}
        try:
            config = ForestConfig.from_settings(**overrides)
            labels = read_label_images(options['labels'])
            images = {}
            for image_id in labels:
                path = Path(options['images']) / f'{image_id}.png'
                if path.exists():
                    images[image_id] = read_image(path)
                else:
                    self.stdout.write(self.style.WARNING(f'No image for labels of {image_id}, skipped'))
            forest, samples = train_from_labels(images, labels, config, bins=options['bins'],
                                                gamma_max=options['gamma_max'], per_class_cap=options['cap'])
            save_forest(options['out'], forest)
        except ViewforgeError as exc:
            raise CommandError(f'{exc.code}: {exc}')
        except ValueError as exc:
            raise CommandError(f'invalid-config: {exc}')

        self.stdout.write(self.style.SUCCESS(
            f'Trained {len(forest.trees)} trees on {len(samples)} patches'
            f'\n  - out-of-bag accuracy {oob_accuracy(forest, samples):.1%}'
            f'\n  - written to {options["out"]}'
        ))
