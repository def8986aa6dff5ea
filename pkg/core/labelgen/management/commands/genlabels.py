"""Generate self-supervised MVS labels for a calibrated image set."""

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ViewforgeError
from core.geometry.io import read_cameras, read_mesh_ply
from core.labelgen.backends import RecordedBackend
from core.labelgen.io import write_label_set
from core.labelgen.services import generate_labels
from core.labelgen.types import LabelGenConfig


class Command(BaseCommand):
    help = 'Generate positive/negative pixel labels from triplet reconstructions'

    def add_arguments(self, parser):
        parser.add_argument(
            '--cameras',
            type=str,
            required=True,
            help='Camera JSON file'
        )
        parser.add_argument(
            '--mesh',
            type=str,
            required=True,
            help='Scene mesh (PLY)'
        )
        parser.add_argument(
            '--backend',
            choices=['oracle', 'recorded'],
            default='oracle',
            help='MVS backend'
        )
        parser.add_argument(
            '--scene',
            type=str,
            default=None,
            help='Scene directory of the oracle backend'
        )
        parser.add_argument(
            '--recorded',
            type=str,
            default=None,
            help='Directory of per-triplet PLY reconstructions for the recorded backend'
        )
        parser.add_argument(
            '--bins',
            type=int,
            default=None,
            help='Number of triangulation angle bins'
        )
        parser.add_argument(
            '--alpha0',
            type=float,
            default=None,
            help='Lower edge of the first angle bin in degrees'
        )
        parser.add_argument(
            '--per-bin',
            type=int,
            default=None,
            help='Triplets sampled per bin'
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
            help='Output directory for label images'
        )

    def handle(self, *args, **options):
        overrides = {
            name: options[key]
            for name, key in (('bins', 'bins'), ('alpha0', 'alpha0'), ('per_bin', 'per_bin'), ('seed', 'seed'))
            if options[key] is not None
        }
        try:
            config = LabelGenConfig.from_settings(**overrides)
            cameras = read_cameras(options['cameras'])
            mesh = read_mesh_ply(options['mesh'])
            ground_truth = None
            if options['backend'] == 'oracle':
                if not options['scene']:
                    raise CommandError('--scene is required by the oracle backend')
                from core.harness.oracle import OracleBackend
                from core.harness.scenes import read_scene
                from core.harness.types import OracleModel
                scene = read_scene(options['scene'])
                backend = OracleBackend(scene, OracleModel.from_settings(), seed=config.seed)
                ground_truth = scene.ground_truth
            else:
                if not options['recorded']:
                    raise CommandError('--recorded is required by the recorded backend')
                backend = RecordedBackend(options['recorded'])

            label_set = generate_labels(cameras, mesh, backend, config, ground_truth=ground_truth)
            write_label_set(options['out'], label_set)
        except ViewforgeError as exc:
            raise CommandError(f'{exc.code}: {exc}')
        except ValueError as exc:
            raise CommandError(f'invalid-config: {exc}')

        report = label_set.report
        accuracy = f'{report.accuracy:.1%}' if report.accuracy is not None else 'n/a'
        self.stdout.write(self.style.SUCCESS(
            f'Labeled {len(label_set.images)} images'
            f'\n  - {report.n_reconstructed}/{report.n_triplets} triplets reconstructed'
            f'\n  - density {report.density:.1%}'
            f'\n  - accuracy {accuracy}'
        ))
