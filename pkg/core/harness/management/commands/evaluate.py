"""Recompute metrics of a recorded acquisition log."""

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ViewforgeError
from core.harness.io import replay_log, write_histogram_csv, write_metrics
from core.harness.metrics import evaluate_metrics
from core.harness.scenes import read_scene


class Command(BaseCommand):
    help = 'Evaluate coverage, fulfillment and reconstruction error of an acquisition log'

    def add_arguments(self, parser):
        parser.add_argument(
            '--log',
            type=str,
            required=True,
            help='Acquisition log (JSON lines)'
        )
        parser.add_argument(
            '--scene',
            type=str,
            default=None,
            help='Scene directory; rebuilt from the log preset when omitted'
        )
        parser.add_argument(
            '--tolerance',
            type=float,
            default=None,
            help='Acceptance tolerance in meters (inf counts visibility only)'
        )
        parser.add_argument(
            '--out',
            type=str,
            required=True,
            help='Metrics JSON file'
        )
        parser.add_argument(
            '--histogram',
            type=str,
            default=None,
            help='Error histogram CSV file'
        )

    def handle(self, *args, **options):
        try:
            scene = read_scene(options['scene']) if options['scene'] else None
            log, scene = replay_log(options['log'], scene)
            metrics = evaluate_metrics(log, scene, tolerance=options['tolerance'])
            write_metrics(Path(options['out']), metrics)
            if options['histogram'] and metrics.histogram is not None:
                write_histogram_csv(Path(options['histogram']), metrics.histogram)
        except ViewforgeError as exc:
            raise CommandError(f'{exc.code}: {exc}')
        except ValueError as exc:
            raise CommandError(f'invalid-config: {exc}')

        coverage, f = metrics.coverage, metrics.fulfillment
        sigma = f'{metrics.histogram.sigma_bound * 1000:.1f} mm' if metrics.histogram is not None else 'n/a'
        self.stdout.write(self.style.SUCCESS(
            f'{log.strategy}: {metrics.images} images'
            f'\n  - coverage {coverage["mean"]:.1f} +- {coverage["std"]:.1f}%'
            f'\n  - fulfillment {f["mean"]:.1f} +- {f["std"]:.1f}%'
            f'\n  - 68.3% of errors below {sigma}'
        ))
