"""Plan the next camera triplets for a snapshot."""

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ViewforgeError
from core.planner.io import load_snapshot, read_roi, write_plan
from core.planner.lookup import ConstantConfidence
from core.planner.services import ViewPlanner
from core.planner.types import PlannerConfig, PlanningSnapshot


class Command(BaseCommand):
    help = 'Plan up to k camera triplets and order them into a registration-safe path'

    def add_arguments(self, parser):
        parser.add_argument(
            '--snapshot',
            type=str,
            required=True,
            help='Snapshot JSON (cameras, mesh, images, confidences)'
        )
        parser.add_argument(
            '--roi',
            type=str,
            default=None,
            help='Region of interest JSON {image_id, polygon}; the snapshot roi or whole mesh otherwise'
        )
        parser.add_argument(
            '--forest',
            type=str,
            default=None,
            help='Confidence forest used when the snapshot has no confidence images'
        )
        parser.add_argument(
            '--k',
            type=int,
            default=None,
            help='Number of triplets to plan'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Random seed'
        )
        parser.add_argument(
            '--np',
            action='store_true',
            help='Plan without confidence prediction (constant confidence 1)'
        )
        parser.add_argument(
            '--exhaustive',
            action='store_true',
            help='Evaluate every candidate triplet instead of the bounded search'
        )
        parser.add_argument(
            '--out',
            type=str,
            required=True,
            help='Plan JSON to write'
        )

    def handle(self, *args, **options):
        overrides = {name: options[name] for name in ('k', 'seed') if options[name] is not None}
        try:
            config = PlannerConfig.from_settings(**overrides)
            snapshot = load_snapshot(options['snapshot'], forest_path=options['forest'], config=config)
            if options['np']:
                snapshot = PlanningSnapshot(snapshot.cameras, snapshot.mesh, snapshot.roi,
                                            ConstantConfidence(1.0, config.bins, config.gamma_max))
            if options['roi']:
                roi = read_roi(options['roi'], snapshot)
                snapshot = PlanningSnapshot(snapshot.cameras, snapshot.mesh, roi, snapshot.confidences)

            planner = ViewPlanner(snapshot, config, prune=not options['exhaustive'])
            result = planner.plan()
            plan = planner.path(result)
            write_plan(options['out'], plan, config, config.seed)
        except ViewforgeError as exc:
            raise CommandError(f'{exc.code}: {exc}')
        except ValueError as exc:
            raise CommandError(f'invalid-config: {exc}')

        self.stdout.write(self.style.SUCCESS(
            f'Planned {len(result.triplets)} triplets'
            f'\n  - {len(plan)} poses ({plan.registration_count} registration)'
            f'\n  - path length {plan.total_path_m:.2f} m'
            f'\n  - {result.total_seconds:.1f} s'
            f'\n  - written to {options["out"]}'
        ))
