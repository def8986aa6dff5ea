"""Queue closed-loop acquisition runs for a set of strategies and seeds."""

from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.confidence.io import save_forest
from core.exceptions import ViewforgeError
from core.harness.models import SimulationRun
from core.harness.scenes import build_scene
from core.harness.services import parse_strategy, train_scene_forest
from core.harness.tasks import run_simulation
from core.harness.types import OracleModel


class Command(BaseCommand):
    help = 'Run acquisition strategies on a synthetic scene and report their metrics'

    def add_arguments(self, parser):
        parser.add_argument(
            '--strategy',
            type=str,
            default='grid,F2x4',
            help='Comma-separated strategies (init, grid, F<n>x<k>, NP<n>x<k>, grid+<planned>)'
        )
        parser.add_argument(
            '--preset',
            type=str,
            default='rock',
            help='Scene preset'
        )
        parser.add_argument(
            '--scene-seed',
            type=int,
            default=0,
            help='Scene seed'
        )
        parser.add_argument(
            '--seeds',
            type=int,
            default=1,
            help='Number of run seeds per strategy'
        )
        parser.add_argument(
            '--forest',
            type=str,
            default=None,
            help='Trained forest; trained on the scene when omitted'
        )
        parser.add_argument(
            '--out',
            type=str,
            default=None,
            help='Output directory (defaults to VIEWFORGE_HARNESS OUTPUT_DIR)'
        )

    def handle(self, *args, **options):
        out = Path(options['out'] or settings.VIEWFORGE_HARNESS['OUTPUT_DIR'])
        names = [name.strip() for name in options['strategy'].split(',') if name.strip()]
        try:
            strategies = [parse_strategy(name) for name in names]
            forest_path = options['forest'] or ''
            if not forest_path and any(strategy.kind == 'F' for strategy in strategies):
                scene = build_scene(options['preset'], options['scene_seed'])
                self.stdout.write(f'Training a confidence forest on {scene.preset}...')
                forest_path = str(out / 'forest.bin')
                save_forest(forest_path, train_scene_forest(scene, OracleModel.from_settings(),
                                                            seed=options['scene_seed']))
        except ViewforgeError as exc:
            raise CommandError(f'{exc.code}: {exc}')
        except ValueError as exc:
            raise CommandError(f'invalid-config: {exc}')

        runs = []
        for strategy in strategies:
            for seed in range(options['seeds']):
                run = SimulationRun.objects.create(
                    strategy=strategy.name,
                    preset=options['preset'],
                    scene_seed=options['scene_seed'],
                    seed=seed,
                    output_dir=str(out / strategy.name / f'seed-{seed}'),
                    forest_path=forest_path,
                )
                try:
                    run_simulation.delay(run.id)
                except Exception as exc:
                    self.stdout.write(self.style.ERROR(f'{strategy.name} seed {seed} failed: {exc}'))
                runs.append(run)

        self.stdout.write(self.style.SUCCESS(f'Queued {len(runs)} runs into {out}'))
        for run in runs:
            run.refresh_from_db()
            if run.status == 'completed':
                m = run.metrics
                rate = f"{m['success_rate']:.0%}" if m['success_rate'] is not None else 'n/a'
                self.stdout.write(
                    f"  - {run.strategy} seed {run.seed}: {m['images']} images, "
                    f"coverage {m['coverage']['mean']:.1f} +- {m['coverage']['std']:.1f}%, "
                    f"f {m['f']['mean']:.1f} +- {m['f']['std']:.1f}%, success {rate}"
                )
            else:
                self.stdout.write(f'  - {run.strategy} seed {run.seed}: {run.status}')
