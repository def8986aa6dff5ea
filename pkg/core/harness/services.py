"""
Closed-loop acquisition on synthetic scenes.

AcquisitionRunner executes one strategy:
1. Capture the initialisation ring
2. Fly the nadir grid (grid, grid+X)
3. For F/NP strategies: snapshot -> plan -> capture, n times
Every captured triplet is reconstructed by the oracle and logged.
"""

import logging
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from core.confidence.io import load_forest
from core.confidence.services import predict_grid, train_from_labels
from core.confidence.types import ConfidenceForest, ConfidenceImage, ForestConfig
from core.geometry.render import render_depth, visibility_mask
from core.geometry.serializers import cameras_to_list
from core.geometry.types import Camera, RenderResult
from core.labelgen.services import generate_labels
from core.labelgen.types import LabelGenConfig
from core.planner.lookup import ConfidenceMaps, ConstantConfidence
from core.planner.services import ViewPlanner
from core.planner.types import PlannerConfig, PlanningSnapshot
from .io import write_histogram_csv, write_log, write_metrics
from .metrics import evaluate_metrics
from .oracle import OracleBackend, oracle_mvs
from .patterns import consecutive_triplets, grid_plan, ring_cameras
from .scenes import build_scene, render_image
from .types import AcquisitionLog, HarnessConfig, OracleModel, SyntheticScene, TripletOutcome

logger = logging.getLogger(__name__)

PLANNED_STRATEGY = re.compile(r'^(?P<kind>F|NP)(?P<iterations>\d+)x(?P<triplets>\d+)$')


@dataclass(frozen=True)
class Strategy:
    """Parsed strategy name: `init`, `grid`, `F<n>x<k>`, `NP<n>x<k>` or `grid+<planned>`."""
    name: str
    grid: bool = False
    kind: Optional[str] = None
    iterations: int = 0
    triplets: int = 0

    @property
    def planned(self) -> bool:
        return self.kind is not None


def parse_strategy(name: str) -> Strategy:
    parts = name.split('+')
    if parts == ['init']:
        return Strategy(name)
    grid = parts[0] == 'grid'
    rest = parts[1:] if grid else parts
    if not rest:
        return Strategy(name, grid=grid)
    match = PLANNED_STRATEGY.match(rest[0]) if len(rest) == 1 else None
    if match is None:
        raise ValueError(f"unknown strategy {name!r}; expected init, grid, F<n>x<k>, NP<n>x<k> or grid+<planned>")
    iterations, triplets = int(match['iterations']), int(match['triplets'])
    if iterations < 1 or triplets < 1:
        raise ValueError(f"strategy {name!r} must plan at least one triplet")
    return Strategy(name, grid=grid, kind=match['kind'], iterations=iterations, triplets=triplets)


def training_cameras(scene: SyntheticScene, config: HarnessConfig, intrinsics) -> List[Camera]:
    """Two rings of oblique views used to generate forest training labels."""
    center = scene.roi_center
    ground = scene.ground_level
    count = config.training_views
    return (ring_cameras(center, 1.5, ground + 1.2, count, intrinsics, 'train-low')
            + ring_cameras(center, 1.0, ground + 2.0, count, intrinsics, 'train-high', phase=np.pi / count))


def train_scene_forest(scene: SyntheticScene, model: OracleModel, seed: int = 0,
                       config: Optional[HarnessConfig] = None) -> ConfidenceForest:
    """Labels from oracle reconstructions of training views, then a forest on the rendered images."""
    config = config or HarnessConfig.from_settings()
    intrinsics = PlannerConfig.from_settings().intrinsics
    cameras = training_cameras(scene, config, intrinsics)
    label_set = generate_labels(cameras, scene.mesh, OracleBackend(scene, model, seed),
                                LabelGenConfig.from_settings(seed=seed), ground_truth=scene.ground_truth)
    images = {camera.id: render_image(scene, camera) for camera in cameras}
    forest, samples = train_from_labels(images, label_set.images, ForestConfig.from_settings(seed=seed))
    logger.info(f"Trained forest on {len(samples)} patches from {len(cameras)} training views "
                f"(label density {label_set.report.density:.2f})")
    return forest


class AcquisitionRunner:
    """
    Runs one acquisition strategy on a scene and logs every capture.

    Args:
        scene: SyntheticScene
        strategy: strategy name, see parse_strategy
        model: OracleModel (defaults from settings)
        config: HarnessConfig (defaults from settings)
        forest: trained forest, required by F strategies
        seed: run seed
    """

    def __init__(self, scene: SyntheticScene, strategy: str, model: Optional[OracleModel] = None,
                 config: Optional[HarnessConfig] = None, forest: Optional[ConfidenceForest] = None,
                 seed: int = 0):
        self.scene = scene
        self.strategy = parse_strategy(strategy)
        self.model = model or OracleModel.from_settings()
        self.config = config or HarnessConfig.from_settings()
        self.forest = forest
        self.seed = seed
        if self.strategy.kind == 'F' and forest is None:
            raise ValueError(f"strategy {strategy!r} needs a trained confidence forest")
        self.log = AcquisitionLog(strategy=strategy, preset=scene.preset, seed=seed, model=self.model)
        self._renders: Dict[str, RenderResult] = {}
        self._confidences: Dict[str, ConfidenceImage] = {}

    def planner_config(self, iteration: int) -> PlannerConfig:
        return PlannerConfig.from_settings(k=self.strategy.triplets, seed=self.seed * 1000 + iteration,
                                           **self.config.planner)

    def capture(self, cameras: Sequence[Camera], triplets: Sequence[Tuple[Camera, Camera, Camera]],
                source: str, iteration: Optional[int] = None) -> None:
        self.log.cameras.extend(cameras)
        self.log.record('capture', source=source, iteration=iteration, cameras=cameras_to_list(cameras))
        for triplet in triplets:
            outcome = TripletOutcome(
                triplet_id=f'{source}-{len(self.log.outcomes):03d}',
                source=source,
                cameras=tuple(triplet),
                depthmaps=oracle_mvs(triplet, self.scene, self.model, self.seed),
            )
            self.log.outcomes.append(outcome)
            self.log.record('triplet', triplet_id=outcome.triplet_id, source=source,
                            camera_ids=list(outcome.camera_ids), success=outcome.success,
                            valid_pixels=outcome.valid_pixels)
        logger.info(f"Captured {len(cameras)} {source} images and {len(triplets)} triplets")

    def snapshot(self, config: PlannerConfig) -> PlanningSnapshot:
        """Scene mesh cut down to what the captured images have seen (plus everything outside the region)."""
        mesh = self.scene.mesh
        faces = np.arange(mesh.n_faces)
        seen = np.zeros(mesh.n_faces, dtype=bool)
        for camera in self.log.cameras:
            render = self._renders.get(camera.id)
            if render is None:
                render = render_depth(camera, mesh, config.render_downscale)
                self._renders[camera.id] = render
            seen |= visibility_mask(render, mesh, faces)
        in_roi = np.zeros(mesh.n_faces, dtype=bool)
        in_roi[self.scene.roi] = True
        keep = np.flatnonzero(seen | ~in_roi)
        roi = np.flatnonzero(in_roi[keep])
        logger.info(f"Snapshot: {int((seen & in_roi).sum())}/{int(in_roi.sum())} region faces discovered")
        return PlanningSnapshot(cameras=list(self.log.cameras), mesh=mesh.submesh(keep), roi=roi,
                                confidences=self.confidence_lookup(config))

    def confidence_lookup(self, config: PlannerConfig):
        if self.strategy.kind == 'NP':
            return ConstantConfidence(1.0, config.bins, config.gamma_max)
        step = getattr(settings, 'VIEWFORGE_CONFIDENCE', {}).get('GRID_STEP', 8)
        for camera in self.log.cameras:
            if camera.id not in self._confidences:
                self._confidences[camera.id] = predict_grid(self.forest, render_image(self.scene, camera),
                                                            step=step, image_id=camera.id)
        return ConfidenceMaps(self._confidences)

    def run(self) -> AcquisitionLog:
        cfg = self.config
        scene = self.scene
        intrinsics = PlannerConfig.from_settings().intrinsics
        ground = scene.ground_level
        self.log.record('start', strategy=self.strategy.name, preset=scene.preset, scene_seed=scene.seed,
                        seed=self.seed, model=self.model.as_dict())

        initial = ring_cameras(scene.roi_center, cfg.init_radius, ground + cfg.init_height, cfg.init_views,
                               intrinsics, 'init')
        self.capture(initial, consecutive_triplets(initial, closed=True), 'init')

        if self.strategy.grid:
            plan = grid_plan(scene.roi_bounds, cfg.grid_overlap, cfg.grid_height, intrinsics, ground=ground)
            self.capture(plan.cameras, consecutive_triplets(plan.cameras), 'grid')

        for iteration in range(self.strategy.iterations):
            started = time.perf_counter()
            config = self.planner_config(iteration)
            planner = ViewPlanner(self.snapshot(config), config, prefix=f'it{iteration}-plan')
            result = planner.plan()
            if not result.triplets:
                logger.warning(f"Iteration {iteration}: planner found no triplet with positive gain")
                self.log.record('plan', iteration=iteration, triplets=0)
                break
            plan = planner.path(result)
            self.capture(plan.cameras, [t.cameras for t in result.triplets], 'plan', iteration)
            self.log.timings.append(time.perf_counter() - started)
            self.log.record('plan', iteration=iteration, triplets=len(result.triplets), poses=len(plan),
                            registration=plan.registration_count, path_m=plan.total_path_m,
                            gains=[t.gain for t in result.triplets], seconds=self.log.timings[-1],
                            reports=[r.as_dict() for r in result.reports])

        rate = self.log.success_rate('plan')
        self.log.record('end', images=len(self.log.cameras), success_rate=rate)
        logger.info(f"Strategy {self.strategy.name}: {len(self.log.cameras)} images"
                    + (f", planned triplet success {rate:.0%}" if rate is not None else ''))
        return self.log


def run_acquisition(strategy: str, scene: SyntheticScene, model: Optional[OracleModel] = None,
                    config: Optional[HarnessConfig] = None, forest: Optional[ConfidenceForest] = None,
                    seed: int = 0) -> AcquisitionLog:
    return AcquisitionRunner(scene, strategy, model, config, forest, seed).run()


class SimulationProcessor:
    """
    Executes a persisted SimulationRun: scene, forest, acquisition, metrics,
    and the run's output files.
    """

    def __init__(self, run):
        self.run = run

    def forest_for(self, scene: SyntheticScene, model: OracleModel) -> Optional[ConfidenceForest]:
        if self.run.forest_path:
            return load_forest(self.run.forest_path)
        if parse_strategy(self.run.strategy).kind == 'F':
            return train_scene_forest(scene, model, seed=self.run.scene_seed)
        return None

    def process(self) -> dict:
        """
        Returns:
            The run's metrics as a dict

        Raises:
            ViewforgeError, ValueError: propagated after the run is marked failed
        """
        logger.info(f"Processing simulation run {self.run.id}: {self.run.strategy} seed {self.run.seed}")
        self.run.mark_processing()
        try:
            scene = build_scene(self.run.preset, self.run.scene_seed)
            model = OracleModel.from_settings()
            log = run_acquisition(self.run.strategy, scene, model, forest=self.forest_for(scene, model),
                                  seed=self.run.seed)
            metrics = evaluate_metrics(log, scene)

            output = Path(self.run.output_dir)
            write_log(output / 'log.jsonl', log)
            write_metrics(output / 'metrics.json', metrics)
            if metrics.histogram is not None:
                write_histogram_csv(output / 'histogram.csv', metrics.histogram)

            result = metrics.as_dict()
            self.run.mark_completed(result)
            logger.info(f"Simulation run {self.run.id} completed")
            return result
        except Exception as e:
            logger.error(f"Error processing simulation run {self.run.id}: {str(e)}")
            self.run.mark_failed(str(e))
            raise
