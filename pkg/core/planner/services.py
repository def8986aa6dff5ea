"""
View planning service.

ViewPlanner runs the planning loop on one snapshot:
1. Subdivide the region and estimate fulfillment of N_t triangles
2. Draw N_v low-fulfillment targets
3. Sample surrogates, link them by inverse visibility, weight and orient them
4. Search the best triplet, append it virtually and repeat up to k times
"""

import logging
import time
from typing import Optional

import numpy as np

from .distance import build_distance_field
from .fulfillment import FulfillmentModel, select_roi_triangles, select_targets
from .path import optimize_path
from .surrogates import (
    attach_links, inverse_visibility, orient_surrogates, potential_gains, sample_surrogates, surrogate_bounds,
)
from .triplets import TripletSearch
from .types import PlannerConfig, PlanningSnapshot, PlanResult, ViewPlan

logger = logging.getLogger(__name__)


class ViewPlanner:
    """
    Plans up to k camera triplets for a snapshot.

    Args:
        snapshot: PlanningSnapshot with captured cameras, mesh, roi and confidences
        config: PlannerConfig (defaults from settings)
        prune: use the bounded search (exhaustive otherwise)
        prefix: camera id prefix of planned cameras
    """

    def __init__(self, snapshot: PlanningSnapshot, config: Optional[PlannerConfig] = None, prune: bool = True,
                 prefix: str = 'plan'):
        self.snapshot = snapshot
        self.config = config or PlannerConfig.from_settings()
        self.prune = prune
        self.prefix = prefix
        self.model: Optional[FulfillmentModel] = None
        self.mesh = None
        self.roi_bounds = None
        self.dfield = None

    def prepare(self) -> FulfillmentModel:
        """Stage 1: region subdivision, triangle selection and fulfillment."""
        cfg = self.config
        mesh, selected = select_roi_triangles(self.snapshot.mesh, self.snapshot.roi, cfg.n_t, cfg.seed)
        self.mesh = mesh
        self.roi_bounds = surrogate_bounds(mesh, selected, cfg.surrogate_margin)
        self.dfield = build_distance_field(mesh, cfg.voxel_resolution, margin=cfg.safety_distance)
        model = FulfillmentModel(mesh, selected, self.snapshot.confidences, cfg)
        model.add_cameras(self.snapshot.cameras)
        model.evaluate()
        self.model = model
        return model

    def plan_one(self, iteration: int):
        """Stages 2-4 for one triplet; returns (triplet or None, report, targets, search)."""
        cfg = self.config
        model = self.model
        seed = cfg.seed + iteration

        targets = select_targets(model.records(), cfg.n_v, seed=seed)
        surrogates = sample_surrogates(self.mesh, self.dfield, cfg.n_p, bounds=self.roi_bounds,
                                       safety_distance=cfg.safety_distance, seed=seed,
                                       retries=cfg.surrogate_retries)
        positions = np.array([s.position for s in surrogates])
        links = inverse_visibility(self.mesh, model.triangles[targets], positions, cfg.phi, cfg.virtual_resolution)
        attach_links(surrogates, links)
        potential_gains(model, targets, surrogates, cfg)
        oriented = orient_surrogates(surrogates, model.centroids[targets], cfg)

        search = TripletSearch(model, targets, self.dfield, cfg, prefix=f'{self.prefix}{iteration}')
        triplet, report = search.search(oriented, prune=self.prune)
        return triplet, report, targets, search

    def plan(self) -> PlanResult:
        started = time.perf_counter()
        if self.model is None:
            self.prepare()
        model = self.model
        result = PlanResult(triplets=[])

        for iteration in range(self.config.k):
            tick = time.perf_counter()
            triplet, report, targets, search = self.plan_one(iteration)
            result.reports.append(report)
            if triplet is None or triplet.gain <= 0:
                logger.info(f"Planning stopped after {len(result.triplets)} triplets: no positive gain left")
                break
            before = float(model.f[targets].sum())
            model.renders.update(search.best_evaluation.renders)
            model.append_triplet(triplet.cameras)
            after = float(model.f[targets].sum())
            result.triplets.append(triplet)
            result.target_fulfillment.append((before, after))
            result.timings.append(time.perf_counter() - tick)
            logger.info(f"Triplet {iteration + 1}/{self.config.k}: gain {triplet.gain:.3f}, "
                        f"target fulfillment {before:.3f} -> {after:.3f} "
                        f"in {result.timings[-1]:.1f}s")

        result.total_seconds = time.perf_counter() - started
        return result

    def path(self, result: PlanResult) -> ViewPlan:
        """Order the planned cameras after the last captured image."""
        def is_safe(center):
            return bool(self.dfield.is_safe(center, self.config.safety_distance)[0])

        return optimize_path(result.triplets, self.snapshot.cameras, self.snapshot.mesh, self.config.o_min,
                             is_safe=is_safe, max_insertions=self.config.max_insertions)


def plan_views(snapshot: PlanningSnapshot, config: Optional[PlannerConfig] = None,
               prune: bool = True) -> PlanResult:
    """Up to k triplets maximising fulfillment gain on the snapshot."""
    return ViewPlanner(snapshot, config, prune).plan()
