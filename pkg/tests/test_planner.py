"""
Test the view planner: fulfillment, target selection, distance field,
surrogates, triplet search, path optimization and planner files.
"""
import itertools
import json

import numpy as np
import pytest

from core.exceptions import (
    DegenerateGeometryError,
    EmptyRegionError,
    FormatError,
    InfeasibleTripletError,
    NoFreeSpaceError,
    RegistrationChainError,
)
from core.geometry.camera import look_at, triangulation_angle
from core.geometry.io import write_cameras, write_mesh_ply
from core.geometry.types import CameraIntrinsics, TriangleMesh
from core.harness.patterns import ring_cameras
from core.harness.scenes import grid_mesh
from core.planner.distance import DistanceField, build_distance_field
from core.planner.fulfillment import (
    FulfillmentModel,
    combine_fulfillment,
    estimate_fulfillment,
    min_pairwise_angles,
    select_targets,
)
from core.planner.io import load_snapshot, read_plan, write_plan
from core.planner.lookup import ConstantConfidence
from core.planner.path import PathOptimizer, greedy_order, verify_plan
from core.planner.roi import roi_from_polygon
from core.planner.services import ViewPlanner, plan_views
from core.planner.surrogates import (
    attach_links,
    inverse_visibility,
    mean_shift_direction,
    orient_surrogates,
    potential_gain,
    sample_surrogates,
)
from core.planner.triplets import TripletSearch, equilateral_triplet, make_triplet
from core.planner.types import (
    ROLE_REGISTRATION,
    ROLE_TRIPLET,
    FulfillmentRecord,
    PlannerConfig,
    PlanningSnapshot,
    SurrogateCamera,
)


CAMERA = CameraIntrinsics.centered(100.0, 100, 100)


def small_config(**overrides):
    values = dict(n_t=120, n_v=20, n_p=40, virtual_resolution=24, voxel_resolution=0.1,
                  safety_distance=0.3, surrogate_margin=1.0, k=2, intrinsics=CAMERA)
    values.update(overrides)
    return PlannerConfig(**values)


def nadir(x, y, height, camera_id):
    return look_at(CAMERA, (x, y, height), (x, y, 0.0), camera_id)


def central_faces(mesh, radius=0.5):
    return np.flatnonzero(np.abs(mesh.centroids()[:, :2]).max(axis=1) < radius)


@pytest.fixture
def ring():
    return ring_cameras(np.zeros(3), 1.5, 1.5, 6, CAMERA, 'ring')


@pytest.fixture
def five_view_model(ground_plane):
    cameras = ring_cameras(np.zeros(3), 1.0, 2.0, 5, CAMERA, 'five')
    model = FulfillmentModel(ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0), small_config())
    model.add_cameras(cameras)
    model.evaluate()
    return model, cameras


class TestPlannerConfig:

    def test_defaults(self):
        config = PlannerConfig()
        assert config.c == 3
        assert config.bin_angles[0] == pytest.approx(2.5)
        assert config.bin_angles[-1] == pytest.approx(42.5)

    def test_opening_angle_is_half_the_narrow_field_of_view(self):
        config = PlannerConfig(intrinsics=CameraIntrinsics.centered(120.0, 160, 120))
        assert config.opening_angle == pytest.approx(np.degrees(np.arctan(0.5)))
        assert PlannerConfig(min_opening_angle=10.0).opening_angle == 10.0

    @pytest.mark.parametrize('overrides', [
        {'alpha': 1.5},
        {'n_t': 10, 'n_v': 20},
        {'o_min': 1.0},
        {'bins': 0},
        {'aim_distance': -1.0},
        {'max_triplet_cameras': 2},
    ])
    def test_invalid_values(self, overrides):
        with pytest.raises(ValueError):
            PlannerConfig(**overrides)


class TestFulfillmentTerms:

    def test_coverage_gate(self):
        f, _, _ = combine_fulfillment([5e4], [1e-8], [1.0], [False], PlannerConfig())
        assert f[0] == 0.0

    def test_saturation(self):
        config = PlannerConfig(alpha=0.5)
        f, f_res, f_unc = combine_fulfillment([2 * config.r_d], [(config.a_d / 4) ** 2], [1.0], [True], config)
        assert f_res[0] == 1.0
        assert f_unc[0] == 1.0
        assert f[0] == 1.0

    def test_partial_terms(self):
        config = PlannerConfig(alpha=0.5)
        f, f_res, f_unc = combine_fulfillment([0.5 * config.r_d], [(2 * config.a_d) ** 2], [0.8], [True], config)
        assert f_res[0] == pytest.approx(0.5)
        assert f_unc[0] == pytest.approx(0.5)
        assert f[0] == pytest.approx(0.4)

    def test_infinite_uncertainty(self):
        _, _, f_unc = combine_fulfillment([1.0], [np.inf], [1.0], [True], PlannerConfig())
        assert f_unc[0] == 0.0

    def test_min_pairwise_angle(self):
        centers = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.1, 0.0]])
        angle = min_pairwise_angles(centers, np.zeros(3))
        assert angle == pytest.approx(np.degrees(np.arctan(0.1)))


class TestFulfillmentModel:

    def test_matches_enumeration_over_all_triplets(self, five_view_model):
        """Best-triplet fulfillment equals brute force over the C(5, 3) = 10 triplets."""
        model, cameras = five_view_model
        for position in range(len(model)):
            best = 0.0
            for combo in itertools.combinations(range(5), 3):
                if model.visible[list(combo), position].all():
                    f = model.score_triplet([cameras[i] for i in combo], [position])[0][0]
                    best = max(best, f)
            assert model.f[position] == pytest.approx(best, abs=1e-9)

    def test_ranges(self, five_view_model):
        model, _ = five_view_model
        for values in (model.f, model.f_res, model.f_unc, model.f_conf):
            assert ((values >= 0) & (values <= 1)).all()
        assert set(np.unique(model.f_cov)) <= {0, 1}
        assert (model.f > 0).any()

    def test_two_observers_are_not_covered(self, five_view_model):
        model, _ = five_view_model
        sparse = model.counts < 3
        assert (model.f[sparse] == 0).all()
        assert (model.f_cov[sparse] == 0).all()

    def test_more_cameras_never_lower_fulfillment(self, ground_plane, five_view_model):
        full, cameras = five_view_model
        subset = FulfillmentModel(ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0), small_config())
        subset.add_cameras(cameras[:4])
        subset.evaluate()
        assert (full.f >= subset.f - 1e-12).all()

    def test_nearby_cameras_never_displace_the_best_triplet(self, ground_plane):
        """A cluster of close cameras outnumbering the triplet cap keeps the wide-baseline triplet."""
        wide = ring_cameras(np.zeros(3), 1.5, 1.5, 3, CAMERA, 'wide')
        tight = ring_cameras(np.zeros(3), 0.003, 1.9, 12, CAMERA, 'tight')
        model = FulfillmentModel(ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0), small_config())
        model.add_cameras(wide)
        model.evaluate()
        before = model.f.copy()
        assert (before > 0).any()
        model.add_cameras(tight)
        model.evaluate()
        assert (model.f >= before - 1e-12).all()

    def test_smallest_triplet_cap_keeps_fulfillment(self, ground_plane):
        wide = ring_cameras(np.zeros(3), 1.5, 1.5, 3, CAMERA, 'wide')
        model = FulfillmentModel(ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0),
                                 small_config(max_triplet_cameras=3))
        model.add_cameras(wide)
        model.evaluate()
        before = model.f.copy()
        model.add_cameras([nadir(0.0, 0.0, 1.9, 'close')])
        model.evaluate()
        assert (model.f >= before - 1e-12).all()

    def test_uncapped_superset_dominates_subset(self, ground_plane):
        wide = ring_cameras(np.zeros(3), 1.5, 1.5, 3, CAMERA, 'wide')
        tight = ring_cameras(np.zeros(3), 0.003, 1.9, 12, CAMERA, 'tight')
        config = small_config(max_triplet_cameras=None)
        subset = FulfillmentModel(ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0), config)
        subset.add_cameras(wide)
        subset.evaluate()
        superset = FulfillmentModel(ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0), config)
        superset.add_cameras(tight + wide)
        superset.evaluate()
        assert (superset.f >= subset.f - 1e-12).all()

    def test_fewer_than_three_cameras(self, ground_plane, ring):
        model = FulfillmentModel(ground_plane, range(4), ConstantConfidence(1.0), small_config())
        model.add_cameras(ring[:2])
        model.evaluate()
        assert (model.f == 0).all()
        assert all(record.triplet == () for record in model.records())

    def test_duplicate_camera(self, ground_plane, ring):
        model = FulfillmentModel(ground_plane, range(4), ConstantConfidence(1.0), small_config())
        model.add_cameras(ring[:1])
        with pytest.raises(ValueError):
            model.add_cameras(ring[:1])

    def test_records_name_the_best_triplet(self, five_view_model):
        model, cameras = five_view_model
        ids = {camera.id for camera in cameras}
        for record in model.records():
            if record.f > 0:
                assert len(record.triplet) == 3
                assert set(record.triplet) <= ids
                assert record.f_conf_max == 1.0

    def test_estimate_fulfillment(self, ground_plane, ring):
        records = estimate_fulfillment(ring, ground_plane, central_faces(ground_plane), ConstantConfidence(1.0),
                                       small_config(n_t=10, n_v=5))
        assert len(records) == 10
        assert all(record.f_cov == 1 for record in records)

    def test_empty_region(self, ground_plane, ring):
        with pytest.raises(EmptyRegionError):
            estimate_fulfillment(ring, ground_plane, [], ConstantConfidence(1.0), small_config())


class TestSelectTargets:

    @staticmethod
    def record(triangle, f, f_conf_max):
        return FulfillmentRecord(triangle=triangle, f_cov=1, f_res=1.0, f_unc=1.0, f_conf=f_conf_max, f=f,
                                 f_conf_max=f_conf_max)

    def test_weights(self):
        assert self.record(0, 0.0, 0.8).weight == 1.0
        assert self.record(0, 0.8, 0.8).weight == 0.0
        assert self.record(0, 0.0, 0.0).weight == 0.0

    def test_fulfilled_triangles_are_never_drawn(self):
        records = [self.record(0, 0.5, 0.5), self.record(1, 0.0, 0.8), self.record(2, 0.6, 0.6)]
        for seed in range(20):
            assert list(select_targets(records, 1, seed=seed)) == [1]

    def test_draw_count_capped_by_positive_weights(self):
        records = [self.record(0, 0.5, 0.5), self.record(1, 0.0, 0.8), self.record(2, 0.1, 0.8)]
        assert list(select_targets(records, 3)) == [1, 2]

    def test_uniform_fallback(self):
        records = [self.record(t, 1.0, 1.0) for t in range(6)]
        chosen = select_targets(records, 4, seed=3)
        assert len(chosen) == 4
        assert len(set(chosen.tolist())) == 4

    def test_no_records(self):
        with pytest.raises(ValueError):
            select_targets([], 3)

    def test_draw_frequencies_follow_weights(self):
        records = [self.record(0, 0.0, 1.0), self.record(1, 0.2, 1.0), self.record(2, 0.5, 1.0)]
        draws = np.array([select_targets(records, 1, seed=seed)[0] for seed in range(20000)])
        expected = np.array([1.0, 0.8, 0.5]) / 2.3
        observed = np.bincount(draws, minlength=3) / len(draws)
        assert np.allclose(observed, expected, atol=0.02)


class TestDistanceField:

    def test_single_voxel_pythagoras(self):
        occupancy = np.zeros((10, 10, 10), dtype=bool)
        occupancy[2, 2, 2] = True
        field = DistanceField.from_occupancy(occupancy, np.zeros(3), 0.5)
        assert field.distance_at([[2.5, 3.0, 1.0]])[0] == pytest.approx(2.5)
        assert field.distance_at([[1.0, 1.0, 1.0]])[0] == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        occupancy = rng.random((12, 12, 12)) < 0.02
        occupancy[0, 0, 0] = True
        field = DistanceField.from_occupancy(occupancy, np.zeros(3), 1.0)
        occupied = np.argwhere(occupancy)
        cells = np.argwhere(np.ones_like(occupancy))
        brute = np.linalg.norm(cells[:, None, :] - occupied[None], axis=2).min(axis=1)
        assert np.allclose(field.distances.ravel(), brute)

    def test_empty_mesh(self):
        field = build_distance_field(TriangleMesh.empty(), 0.1)
        assert field.empty
        assert np.isinf(field.distances).all()
        assert field.is_safe([[0.0, 0.0, 0.0]], 5.0)[0]

    def test_clearance_is_a_lower_bound(self, ground_plane):
        field = build_distance_field(ground_plane, 0.1, margin=0.3)
        rng = np.random.default_rng(1)
        points = np.column_stack([rng.uniform(-1.8, 1.8, (200, 2)), rng.uniform(0.0, 1.5, 200)])
        assert (field.clearance(points) <= points[:, 2] + 1e-9).all()

    def test_safety_gate(self, ground_plane):
        field = build_distance_field(ground_plane, 0.1, margin=0.3)
        assert not field.is_safe([[0.0, 0.0, 0.2]], 0.3)[0]
        assert field.is_safe([[0.0, 0.0, 1.0]], 0.3)[0]

    def test_invalid_resolution(self, ground_plane):
        with pytest.raises(ValueError):
            build_distance_field(ground_plane, 0.0)


class TestSurrogates:

    def test_empty_scene_accepts_everything(self):
        mesh = TriangleMesh.empty()
        surrogates = sample_surrogates(mesh, build_distance_field(mesh, 0.1), 50,
                                       bounds=(np.zeros(3), np.ones(3)), safety_distance=5.0)
        assert len(surrogates) == 50
        assert [s.index for s in surrogates] == list(range(50))

    def test_accepted_positions_keep_safety_distance(self, ground_plane):
        field = build_distance_field(ground_plane, 0.1, margin=0.3)
        surrogates = sample_surrogates(ground_plane, field, 300, bounds=(np.array([-2, -2, 0.0]), np.array([2, 2, 2.0])),
                                       safety_distance=0.3, seed=2)
        heights = np.array([s.position[2] for s in surrogates])
        assert len(surrogates) == 300
        assert (heights >= 0.3).all()

    def test_no_free_space(self, ground_plane):
        field = build_distance_field(ground_plane, 0.1, margin=0.3)
        with pytest.raises(NoFreeSpaceError):
            sample_surrogates(ground_plane, field, 10, bounds=(np.array([-1, -1, -0.05]), np.array([1, 1, 0.05])),
                              safety_distance=0.3, retries=3)

    def test_inverse_visibility(self, ground_plane):
        triangle = 0
        centroid = ground_plane.centroids()[triangle]
        positions = np.array([centroid + [0.0, 0.0, 1.0], centroid - [0.0, 0.0, 1.0]])
        links = inverse_visibility(ground_plane, [triangle], positions, phi=120.0, resolution=24)
        assert list(links[0]) == [0]

    def test_attach_links(self):
        surrogates = [SurrogateCamera(index=i, position=np.zeros(3)) for i in range(3)]
        attach_links(surrogates, [np.array([0, 2]), np.array([2])])
        assert list(surrogates[0].links) == [0]
        assert list(surrogates[1].links) == []
        assert list(surrogates[2].links) == [0, 1]

    def test_potential_gain_clamped_when_fulfilled(self, five_view_model):
        model, _ = five_view_model
        model.f[0] = 1.0
        gains, best = potential_gain(model, model.centroids[0] + [0.0, 0.0, 1.0], 0, model.config)
        assert (gains == 0).all()
        assert best == 0.0

    def test_potential_gain_non_negative(self, five_view_model):
        model, _ = five_view_model
        gains, best = potential_gain(model, model.centroids[5] + [0.2, 0.0, 0.8], 5, model.config)
        assert gains.shape == (model.config.bins,)
        assert (gains >= 0).all()
        assert best == gains.max()


class TestMeanShift:

    def test_single_cluster(self):
        rays = np.array([[1.0, 0.0, 0.1], [1.0, 0.0, -0.1]])
        direction, weight = mean_shift_direction(rays, np.ones(2), 30.0)
        assert np.allclose(direction, [1.0, 0.0, 0.0])
        assert weight == 2.0

    def test_heavier_cluster_wins(self):
        rays = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
        direction, weight = mean_shift_direction(rays, np.array([1.0, 3.0]), 20.0)
        assert np.allclose(direction, [-1.0, 0.0, 0.0])
        assert weight == 3.0

    def test_orient_surrogates(self):
        config = small_config()
        centroids = np.array([[0.0, 0.0, -2.0], [0.1, 0.0, -2.0]])
        gains = np.zeros((2, config.bins))
        gains[:, 3] = [0.4, 0.2]
        useful = SurrogateCamera(index=0, position=np.zeros(3), links=np.array([0, 1]), gains=gains)
        useless = SurrogateCamera(index=1, position=np.ones(3), links=np.array([0]), gains=np.zeros((1, config.bins)))
        oriented = orient_surrogates([useful, useless], centroids, config)
        assert [s.index for s in oriented] == [0]
        assert oriented[0].orientation[2] < -0.99
        assert oriented[0].aim_distance == pytest.approx(2.0, rel=0.01)


class TestTriplets:

    def test_realised_angle(self):
        triplet = equilateral_triplet(np.zeros(3), [1.0, 0.0, 0.0], 10.0, 20.0, CAMERA)
        a, b, c = (camera.center for camera in triplet.cameras)
        angles = [triangulation_angle(p, q, triplet.aim_point) for p, q in ((a, b), (b, c), (a, c))]
        assert angles[0] == pytest.approx(20.0, abs=0.1)
        assert angles[1] == pytest.approx(angles[0], rel=1e-9)
        assert angles[2] == pytest.approx(angles[0], rel=1e-9)
        assert np.allclose(triplet.aim_point, [10.0, 0.0, 0.0])

    def test_cameras_aim_at_the_common_point(self):
        triplet = equilateral_triplet(np.zeros(3), [0.0, 0.0, -1.0], 2.0, 30.0, CAMERA)
        for camera in triplet.cameras:
            axis = camera.rotation[2]
            to_aim = triplet.aim_point - camera.center
            assert np.allclose(axis, to_aim / np.linalg.norm(to_aim))

    def test_zero_angle_collapses(self):
        triplet = equilateral_triplet(np.array([1.0, 2.0, 3.0]), [1.0, 0.0, 0.0], 5.0, 0.0, CAMERA)
        for camera in triplet.cameras:
            assert np.allclose(camera.center, [1.0, 2.0, 3.0])

    def test_infeasible_angle(self):
        with pytest.raises(InfeasibleTripletError):
            equilateral_triplet(np.zeros(3), [1.0, 0.0, 0.0], 5.0, 120.0, CAMERA)

    def test_non_positive_aim_distance(self):
        with pytest.raises(DegenerateGeometryError):
            equilateral_triplet(np.zeros(3), [1.0, 0.0, 0.0], 0.0, 20.0, CAMERA)

    def test_make_triplet_uses_the_bin_angle(self):
        config = small_config()
        surrogate = SurrogateCamera(index=7, position=np.zeros(3), orientation=np.array([0.0, 1.0, 0.0]))
        triplet = make_triplet(surrogate, 4.0, 3, config)
        assert triplet.angle == pytest.approx(17.5)
        assert triplet.key == (7, 3)
        assert len(set(triplet.ids)) == 3
        a, b = (camera.center for camera in triplet.cameras[:2])
        assert triangulation_angle(a, b, triplet.aim_point) == pytest.approx(17.5, abs=0.1)

    def test_unoriented_surrogate(self):
        with pytest.raises(ValueError):
            make_triplet(SurrogateCamera(index=0, position=np.zeros(3)), 4.0, 0, small_config())


class TestTripletSearch:

    def test_gain_is_the_fulfillment_increase(self, ground_plane, five_view_model):
        """Appending a triplet raises the summed fulfillment by exactly its gain."""
        model, _ = five_view_model
        search = TripletSearch(model, np.arange(len(model)), build_distance_field(ground_plane, 0.1, margin=0.3),
                               model.config)
        triplet = equilateral_triplet(np.array([0.0, 0.0, 1.2]), [0.0, 0.0, -1.0], 1.2, 20.0, CAMERA)
        evaluation = search.evaluate(triplet)
        before = model.f.sum()
        model.renders.update(evaluation.renders)
        model.append_triplet(triplet.cameras)
        assert evaluation.gain > 0
        assert model.f.sum() - before == pytest.approx(evaluation.gain, abs=1e-9)

    def test_unsafe_triplet(self, ground_plane, five_view_model):
        model, _ = five_view_model
        search = TripletSearch(model, np.arange(len(model)), build_distance_field(ground_plane, 0.1, margin=0.3),
                               model.config)
        triplet = equilateral_triplet(np.array([0.0, 0.0, 0.1]), [0.0, 0.0, -1.0], 0.1, 20.0, CAMERA)
        assert search.evaluate(triplet).gain == -np.inf

    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_pruned_search_matches_exhaustive(self, ground_plane, ring, seed):
        snapshot = PlanningSnapshot(ring, ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0))
        config = small_config(seed=seed)
        results = []
        for prune in (True, False):
            planner = ViewPlanner(snapshot, config, prune=prune)
            planner.prepare()
            triplet, report, _, _ = planner.plan_one(0)
            results.append((triplet, report))
        (pruned, pruned_report), (exhaustive, exhaustive_report) = results
        assert pruned_report.bound_violations == 0
        assert exhaustive_report.exhaustive
        if exhaustive is None:
            assert pruned is None
        else:
            assert pruned.key == exhaustive.key
            assert pruned.gain == pytest.approx(exhaustive.gain)
            assert pruned_report.evaluated <= exhaustive_report.evaluated


class TestPlanViews:

    def test_progress_and_safety(self, ground_plane, ring):
        snapshot = PlanningSnapshot(ring, ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0))
        config = small_config(k=2)
        planner = ViewPlanner(snapshot, config)
        result = planner.plan()
        assert len(result.triplets) <= 2
        for triplet, (before, after) in zip(result.triplets, result.target_fulfillment):
            assert after - before == pytest.approx(triplet.gain, abs=1e-9)
            assert triplet.gain > 0
        centers = np.array([camera.center for camera in result.cameras]).reshape(-1, 3)
        assert planner.dfield.is_safe(centers, config.safety_distance).all()

    def test_same_seed_same_plan(self, ground_plane, ring):
        snapshot = PlanningSnapshot(ring, ground_plane, range(ground_plane.n_faces), ConstantConfidence(1.0))
        first = plan_views(snapshot, small_config(k=1))
        second = plan_views(snapshot, small_config(k=1))
        assert [t.key for t in first.triplets] == [t.key for t in second.triplets]
        for a, b in zip(first.cameras, second.cameras):
            assert np.array_equal(a.center, b.center)

    def test_fulfilled_region_gives_empty_plan(self, ground_plane, ring):
        snapshot = PlanningSnapshot(ring, ground_plane, central_faces(ground_plane), ConstantConfidence(1.0))
        result = plan_views(snapshot, small_config(r_d=1e-6, a_d=1e6, k=3))
        assert result.triplets == []


class TestPathOptimization:

    def test_greedy_on_a_line(self):
        centers = np.array([[3.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        assert greedy_order(np.zeros(3), centers) == [1, 2, 0]

    def test_no_insertions_when_overlapping(self, ground_plane):
        anchor = nadir(0.0, 0.0, 2.0, 'anchor')
        planned = [nadir(0.2, 0.0, 2.0, 'b'), nadir(0.1, 0.0, 2.0, 'a')]
        plan = PathOptimizer(ground_plane, 0.5).optimize(planned, [anchor])
        assert [camera.id for camera in plan.cameras] == ['a', 'b']
        assert plan.roles == [ROLE_TRIPLET, ROLE_TRIPLET]
        assert plan.total_path_m == pytest.approx(0.2)

    def test_registration_poses_inserted(self, ground_plane):
        anchor = nadir(-1.0, 0.0, 2.0, 'anchor')
        target = nadir(1.0, 0.0, 2.0, 'target')
        optimizer = PathOptimizer(ground_plane, 0.5)
        assert optimizer.overlap(target, anchor) < 0.5
        plan = optimizer.optimize([target], [anchor])
        assert plan.registration_count >= 1
        assert plan.roles[-1] == ROLE_TRIPLET
        assert all(role == ROLE_REGISTRATION for role in plan.roles[:-1])
        assert verify_plan(plan, [anchor], ground_plane, 0.5) == []

    def test_distant_overlapping_camera_registers(self, ground_plane):
        """Earlier cameras beyond the nearest dozen still count for registration."""
        target = nadir(1.0, 0.0, 2.0, 'target')
        angles = np.linspace(0.0, 2 * np.pi, 12, endpoint=False)
        skyward = [
            look_at(CAMERA, (1.0 + 0.25 * np.cos(a), 0.25 * np.sin(a), 2.0),
                    (1.0 + 0.25 * np.cos(a), 0.25 * np.sin(a), 5.0), f'sky-{i:02d}')
            for i, a in enumerate(angles)
        ]
        overlapping = nadir(0.6, 0.0, 2.0, 'overlapping')
        previous = skyward + [overlapping]
        optimizer = PathOptimizer(ground_plane, 0.5)
        assert optimizer.overlap(target, overlapping) >= 0.5
        plan = optimizer.optimize([target], previous)
        assert plan.roles == [ROLE_TRIPLET]
        assert verify_plan(plan, previous, ground_plane, 0.5) == []

    def test_chain_starts_at_the_nearest_overlapping_camera(self, ground_plane):
        target = nadir(1.0, 0.0, 2.0, 'target')
        skyward = look_at(CAMERA, (1.05, 0.0, 2.0), (1.05, 0.0, 5.0), 'sky')
        partial = nadir(-0.6, 0.0, 2.0, 'partial')
        optimizer = PathOptimizer(ground_plane, 0.5)
        assert optimizer.overlap(target, skyward) == 0.0
        assert 0.0 < optimizer.overlap(target, partial) < 0.5
        assert optimizer.anchor_for(target, [partial, skyward]).id == 'partial'
        plan = optimizer.optimize([target], [partial, skyward])
        assert plan.registration_count >= 1
        assert -0.6 < plan.cameras[0].center[0] < 1.0
        assert verify_plan(plan, [partial, skyward], ground_plane, 0.5) == []

    def test_insertion_cap(self, ground_plane):
        anchor = nadir(-1.0, 0.0, 2.0, 'anchor')
        target = nadir(1.0, 0.0, 2.0, 'target')
        with pytest.raises(RegistrationChainError):
            PathOptimizer(ground_plane, 0.5, max_insertions=0).optimize([target], [anchor])

    def test_needs_an_anchor(self, ground_plane):
        with pytest.raises(ValueError):
            PathOptimizer(ground_plane, 0.5).optimize([nadir(0.0, 0.0, 2.0, 'a')], [])


class TestRegionOfInterest:

    def test_polygon_marks_central_faces(self, ground_plane):
        camera = nadir(0.0, 0.0, 2.0, 'top')
        faces = roi_from_polygon(camera, ground_plane, [[40, 40], [60, 40], [60, 60], [40, 60]])
        assert len(faces)
        assert (np.abs(ground_plane.centroids()[faces, :2]) < 0.75).all()

    def test_polygon_over_the_sky(self, ground_plane):
        camera = look_at(CAMERA, (0.0, 0.0, 2.0), (0.0, 0.0, 5.0), 'up')
        with pytest.raises(EmptyRegionError):
            roi_from_polygon(camera, ground_plane, [[0, 0], [99, 0], [99, 99]])


class TestPlannerFiles:

    def test_snapshot_without_confidence_source(self, tmp_path, ground_plane, ring):
        write_cameras(tmp_path / 'cameras.json', ring)
        write_mesh_ply(tmp_path / 'mesh.ply', ground_plane)
        (tmp_path / 'snapshot.json').write_text(json.dumps({'cameras': 'cameras.json', 'mesh': 'mesh.ply'}))
        snapshot = load_snapshot(tmp_path / 'snapshot.json', config=small_config())
        assert isinstance(snapshot.confidences, ConstantConfidence)
        assert [camera.id for camera in snapshot.cameras] == [camera.id for camera in ring]
        assert list(snapshot.roi) == list(range(ground_plane.n_faces))

    def test_snapshot_without_mesh(self, tmp_path):
        (tmp_path / 'snapshot.json').write_text(json.dumps({'cameras': []}))
        with pytest.raises(FormatError):
            load_snapshot(tmp_path / 'snapshot.json', config=small_config())

    def test_plan_file(self, tmp_path, ground_plane):
        anchor = nadir(-1.0, 0.0, 2.0, 'anchor')
        plan = PathOptimizer(ground_plane, 0.5).optimize([nadir(1.0, 0.0, 2.0, 'target')], [anchor])
        write_plan(tmp_path / 'plan.json', plan, small_config(), seed=4)
        loaded, echo = read_plan(tmp_path / 'plan.json')
        assert [c.id for c in loaded.cameras] == [c.id for c in plan.cameras]
        assert loaded.roles == plan.roles
        assert echo['camera_model']['width'] == 100
