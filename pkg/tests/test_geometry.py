"""
Test the geometry kernel: projection, rendering, visibility, uncertainty and mesh operations.
"""
import json

import numpy as np
import pytest

from core.exceptions import DegenerateGeometryError, EmptyRegionError, FormatError, SingularGeometryError
from core.geometry.camera import (
    ground_resolution,
    point_uncertainty,
    project_point,
    triangulation_angle,
    unproject_pixel,
)
from core.geometry.io import read_cameras, read_mesh_ply, write_cameras, write_mesh_ply
from core.geometry.mesh import edge_lengths, nearest_faces, shrink_expand_mesh, subdivide_roi
from core.geometry.render import compute_visibility, image_overlap, render_depth, visibility_mask
from core.geometry.types import Camera, CameraPose, TriangleMesh


def symmetric_rig(make_camera, angle_deg, distance):
    """Two cameras at `distance` from the origin separated by `angle_deg`."""
    half = np.radians(angle_deg) / 2
    a = make_camera((distance * np.sin(half), 0.0, distance * np.cos(half)), camera_id='a')
    b = make_camera((-distance * np.sin(half), 0.0, distance * np.cos(half)), camera_id='b')
    return [a, b]


class TestProjection:

    def test_point_on_principal_axis(self, axis_camera):
        """A point on the optical axis lands on the principal point."""
        projection = project_point(axis_camera, (0.0, 0.0, 2.0))
        assert np.allclose(projection.pixel, (50.0, 50.0))
        assert projection.depth == pytest.approx(2.0)

    def test_point_behind_camera(self, axis_camera):
        """Points behind the camera have no projection."""
        assert project_point(axis_camera, (0.0, 0.0, -1.0)) is None

    def test_off_axis_point(self, axis_camera):
        """x * f / z + pp."""
        projection = project_point(axis_camera, (1.0, 0.0, 2.0))
        assert np.allclose(projection.pixel, (100.0, 50.0))
        assert projection.depth == pytest.approx(2.0)

    def test_unproject_round_trip(self, make_camera):
        """Unprojecting a pixel at its depth reproduces the point."""
        camera = make_camera((3.0, -2.0, 5.0), target=(0.2, 0.1, 0.0))
        point = np.array([0.4, -0.3, 0.2])
        projection = project_point(camera, point)
        assert np.allclose(unproject_pixel(camera, projection.pixel, projection.depth), point, atol=1e-6)


class TestTriangulationAngle:

    def test_orthogonal_rays(self):
        assert triangulation_angle((1, 0, 0), (0, 1, 0), (0, 0, 0)) == pytest.approx(90.0)

    def test_identical_centers(self):
        assert triangulation_angle((1, 0, 0), (1, 0, 0), (0, 0, 0)) == pytest.approx(0.0, abs=1e-9)

    def test_narrow_baseline(self):
        expected = np.degrees(2 * np.arctan(0.1))
        assert triangulation_angle((1, 0, 10), (-1, 0, 10), (0, 0, 0)) == pytest.approx(expected)
        assert expected == pytest.approx(11.42, abs=0.01)

    def test_point_at_camera_center(self):
        """A point coinciding with a center is degenerate."""
        with pytest.raises(DegenerateGeometryError):
            triangulation_angle((0, 0, 0), (1, 0, 0), (0, 0, 0))


class TestPointUncertainty:

    def test_identical_centers_are_singular(self, make_camera):
        """Zero baseline cannot triangulate."""
        cameras = [make_camera((0.0, 0.0, 10.0), camera_id='a'), make_camera((0.0, 0.0, 10.0), camera_id='b')]
        with pytest.raises(SingularGeometryError):
            point_uncertainty(cameras, (0.0, 0.0, 0.0))

    def test_single_camera_is_singular(self, make_camera):
        with pytest.raises(SingularGeometryError):
            point_uncertainty([make_camera((0.0, 0.0, 10.0))], (0.0, 0.0, 0.0))

    def test_u_is_largest_eigenvalue(self, make_camera):
        estimate = point_uncertainty(symmetric_rig(make_camera, 20.0, 10.0), (0.0, 0.0, 0.0))
        assert estimate.u == pytest.approx(np.linalg.eigvalsh(estimate.covariance).max(), rel=1e-9)
        assert estimate.u >= 0
        assert np.allclose(estimate.covariance, estimate.covariance.T)

    def test_u_decreases_with_angle(self, make_camera):
        """Wider baselines triangulate more precisely at fixed distance."""
        values = [
            point_uncertainty(symmetric_rig(make_camera, angle, 10.0), (0.0, 0.0, 0.0)).u
            for angle in range(5, 50, 5)
        ]
        assert all(later < earlier for earlier, later in zip(values, values[1:]))

    def test_sigma_scales_with_distance(self, make_camera):
        """Doubling the distance doubles sqrt(u)."""
        near = point_uncertainty(symmetric_rig(make_camera, 20.0, 10.0), (0.0, 0.0, 0.0))
        far = point_uncertainty(symmetric_rig(make_camera, 20.0, 20.0), (0.0, 0.0, 0.0))
        assert far.sigma / near.sigma == pytest.approx(2.0, rel=0.05)

    def test_matches_monte_carlo(self, make_camera):
        """First-order covariance agrees with noisy midpoint triangulations."""
        cameras = symmetric_rig(make_camera, 20.0, 10.0)
        point = np.zeros(3)
        estimate = point_uncertainty(cameras, point, pixel_noise_std=1.0)

        rng = np.random.default_rng(0)
        samples = []
        for _ in range(10000):
            rows, rhs = [], []
            for camera in cameras:
                projection = project_point(camera, point)
                pixel = projection.pixel + rng.normal(0.0, 1.0, 2)
                ray = unproject_pixel(camera, pixel, 1.0) - camera.center
                ray = ray / np.linalg.norm(ray)
                projector = np.eye(3) - np.outer(ray, ray)
                rows.append(projector)
                rhs.append(projector @ camera.center)
            samples.append(np.linalg.solve(sum(rows), sum(rhs)))
        empirical = np.linalg.eigvalsh(np.cov(np.array(samples).T)).max()
        assert empirical == pytest.approx(estimate.u, rel=0.1)


class TestGroundResolution:

    def test_fronto_parallel(self, axis_camera):
        """(f / d)^2 px per m^2."""
        triangle = np.array([[0.0, 0.0, 4.0], [0.0, 1.0, 4.0], [1.0, 0.0, 4.0]])
        assert ground_resolution(axis_camera, triangle) == pytest.approx((100.0 / 4.0) ** 2)

    def test_slanted_halves(self, axis_camera):
        """A triangle tilted 60 degrees about the x axis shows half its area."""
        tilt = np.radians(60.0)
        triangle = np.array([
            [-0.1, 0.0, 4.0],
            [0.0, 0.1 * np.cos(tilt), 4.0 + 0.1 * np.sin(tilt)],
            [0.1, 0.0, 4.0],
        ])
        fronto = (100.0 / 4.0) ** 2
        assert ground_resolution(axis_camera, triangle) == pytest.approx(fronto / 2, rel=0.05)

    def test_back_facing(self, axis_camera):
        triangle = np.array([[0.0, 0.0, 4.0], [1.0, 0.0, 4.0], [0.0, 1.0, 4.0]])
        assert ground_resolution(axis_camera, triangle) == 0.0


class TestRenderDepth:

    def test_constant_depth_plane(self, axis_camera, square_mesh):
        """A plane filling the view renders at its depth everywhere."""
        render = render_depth(axis_camera, square_mesh(5.0))
        assert render.depth.valid.all()
        assert np.allclose(render.depth.depths, 5.0)
        assert set(np.unique(render.face_ids)) <= {0, 1}

    def test_nearest_surface_wins(self, axis_camera, square_mesh):
        """Overlapping squares report the nearer depth."""
        mesh = TriangleMesh.concatenate([square_mesh(5.0), square_mesh(3.0, half=0.5)])
        render = render_depth(axis_camera, mesh)
        assert render.depth.depths[50, 50] == pytest.approx(3.0)
        assert render.depth.depths[2, 2] == pytest.approx(5.0)

    def test_empty_mesh(self, axis_camera):
        render = render_depth(axis_camera, TriangleMesh.empty())
        assert not render.depth.valid.any()
        assert (render.face_ids == -1).all()

    def test_downscale(self, axis_camera, square_mesh):
        render = render_depth(axis_camera, square_mesh(5.0), downscale=2)
        assert render.depth.depths.shape == (50, 50)
        assert render.depth.downscale == 2

    def test_invalid_downscale(self, axis_camera, square_mesh):
        with pytest.raises(ValueError):
            render_depth(axis_camera, square_mesh(5.0), downscale=0)


def random_mesh(seed, n_faces):
    """Independent random triangles in front of a camera at the origin looking down +Z."""
    rng = np.random.default_rng(seed)
    centers = np.column_stack([rng.uniform(-2.0, 2.0, n_faces), rng.uniform(-2.0, 2.0, n_faces),
                               rng.uniform(2.0, 8.0, n_faces)])
    vertices = (centers[:, None, :] + rng.normal(0.0, 0.6, (n_faces, 3, 3))).reshape(-1, 3)
    vertices[:, 2] = np.maximum(vertices[:, 2], 0.5)
    return TriangleMesh(vertices, np.arange(3 * n_faces).reshape(n_faces, 3))


def cast_rays(rays, triangles):
    """Nearest hit distance along rays from the origin by plane intersection and edge side tests."""
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    normals = np.cross(b - a, c - a)
    with np.errstate(divide='ignore', invalid='ignore'):
        t = np.einsum('fi,fi->f', a, normals)[None, :] / (rays @ normals.T)
    hits = t[..., None] * rays[:, None, :]
    inside = np.isfinite(t) & (t > 0)
    for p, q in ((a, b), (b, c), (c, a)):
        side = np.cross(q - p, hits - p[None])
        inside &= np.einsum('rfi,fi->rf', side, normals) >= 0
    return np.where(inside, t, np.inf).min(axis=1)


class TestRenderAgainstRayCasting:

    @pytest.mark.parametrize('seed, n_faces', [(0, 60), (1, 120), (2, 200)])
    def test_depths_match_brute_force(self, axis_camera, seed, n_faces):
        mesh = random_mesh(seed, n_faces)
        render = render_depth(axis_camera, mesh)
        cols, rows = np.meshgrid(np.arange(0, 100, 5), np.arange(0, 100, 5))
        cols, rows = cols.ravel(), rows.ravel()
        rays = np.column_stack([(cols - 50.0) / 100.0, (rows - 50.0) / 100.0, np.ones(len(cols))])
        expected = cast_rays(rays, mesh.triangles)
        rendered = render.depth.depths[rows, cols]
        assert np.isfinite(expected).sum() > 20
        both = np.isfinite(expected) & np.isfinite(rendered)
        assert (np.isfinite(expected) != np.isfinite(rendered)).sum() <= 2
        assert np.allclose(rendered[both], expected[both], rtol=1e-6)

    @pytest.mark.parametrize('seed', [3, 4])
    def test_visibility_matches_segment_casting(self, axis_camera, seed):
        """Centroid visibility agrees with casting the camera-to-centroid segment against every face."""
        mesh = random_mesh(seed, 150)
        visible = visibility_mask(render_depth(axis_camera, mesh), mesh, np.arange(mesh.n_faces))
        tri = mesh.triangles
        centroids = tri.mean(axis=1)
        normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        facing = np.einsum('ij,ij->i', normals, -centroids) > 0
        cols = np.rint(50.0 + 100.0 * centroids[:, 0] / centroids[:, 2])
        rows = np.rint(50.0 + 100.0 * centroids[:, 1] / centroids[:, 2])
        inside = (cols >= 0) & (cols < 100) & (rows >= 0) & (rows < 100)
        nearest = cast_rays(centroids / centroids[:, 2:3], tri)
        unblocked = nearest >= centroids[:, 2] * (1.0 - 1e-9)
        expected = facing & inside & unblocked
        assert expected.sum() > 5
        assert (visible != expected).mean() <= 0.05


class TestVisibility:

    def test_unoccluded_triangle(self, axis_camera, square_mesh):
        table = compute_visibility(square_mesh(5.0), [0, 1], [axis_camera])
        assert table[0] == {'axis'}
        assert table[1] == {'axis'}

    def test_occluded_triangle(self, axis_camera, square_mesh):
        """A nearer plane hides the far square."""
        mesh = TriangleMesh.concatenate([square_mesh(5.0, half=1.0), square_mesh(2.0, half=5.0)])
        table = compute_visibility(mesh, [0, 1], [axis_camera])
        assert table[0] == set()
        assert table[1] == set()

    def test_back_face_is_invisible(self, make_camera, square_mesh):
        """A camera behind the square sees only back faces."""
        behind = make_camera((0.0, 0.0, 10.0), target=(0.0, 0.0, 5.0), camera_id='behind')
        table = compute_visibility(square_mesh(5.0), [0, 1], [behind])
        assert len(table) == 2
        assert table[0] == set()


class TestImageOverlap:

    def test_identical_cameras(self, make_camera, ground_plane):
        camera = make_camera((0.0, 0.0, 3.0))
        assert image_overlap(camera, camera, ground_plane) == pytest.approx(1.0)

    def test_opposite_directions(self, make_camera, ground_plane):
        down = make_camera((0.0, 0.0, 3.0), camera_id='down')
        up = make_camera((0.0, 0.0, 3.0), target=(0.0, 0.0, 6.0), camera_id='up')
        assert image_overlap(down, up, ground_plane) == 0.0

    def test_no_geometry(self, make_camera, ground_plane):
        up = make_camera((0.0, 0.0, 3.0), target=(0.0, 0.0, 6.0), camera_id='up')
        down = make_camera((0.0, 0.0, 3.0), camera_id='down')
        assert image_overlap(up, down, ground_plane) == 0.0

    def test_half_footprint_shift(self, intrinsics):
        """Nadir cameras shifted by half a footprint overlap by half."""
        from core.harness.patterns import NADIR
        from core.harness.scenes import grid_mesh
        ground = grid_mesh(-5.0, 5.0, -5.0, 5.0, 4, 4)
        a = Camera(intrinsics, CameraPose(NADIR, np.array([0.0, 0.0, 2.0])), 'a')
        b = Camera(intrinsics, CameraPose(NADIR, np.array([1.0, 0.0, 2.0])), 'b')
        assert image_overlap(a, b, ground) == pytest.approx(0.5, abs=0.05)


class TestSubdivideRoi:

    def test_satisfied_mesh_unchanged(self):
        """Equilateral faces already meet the average edge bound."""
        vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, np.sqrt(3) / 2, 0.0]])
        mesh = TriangleMesh(vertices, np.array([[0, 1, 2]]))
        split, roi = subdivide_roi(mesh, [0])
        assert split.n_faces == 1
        assert list(roi) == [0]
        assert np.allclose(split.vertices, vertices)

    def test_large_triangle_is_split(self):
        """Every roi edge ends up within the bound and the area is preserved."""
        mesh = TriangleMesh(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), np.array([[0, 1, 2]]))
        split, roi = subdivide_roi(mesh, [0], max_edge=0.25)
        assert len(roi) > 1
        assert edge_lengths(split, roi).max() <= 0.25 + 1e-6
        assert split.face_areas()[roi].sum() == pytest.approx(0.5, rel=1e-6)
        assert split.face_areas()[roi].min() > 0

    def test_non_roi_faces_untouched(self, square_mesh):
        mesh = square_mesh(5.0)
        split, roi = subdivide_roi(mesh, [0], max_edge=5.0)
        assert 1 not in roi
        assert np.allclose(split.triangles[1], mesh.triangles[1])

    def test_empty_roi(self, square_mesh):
        with pytest.raises(EmptyRegionError):
            subdivide_roi(square_mesh(5.0), [])


class TestShrinkExpand:

    def test_planar_interior_is_fixed(self):
        from core.harness.scenes import grid_mesh
        mesh = grid_mesh(0.0, 12.0, 0.0, 12.0, 12, 12)
        shrunk, expanded = shrink_expand_mesh(mesh)
        center = 6 * 13 + 6
        assert np.allclose(shrunk.vertices[center], mesh.vertices[center], atol=1e-9)
        assert np.allclose(expanded.vertices[center], mesh.vertices[center], atol=1e-9)
        assert np.allclose(shrunk.vertices[:, 2], 0.0)
        assert len(shrunk.vertices) == len(mesh.vertices)
        assert shrunk.n_faces == expanded.n_faces == mesh.n_faces

    def test_sphere_shrinks_and_expands(self):
        from core.harness.scenes import spheroid_mesh
        sphere = spheroid_mesh((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), n_lat=10, n_lon=20)
        shrunk, expanded = shrink_expand_mesh(sphere)
        shrunk_radius = np.linalg.norm(shrunk.vertices, axis=1).mean()
        expanded_radius = np.linalg.norm(expanded.vertices, axis=1).mean()
        assert shrunk_radius < 1.0
        assert expanded_radius > shrunk_radius


class TestNearestFaces:

    def test_distance_to_plane(self, square_mesh):
        points = np.array([[0.0, 0.0, 5.5], [1.0, -2.0, 4.0]])
        distances, faces = nearest_faces(points, square_mesh(5.0))
        assert np.allclose(distances, [0.5, 1.0])
        assert set(faces) <= {0, 1}

    def test_empty_mesh(self):
        distances, faces = nearest_faces(np.zeros((2, 3)), TriangleMesh.empty())
        assert np.isinf(distances).all()
        assert (faces == -1).all()


class TestGeometryIO:

    def test_camera_file(self, tmp_path, make_camera):
        cameras = [make_camera((1.0, 2.0, 3.0), camera_id='one'), make_camera((-1.0, 0.0, 4.0), camera_id='two')]
        write_cameras(tmp_path / 'cameras.json', cameras)
        loaded = read_cameras(tmp_path / 'cameras.json')
        assert [camera.id for camera in loaded] == ['one', 'two']
        assert np.allclose(loaded[0].rotation, cameras[0].rotation)

    def test_duplicate_camera_ids(self, tmp_path, make_camera):
        from core.geometry.serializers import cameras_to_list
        records = cameras_to_list([make_camera((1.0, 2.0, 3.0), camera_id='same')] * 2)
        (tmp_path / 'cameras.json').write_text(json.dumps(records))
        with pytest.raises(FormatError):
            read_cameras(tmp_path / 'cameras.json')

    def test_invalid_rotation(self, tmp_path, make_camera):
        from core.geometry.serializers import cameras_to_list
        records = cameras_to_list([make_camera((1.0, 2.0, 3.0))])
        records[0]['R'] = [2.0] * 9
        (tmp_path / 'cameras.json').write_text(json.dumps(records))
        with pytest.raises(FormatError):
            read_cameras(tmp_path / 'cameras.json')

    def test_mesh_ply_keeps_materials(self, tmp_path, square_mesh):
        mesh = square_mesh(5.0, material=1)
        write_mesh_ply(tmp_path / 'mesh.ply', mesh)
        loaded = read_mesh_ply(tmp_path / 'mesh.ply')
        assert np.allclose(loaded.vertices, mesh.vertices)
        assert list(loaded.material_of([0, 1])) == [1, 1]
