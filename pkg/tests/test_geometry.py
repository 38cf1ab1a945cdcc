"""Geometry oracles: brute-force and closed-form checks for the convex primitives."""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from minkplan.geometry import (
    Ball,
    BufferedPolytope,
    ConvexPolytope,
    GeometryError,
    convex_hull,
    minkowski_sum_ball,
    monte_carlo_area,
    random_instance,
    sample_in_region,
    vertices_to_halfspaces_2d,
)


def triangle_area(a, b, c):
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


class TestConvexHull:
    def test_square_with_interior_points(self):
        pts = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5], [0.25, 0.75]]
        poly = convex_hull(pts)
        assert poly.num_vertices == 4
        assert poly.area() == pytest.approx(1.0)

    def test_hull_area_dominates_any_input_triangle(self):
        # Oracle: hull area >= area of every triangle over input points.
        rng = np.random.default_rng(7)
        for _ in range(25):
            pts = rng.uniform(-1, 1, size=(9, 2))
            hull_area = convex_hull(pts).area()
            best = max(triangle_area(*tri) for tri in itertools.combinations(pts, 3))
            assert hull_area >= best - 1e-12

    def test_hull_of_hull_is_identity(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(30, 2))
        h1 = convex_hull(pts)
        h2 = convex_hull(h1.vertices)
        np.testing.assert_allclose(h1.vertices, h2.vertices)

    def test_ccw_orientation(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            poly = convex_hull(rng.uniform(-1, 1, size=(12, 2)))
            assert poly.area() > 0  # shoelace positive iff CCW

    def test_collinear_reduces_to_segment(self):
        poly = convex_hull([[0, 0], [1, 1], [2, 2], [0.5, 0.5]])
        assert poly.num_vertices == 2
        np.testing.assert_allclose(poly.vertices, [[0, 0], [2, 2]])

    def test_duplicates_reduce_to_point(self):
        poly = convex_hull([[1.5, -2.0]] * 5)
        assert poly.num_vertices == 1
        assert poly.area() == 0.0
        assert poly.perimeter() == 0.0

    def test_no_interior_or_collinear_vertices_kept(self):
        # Midpoints on edges must be dropped.
        poly = convex_hull([[0, 0], [2, 0], [2, 2], [0, 2], [1, 0], [2, 1]])
        assert poly.num_vertices == 4

    def test_rejects_nonfinite(self):
        with pytest.raises(GeometryError):
            convex_hull([[0, 0], [np.nan, 1], [1, 0]])


class TestHalfspaces:
    def test_unit_square(self):
        poly = convex_hull([[0, 0], [1, 0], [1, 1], [0, 1]])
        A, b = poly.halfspaces()
        assert A.shape == (4, 2)
        np.testing.assert_allclose(np.linalg.norm(A, axis=1), 1.0)
        # Interior point strictly satisfies, exterior violates.
        assert np.all(A @ [0.5, 0.5] < b)
        assert np.any(A @ [1.5, 0.5] > b)

    def test_each_row_tight_at_two_vertices(self):
        poly, _ = random_instance(5)
        A, b = poly.halfspaces()
        vals = A @ poly.vertices.T - b[:, None]
        assert np.all(vals <= 1e-9)
        tight = np.abs(vals) <= 1e-9
        assert np.all(tight.sum(axis=1) >= 2)

    def test_halfspace_membership_matches_vertex_membership(self):
        rng = np.random.default_rng(19)
        for seed in range(10):
            poly, _ = random_instance(seed)
            A, b = poly.halfspaces()
            pts = rng.uniform(-1.5, 1.5, size=(200, 2))
            by_halfspace = np.all(A @ pts.T <= b[:, None] + 1e-9, axis=0)
            by_vertices = poly.contains(pts)
            np.testing.assert_array_equal(by_halfspace, by_vertices)

    def test_degenerate_rejected(self):
        seg = convex_hull([[0, 0], [1, 1]])
        with pytest.raises(GeometryError):
            vertices_to_halfspaces_2d(seg)


class TestContainsAndDistance:
    def test_triangle_membership(self):
        tri = convex_hull([[0, 0], [1, 0], [0, 1]])
        assert tri.contains([0.2, 0.2])
        assert tri.contains([0, 0])          # closed set: vertices belong
        assert tri.contains([0.5, 0.5])      # on the hypotenuse
        assert not tri.contains([0.6, 0.6])

    def test_distance_matches_brute_force(self):
        rng = np.random.default_rng(23)
        poly, _ = random_instance(2)
        pts = rng.uniform(-2, 2, size=(50, 2))
        d = poly.distance(pts)
        # Brute force: dense sampling of the boundary.
        ts = np.linspace(0, 1, 2000)[:, None]
        bound = np.vstack([
            poly.vertices[i] * (1 - ts) + poly.vertices[(i + 1) % poly.num_vertices] * ts
            for i in range(poly.num_vertices)
        ])
        for p, di in zip(pts, d):
            brute = np.min(np.linalg.norm(bound - p, axis=1))
            if poly.contains(p):
                assert di == 0.0
            else:
                assert di == pytest.approx(brute, abs=2e-3)

    def test_distance_zero_inside(self):
        poly = convex_hull([[0, 0], [2, 0], [2, 2], [0, 2]])
        assert poly.distance([1.0, 1.0]) == 0.0
        assert poly.distance([3.0, 1.0]) == pytest.approx(1.0)


class TestMinkowskiSum:
    def test_square_buffer_area_closed_form(self):
        square = convex_hull([[0, 0], [2, 0], [2, 2], [0, 2]])
        r = 0.5
        buf = minkowski_sum_ball(square, Ball(r))
        assert buf.area() == pytest.approx(4.0 + 8.0 * r + np.pi * r * r)

    def test_point_buffer_is_disk(self):
        pt = ConvexPolytope(np.array([[1.0, 1.0]]))
        buf = minkowski_sum_ball(pt, Ball(0.3))
        assert buf.area() == pytest.approx(np.pi * 0.09)
        assert buf.contains([1.0, 1.29])
        assert not buf.contains([1.0, 1.31])

    def test_segment_buffer_is_stadium(self):
        seg = convex_hull([[0, 0], [3, 0]])
        r = 0.25
        buf = minkowski_sum_ball(seg, Ball(r))
        assert buf.area() == pytest.approx(2 * r * 3 + np.pi * r * r)

    def test_area_matches_monte_carlo(self):
        for seed in [0, 4, 9]:
            poly, r = random_instance(seed)
            buf = minkowski_sum_ball(poly, Ball(r))
            est, se = monte_carlo_area(buf.contains, buf.bbox(), samples=200_000, seed=42)
            assert abs(est - buf.area()) <= 4 * se + 1e-9

    def test_buffer_contains_base_and_offsets(self):
        poly, r = random_instance(1)
        buf = minkowski_sum_ball(poly, Ball(r))
        for v in poly.vertices:
            assert buf.contains(v)
            for ang in np.linspace(0, 2 * np.pi, 17):
                assert buf.contains(v + (r - 1e-9) * np.array([np.cos(ang), np.sin(ang)]))

    def test_dimension_mismatch(self):
        poly = convex_hull([[0, 0], [1, 0], [0, 1]])
        with pytest.raises(GeometryError):
            minkowski_sum_ball(poly, Ball(0.1, dim=3))


class TestMonteCarlo:
    def test_disk_area(self):
        ind = lambda pts: np.linalg.norm(pts, axis=1) <= 1.0
        est, se = monte_carlo_area(ind, ([-1, -1], [1, 1]), samples=100_000, seed=0)
        assert est == pytest.approx(np.pi, abs=4 * se)

    def test_deterministic_given_seed(self):
        ind = lambda pts: np.linalg.norm(pts, axis=1) <= 1.0
        a1 = monte_carlo_area(ind, ([-1, -1], [1, 1]), samples=5000, seed=3)
        a2 = monte_carlo_area(ind, ([-1, -1], [1, 1]), samples=5000, seed=3)
        assert a1 == a2

    def test_sample_in_region(self):
        tri = convex_hull([[0, 0], [1, 0], [0, 1]])
        pts = sample_in_region(tri.contains, (np.array([0, 0]), np.array([1, 1])), 500, seed=1)
        assert pts.shape == (500, 2)
        assert np.all(tri.contains(pts))


class TestRandomInstance:
    def test_reproducible(self):
        p1, r1 = random_instance(123)
        p2, r2 = random_instance(123)
        assert r1 == r2
        np.testing.assert_array_equal(p1.vertices, p2.vertices)

    def test_full_dimensional_and_in_bands(self):
        for seed in range(30):
            poly, r = random_instance(seed)
            assert poly.is_full_dimensional()
            assert 3 <= poly.num_vertices <= 12
            assert 0.0 <= r <= 1.0
            assert np.all(np.abs(poly.vertices) <= 1.0)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        from minkplan.geometry import load_polytope, save_polytope

        poly, _ = random_instance(8)
        path = tmp_path / "poly.json"
        save_polytope(poly, path)
        again = load_polytope(path)
        np.testing.assert_allclose(poly.vertices, again.vertices)

    def test_load_normalizes_to_hull(self):
        data = {"vertices": [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]}
        poly = ConvexPolytope.from_dict(data)
        assert poly.num_vertices == 4

    def test_malformed(self):
        with pytest.raises(GeometryError):
            ConvexPolytope.from_dict({"points": []})


class Test3D:
    def test_tetrahedron_vertices_kept(self):
        pts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0.2, 0.2, 0.2]]
        poly = ConvexPolytope.from_points(pts)
        assert poly.num_vertices == 4
        assert poly.contains([0.1, 0.1, 0.1])
        assert not poly.contains([1, 1, 1])

    def test_degenerate_3d_rejected(self):
        with pytest.raises(GeometryError):
            ConvexPolytope.from_points([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
