"""Compiler tests: block layout, solved-identity residuals, containment oracles.

Solver-dependent assertions run the real interior-point solver on small
instances, so this file doubles as an end-to-end check of the conic layer.
"""
import numpy as np
import pytest

from minkplan.conic_solver import SolverFailure, solve
from minkplan.geometry import (
    Ball,
    ConvexPolytope,
    minkowski_sum_ball,
    random_instance,
    sample_in_region,
)
from minkplan.polynomials import monomial_basis
from minkplan.sos_compiler import (
    CompilerError,
    compile_coa,
    compile_mvoe,
    compile_oa,
    extract_solution,
)


def solve_and_extract(compiled):
    solution, report = solve(compiled.problem)
    return extract_solution(compiled, solution, report)


def minkowski_samples(poly, radius, n, seed=0):
    buf = minkowski_sum_ball(poly, Ball(radius))
    indicator = lambda pts: np.array([buf.contains(x) for x in pts])
    return sample_in_region(indicator, buf.bbox(), n, seed=seed)


TRI = ConvexPolytope.from_points(np.array([[0.0, 0.0], [1.0, 0.0], [0.2, 0.9]]))
SQUARE = ConvexPolytope.from_points(
    np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
)


class TestCompileCOA:
    def test_single_vertex_block_layout(self):
        # K=1, n=2, degree=2: blocks are P (size 3), one vertex witness, one
        # convexity witness.
        c = compile_coa(ConvexPolytope.from_points(np.array([[0.3, -0.1]])), Ball(0.5), 2)
        names = [b.name for b in c.problem.psd_blocks]
        assert names == ["P", "W0", "C"]
        sizes = {b.name: b.size for b in c.problem.psd_blocks}
        assert sizes["P"] == 3
        assert c.problem.logdet_block == "P"

    def test_square_block_layout(self):
        c = compile_coa(SQUARE, Ball(0.2), 4)
        names = [b.name for b in c.problem.psd_blocks]
        assert names == ["P", "W0", "W1", "W2", "W3", "C"]
        sizes = {b.name: b.size for b in c.problem.psd_blocks}
        assert sizes["P"] == len(monomial_basis(2, 2))        # 6
        assert sizes["C"] == len(monomial_basis(4, 2))        # (x, u) joint basis

    def test_degree_validation(self):
        with pytest.raises(CompilerError):
            compile_coa(TRI, Ball(0.1), 3)
        with pytest.raises(CompilerError):
            compile_coa(TRI, Ball(0.1), 0)
        with pytest.raises(CompilerError):
            compile_coa(TRI, Ball(0.1), 8)

    def test_zero_radius_feasible(self):
        # r=0 collapses the sphere constraints to the vertices themselves.
        c = compile_coa(TRI, Ball(0.0), 2)
        sol = solve_and_extract(c)
        assert sol.report.ok
        for v in TRI.vertices:
            assert sol.polynomial(v) <= 1.0 + 1e-6

    @pytest.mark.parametrize("degree", [2, 4, 6])
    def test_identity_residual_and_containment(self, degree):
        c = compile_coa(TRI, Ball(0.3), degree)
        sol = solve_and_extract(c)
        assert sol.report.ok
        assert sol.identity_residual <= 1e-6
        pts = minkowski_samples(TRI, 0.3, 2000, seed=degree)
        assert np.max(sol.polynomial.evaluate_many(pts)) <= 1.0 + 1e-6

    def test_vertex_sphere_containment(self):
        # Lemma-level check: p(v - w) <= 1 for 10^3 boundary points per vertex.
        c = compile_coa(TRI, Ball(0.25), 4)
        sol = solve_and_extract(c)
        ang = np.linspace(0.0, 2 * np.pi, 1000, endpoint=False)
        ring = 0.25 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        for v in TRI.vertices:
            vals = sol.polynomial.evaluate_many(v - ring)
            assert np.max(vals) <= 1.0 + 1e-6

    def test_hessian_psd_at_random_points(self):
        c = compile_coa(TRI, Ball(0.3), 4)
        sol = solve_and_extract(c)
        rng = np.random.default_rng(7)
        pts = rng.uniform(-2.0, 2.0, size=(100, 2))
        for x in pts:
            H = sol.polynomial.hessian_at(x)
            assert np.linalg.eigvalsh(H).min() >= -1e-6

    def test_monotone_refinement(self):
        # Higher degree can only improve the log-det objective: the
        # lower-degree solution embeds by zero padding.
        objectives = []
        for degree in (2, 4, 6):
            c = compile_coa(TRI, Ball(0.3), degree)
            sol = solve_and_extract(c)
            objectives.append(sol.report.objective)
        assert objectives[0] <= objectives[1] + 1e-6
        assert objectives[1] <= objectives[2] + 1e-6

    def test_3d_tetrahedron(self):
        tet = ConvexPolytope.from_points(
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        )
        c = compile_coa(tet, Ball(0.2, dim=3), 2)
        sol = solve_and_extract(c)
        assert sol.report.ok
        assert sol.identity_residual <= 1e-6
        # every vertex sphere stays inside the unit sublevel set
        rng = np.random.default_rng(3)
        dirs = rng.normal(size=(200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for v in tet.vertices:
            vals = sol.polynomial.evaluate_many(v - 0.2 * dirs)
            assert np.max(vals) <= 1.0 + 1e-6

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(CompilerError):
            compile_coa(TRI, Ball(0.1, dim=3), 2)


class TestCompileOA:
    def test_block_layout(self):
        # L halfspaces: P, main witness, then L+1 multiplier Grams
        c = compile_oa(SQUARE, Ball(0.1), 2)
        names = [b.name for b in c.problem.psd_blocks]
        assert names == ["P", "W", "L0", "L1", "L2", "L3", "L4"]
        assert c.problem.psd_blocks[0].size == 3

    def test_3d_rejected(self):
        tet = ConvexPolytope.from_points(
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        )
        with pytest.raises(CompilerError):
            compile_oa(tet, Ball(0.1, dim=3), 2)

    def test_degenerate_polytope_rejected(self):
        seg = ConvexPolytope.from_points(np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(CompilerError):
            compile_oa(seg, Ball(0.1), 2)

    def test_square_contains_offset_disks(self):
        c = compile_oa(SQUARE, Ball(0.1), 2)
        sol = solve_and_extract(c)
        assert sol.report.ok
        ang = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
        ring = 0.1 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        for corner in SQUARE.vertices:
            assert np.max(sol.polynomial.evaluate_many(corner + ring)) <= 1.0 + 1e-6

    def test_zero_radius_contains_vertices(self):
        c = compile_oa(TRI, Ball(0.0), 2)
        sol = solve_and_extract(c)
        assert sol.report.ok
        for v in TRI.vertices:
            assert sol.polynomial(v) <= 1.0 + 1e-6

    @pytest.mark.parametrize("degree", [2, 4, 6])
    def test_identity_residual_and_containment(self, degree):
        c = compile_oa(TRI, Ball(0.3), degree)
        sol = solve_and_extract(c)
        assert sol.report.ok
        assert sol.identity_residual <= 1e-6
        pts = minkowski_samples(TRI, 0.3, 2000, seed=degree)
        assert np.max(sol.polynomial.evaluate_many(pts)) <= 1.0 + 1e-6

    def test_witness_reduction_is_lossless(self):
        # Reduced-basis certificates embed into the full-basis problem, so the
        # full optimum can only be larger. It is not larger by much: the extra
        # basis elements only span directions that cancel exactly in the
        # identity, which the interior-point solver resolves to looser
        # accuracy than the gap tolerance (the full problem is degenerate
        # along them). Hence one exact inequality and one loose band.
        reduced = solve_and_extract(compile_oa(TRI, Ball(0.3), 4))
        full = solve_and_extract(compile_oa(TRI, Ball(0.3), 4, full_witness=True))
        assert full.report.objective >= reduced.report.objective - 1e-6
        assert abs(full.report.objective - reduced.report.objective) < 0.05
        assert reduced.identity_residual <= 1e-6

    def test_monotone_refinement(self):
        objectives = []
        for degree in (2, 4, 6):
            sol = solve_and_extract(compile_oa(TRI, Ball(0.3), degree))
            objectives.append(sol.report.objective)
        assert objectives[0] <= objectives[1] + 1e-6
        assert objectives[1] <= objectives[2] + 1e-6

    def test_all_blocks_psd(self):
        # every Gram (p, witness, multipliers) comes back PSD within IPM slack
        c = compile_oa(TRI, Ball(0.2), 4)
        solution, report = solve(c.problem)
        for blk in c.problem.psd_blocks:
            w = np.linalg.eigvalsh(np.asarray(solution.blocks[blk.name]))
            assert w.min() >= -1e-7


class TestCompileMVOE:
    def test_single_center_recovers_ball(self):
        c = compile_mvoe(np.array([[0.4, -0.2]]), 0.3)
        sol = solve_and_extract(c)
        assert sol.report.ok
        # p(x) = ||(x - c)/r||^2 on the sublevel boundary: check radius in a
        # few directions
        for ang in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            d = np.array([np.cos(ang), np.sin(ang)])
            on = np.array([0.4, -0.2]) + 0.3 * d
            inside = np.array([0.4, -0.2]) + 0.27 * d
            out = np.array([0.4, -0.2]) + 0.33 * d
            assert abs(sol.polynomial(on) - 1.0) < 0.02
            assert sol.polynomial(inside) < 1.0
            assert sol.polynomial(out) > 1.0

    def test_zero_radius_degenerate_rejected(self):
        with pytest.raises(CompilerError):
            compile_mvoe(np.array([[0.0, 0.0], [2.0, 0.0]]), 0.0)

    def test_zero_radius_full_dimensional_ok(self):
        c = compile_mvoe(TRI.vertices, 0.0)
        sol = solve_and_extract(c)
        assert sol.report.ok
        for v in TRI.vertices:
            assert sol.polynomial(v) <= 1.0 + 1e-5

    def test_square_corners_bounded_by_circumball(self):
        centers = SQUARE.vertices
        r = 0.1
        c = compile_mvoe(centers, r)
        sol = solve_and_extract(c)
        # the circumscribed ball of radius sqrt(2)/2 + r is feasible, so the
        # MVOE area cannot exceed it
        A2 = sol.gram[1:, 1:]
        area = np.pi / np.sqrt(np.linalg.det(A2))
        R = np.sqrt(2.0) / 2.0 + r
        assert area <= np.pi * R * R + 1e-6
        # symmetry of the input implies the optimum is centred at the origin
        center = -np.linalg.solve(A2, sol.gram[1:, 0])
        assert np.allclose(center, 0.0, atol=1e-4)

    def test_surface_residual_small(self):
        c = compile_mvoe(np.array([[0.0, 0.0], [1.0, 0.5]]), 0.2)
        sol = solve_and_extract(c)
        assert sol.identity_residual <= 1e-5

    def test_empty_centers_rejected(self):
        with pytest.raises(CompilerError):
            compile_mvoe(np.zeros((0, 2)), 0.1)
