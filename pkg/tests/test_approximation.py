"""Tests for the certified approximation front end.

The oracles here are geometric, independent of the conic pipeline: closed-form
areas via the Steiner formula, rejection-sampled membership, and invariance of
the relative error under similarity transforms.
"""
import numpy as np
import pytest

import minkplan.approximation as approx_mod
from minkplan.approximation import (
    ApproxQuality,
    CertificationError,
    SublevelApproximation,
    approximate,
    quality,
)
from minkplan.conic_solver import SolverFailure
from minkplan.geometry import Ball, ConvexPolytope, minkowski_sum_ball, random_instance
from minkplan.sos_compiler import CompilerError

TRI = ConvexPolytope.from_points([[0.0, 0.0], [1.0, 0.1], [0.4, 0.8]])


def err_pct(poly, ball, degree, method, samples=120_000, seed=11):
    a = approximate(poly, ball, degree, method=method)
    q = quality(a, minkowski_sum_ball(poly, ball), samples=samples, seed=seed)
    return a, q


class TestApproximate:
    def test_point_ball_is_unit_disk(self):
        # One vertex plus a unit ball: the degree-2 set must be the disk itself.
        pt = ConvexPolytope.from_points([[0.3, -0.2]])
        a, q = err_pct(pt, Ball(1.0), 2, "coa", samples=400_000)
        assert abs(q.error_pct) < 1.0
        for ang in np.linspace(0.0, 2 * np.pi, 17):
            x = np.array([0.3 + np.cos(ang), -0.2 + np.sin(ang)])
            assert a.polynomial(x) == pytest.approx(1.0, abs=1e-4)

    def test_triangle_deg4_single_digit_error(self):
        _, q = err_pct(TRI, Ball(0.3), 4, "coa")
        assert 0.0 < q.error_pct < 10.0

    @pytest.mark.parametrize("method", ["coa", "oa"])
    def test_error_monotone_in_degree(self, method):
        errs = [err_pct(TRI, Ball(0.3), d, method)[1].error_pct for d in (2, 4, 6)]
        assert errs[0] > errs[1] > errs[2]

    def test_outer_margin_certified(self):
        for seed in range(4):
            poly, r = random_instance(seed)
            a = approximate(poly, Ball(r), 4, method="coa", seed=seed)
            assert a.outer_margin <= 1e-6
            assert a.identity_residual <= 1e-6

    def test_mvoe_matches_degree2_coa(self):
        # The two programs are the same optimization in different variables.
        a_mv, q_mv = err_pct(TRI, Ball(0.3), 2, "mvoe")
        a_co, q_co = err_pct(TRI, Ball(0.3), 2, "coa")
        assert q_mv.error_pct == pytest.approx(q_co.error_pct, abs=0.5)
        pts = np.random.default_rng(2).uniform(-0.5, 1.5, size=(400, 2))
        inside_mv = a_mv.polynomial.evaluate_many(pts) <= 1.0
        inside_co = a_co.polynomial.evaluate_many(pts) <= 1.0
        assert np.mean(inside_mv != inside_co) < 0.01

    def test_similarity_invariance(self):
        # Scaling and translating the instance cannot change the relative error.
        _, q0 = err_pct(TRI, Ball(0.3), 4, "coa")
        moved = ConvexPolytope.from_points(6.0 * TRI.vertices + np.array([40.0, -7.0]))
        _, q1 = err_pct(moved, Ball(6.0 * 0.3), 4, "coa")
        assert q1.error_pct == pytest.approx(q0.error_pct, abs=1.0)

    def test_3d_vertex_sphere_certification(self):
        tet = ConvexPolytope.from_points(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
        a = approximate(tet, Ball(0.2, dim=3), 2, method="coa")
        assert a.outer_margin <= 1e-6
        assert a.dim == 3

    def test_unknown_method_rejected(self):
        with pytest.raises(CompilerError):
            approximate(TRI, Ball(0.3), 2, method="newton")

    def test_mvoe_requires_degree_two(self):
        with pytest.raises(CompilerError):
            approximate(TRI, Ball(0.3), 4, method="mvoe")

    def test_solver_failure_propagates(self):
        # A single vertex with a zero-radius ball leaves log det unbounded.
        pt = ConvexPolytope.from_points([[0.1, 0.4]])
        with pytest.raises(SolverFailure):
            approximate(pt, Ball(0.0), 2, method="coa")

    def test_certification_catches_shrunken_solution(self, monkeypatch):
        real = approx_mod.extract_solution

        def doctored(compiled, solution, report):
            out = real(compiled, solution, report)
            out.polynomial = type(out.polynomial)(
                out.polynomial.basis, out.polynomial.coeffs * 1.25
            )
            return out

        monkeypatch.setattr(approx_mod, "extract_solution", doctored)
        with pytest.raises(CertificationError, match="outer-ness"):
            approximate(TRI, Ball(0.3), 4, method="coa")


class TestGramAndPersistence:
    def test_gram_reproduces_polynomial(self):
        a = approximate(TRI, Ball(0.3), 4, method="coa")
        pts = np.random.default_rng(0).uniform(-1.0, 2.0, size=(80, 2))
        Z = a.gram_basis.design_matrix(pts)
        vals = np.einsum("bi,ij,bj->b", Z, a.gram, Z)
        assert np.allclose(vals, a.polynomial.evaluate_many(pts), atol=1e-7)

    def test_gram_is_psd(self):
        for method in ("coa", "oa", "mvoe"):
            a = approximate(TRI, Ball(0.3), 2, method=method)
            assert np.linalg.eigvalsh(a.gram).min() >= -1e-7

    def test_roundtrip(self, tmp_path):
        a = approximate(TRI, Ball(0.3), 4, method="oa")
        path = tmp_path / "approx.json"
        a.save(path)
        b = SublevelApproximation.load(path)
        assert b.method == "oa" and b.degree == 4
        pts = np.random.default_rng(1).uniform(-1.0, 2.0, size=(40, 2))
        assert np.allclose(
            b.polynomial.evaluate_many(pts), a.polynomial.evaluate_many(pts), atol=1e-12
        )
        assert np.allclose(b.gram, a.gram)
        assert b.metadata == a.metadata

    def test_save_is_deterministic(self, tmp_path):
        a = approximate(TRI, Ball(0.3), 2, method="coa")
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        a.save(p1)
        a.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_unknown_schema(self):
        with pytest.raises(ValueError, match="schema"):
            SublevelApproximation.from_dict({"schema": "nope"})


class TestQuality:
    def test_steiner_area_used_for_exact(self):
        ex = minkowski_sum_ball(TRI, Ball(0.3))
        a = approximate(TRI, Ball(0.3), 4, method="coa")
        q = quality(a, ex, samples=50_000, seed=7)
        assert q.area_exact == pytest.approx(
            TRI.area() + TRI.perimeter() * 0.3 + np.pi * 0.09
        )
        assert q.samples == 50_000 and q.seed == 7
        assert q.error_pct_se > 0.0

    def test_same_seed_same_estimate(self):
        ex = minkowski_sum_ball(TRI, Ball(0.3))
        a = approximate(TRI, Ball(0.3), 2, method="coa")
        q1 = quality(a, ex, samples=20_000, seed=3)
        q2 = quality(a, ex, samples=20_000, seed=3)
        assert q1 == q2

    def test_rejects_3d(self):
        tet = ConvexPolytope.from_points(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
        a = approximate(tet, Ball(0.2, dim=3), 2, method="coa")
        with pytest.raises(ValueError, match="2D"):
            quality(a, minkowski_sum_ball(tet, Ball(0.2, dim=3)))
