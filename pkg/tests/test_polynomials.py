"""Polynomial layer: basis ordering, evaluation, calculus against finite differences."""
from __future__ import annotations

import math

import numpy as np
import pytest

from minkplan.polynomials import (
    MonomialBasis,
    Polynomial,
    PolynomialError,
    affine_substitute_matrix,
    basis_size,
    expand_gram,
    gram_to_coeff_matrix,
    monomial_basis,
    multiply_matrix,
    triangle_count,
    triangle_entries,
)


class TestBasis:
    def test_sizes_are_binomial(self):
        for n in (1, 2, 3, 4):
            for d in (0, 1, 2, 4, 6):
                b = monomial_basis(n, d)
                assert len(b) == math.comb(n + d, d) == basis_size(n, d)

    def test_graded_lex_order_two_vars(self):
        b = monomial_basis(2, 2)
        expected = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        assert [tuple(e) for e in b.exponents] == expected

    def test_constant_first(self):
        for n in (1, 2, 3):
            b = monomial_basis(n, 3)
            assert tuple(b.exponents[0]) == (0,) * n

    def test_index_round_trip(self):
        b = monomial_basis(3, 4)
        for i, e in enumerate(b.exponents):
            assert b.index(e) == i

    def test_design_matrix_values(self):
        b = monomial_basis(2, 2)
        row = b.design_matrix(np.array([[2.0, 3.0]]))[0]
        np.testing.assert_allclose(row, [1, 2, 3, 4, 6, 9])


class TestEvaluation:
    def test_known_polynomial(self):
        # p(x, y) = 1 + 2x + 3y^2
        p = Polynomial.from_terms(2, 2, {(0, 0): 1, (1, 0): 2, (0, 2): 3})
        assert p([1.0, 2.0]) == pytest.approx(1 + 2 + 12)
        np.testing.assert_allclose(p.evaluate_many(np.array([[0, 0], [1, 1]])), [1, 6])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        coeffs = rng.standard_normal(basis_size(3, 4))
        p = Polynomial(monomial_basis(3, 4), coeffs)
        h = 1e-5
        for _ in range(10):
            x = rng.uniform(-1, 1, 3)
            g = p.gradient_at(x)[0]
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                fd = (p(x + e) - p(x - e)) / (2 * h)
                assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_hessian_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        p = Polynomial(monomial_basis(2, 6), rng.standard_normal(basis_size(2, 6)))
        h = 1e-5
        x = rng.uniform(-1, 1, 2)
        H = p.hessian_at(x)[0]
        for a in range(2):
            for b in range(2):
                ea, eb = np.zeros(2), np.zeros(2)
                ea[a], eb[b] = h, h
                fd = (p(x + ea + eb) - p(x + ea - eb) - p(x - ea + eb) + p(x - ea - eb)) / (4 * h * h)
                assert H[a, b] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_hessian_symmetric(self):
        rng = np.random.default_rng(2)
        p = Polynomial(monomial_basis(3, 4), rng.standard_normal(basis_size(3, 4)))
        H = p.hessian_at(rng.uniform(-1, 1, (5, 3)))
        np.testing.assert_allclose(H, np.swapaxes(H, 1, 2), atol=1e-12)


class TestAlgebra:
    def test_multiply_matches_pointwise(self):
        rng = np.random.default_rng(3)
        a = Polynomial(monomial_basis(2, 3), rng.standard_normal(basis_size(2, 3)))
        b = Polynomial(monomial_basis(2, 2), rng.standard_normal(basis_size(2, 2)))
        prod = a * b
        for _ in range(20):
            x = rng.uniform(-1, 1, 2)
            assert prod(x) == pytest.approx(a(x) * b(x), rel=1e-12, abs=1e-12)

    def test_add_sub_scalars(self):
        p = Polynomial.from_terms(2, 2, {(1, 0): 1.0})
        q = 1 - p
        assert q([0.25, 0.0]) == pytest.approx(0.75)

    def test_degree(self):
        p = Polynomial.from_terms(2, 6, {(0, 0): 1, (2, 1): 5})
        assert p.degree() == 3


class TestAffineSubstitute:
    def test_composition_identity(self):
        # Oracle: p(c + Lw) evaluated directly equals substituted polynomial at w.
        rng = np.random.default_rng(4)
        p = Polynomial(monomial_basis(2, 4), rng.standard_normal(basis_size(2, 4)))
        c = rng.uniform(-1, 1, 2)
        L = rng.uniform(-1, 1, (2, 2))
        sub = p.affine_substitute(c, L)
        for _ in range(25):
            w = rng.uniform(-1, 1, 2)
            assert sub(w) == pytest.approx(p(c + L @ w), rel=1e-10, abs=1e-10)

    def test_dimension_change(self):
        # Substitute a 3-var polynomial with a map from R^2.
        rng = np.random.default_rng(5)
        p = Polynomial(monomial_basis(3, 3), rng.standard_normal(basis_size(3, 3)))
        c = rng.uniform(-1, 1, 3)
        L = rng.uniform(-1, 1, (3, 2))
        sub = p.affine_substitute(c, L)
        assert sub.num_vars == 2
        w = rng.uniform(-1, 1, 2)
        assert sub(w) == pytest.approx(p(c + L @ w), rel=1e-10)

    def test_substitute_matrix_agrees(self):
        rng = np.random.default_rng(6)
        b_from = monomial_basis(2, 4)
        b_to = monomial_basis(2, 4)
        c = rng.uniform(-1, 1, 2)
        L = rng.uniform(-1, 1, (2, 2))
        T = affine_substitute_matrix(b_from, c, L, b_to)
        coeffs = rng.standard_normal(len(b_from))
        direct = Polynomial(b_from, coeffs).affine_substitute(c, L).in_basis(b_to)
        np.testing.assert_allclose(T @ coeffs, direct.coeffs, atol=1e-12)


class TestHessianQuadraticForm:
    def test_matches_direct_quadratic_form(self):
        rng = np.random.default_rng(7)
        p = Polynomial(monomial_basis(2, 4), rng.standard_normal(basis_size(2, 4)))
        q = p.hessian_quadratic_form()
        assert q.num_vars == 4
        for _ in range(20):
            x = rng.uniform(-1, 1, 2)
            u = rng.uniform(-1, 1, 2)
            H = p.hessian_at(x)[0]
            assert q(np.concatenate([x, u])) == pytest.approx(u @ H @ u, rel=1e-10, abs=1e-10)


class TestGram:
    def test_expand_gram_identity_basis(self):
        # z = (1, x1, x2), P = I -> p = 1 + x1^2 + x2^2
        b = monomial_basis(2, 1)
        p = expand_gram(np.eye(3), b)
        expected = Polynomial.from_terms(2, 2, {(0, 0): 1, (2, 0): 1, (0, 2): 1})
        np.testing.assert_allclose(p.coeffs, expected.coeffs)

    def test_expand_gram_matches_quadratic_form(self):
        rng = np.random.default_rng(8)
        b = monomial_basis(2, 2)
        M = rng.standard_normal((len(b), len(b)))
        P = M + M.T
        p = expand_gram(P, b)
        for _ in range(20):
            x = rng.uniform(-1, 1, 2)
            z = b.design_matrix(x[None, :])[0]
            assert p(x) == pytest.approx(z @ P @ z, rel=1e-10, abs=1e-10)

    def test_gram_to_coeff_matrix_consistent(self):
        rng = np.random.default_rng(9)
        b = monomial_basis(2, 2)
        entries = triangle_entries(len(b))
        G = gram_to_coeff_matrix(2, 2)
        assert G.shape == (basis_size(2, 4), triangle_count(len(b)))
        vec = rng.standard_normal(len(entries))
        P = np.zeros((len(b), len(b)))
        for val, (i, j) in zip(vec, entries):
            P[i, j] = val
            P[j, i] = val
        np.testing.assert_allclose(G @ vec, expand_gram(P, b).coeffs, atol=1e-12)

    def test_multiply_matrix_agrees(self):
        rng = np.random.default_rng(10)
        fixed = Polynomial.from_terms(2, 1, {(0, 0): 0.5, (1, 0): -1.0, (0, 1): 2.0})
        b_from = monomial_basis(2, 3)
        b_to = monomial_basis(2, 4)
        M = multiply_matrix(fixed, b_from, b_to)
        coeffs = rng.standard_normal(len(b_from))
        direct = (fixed * Polynomial(b_from, coeffs)).in_basis(b_to)
        np.testing.assert_allclose(M @ coeffs, direct.coeffs, atol=1e-12)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        from minkplan.polynomials import load_polynomial, save_polynomial

        rng = np.random.default_rng(11)
        p = Polynomial(monomial_basis(2, 4), rng.standard_normal(basis_size(2, 4)))
        path = tmp_path / "p.json"
        save_polynomial(p, path)
        q = load_polynomial(path)
        assert q.num_vars == 2 and q.basis.max_degree == 4
        np.testing.assert_allclose(p.coeffs, q.coeffs)

    def test_length_mismatch_rejected(self):
        with pytest.raises(PolynomialError):
            Polynomial.from_dict({"num_vars": 2, "max_degree": 2, "coefficients": [1, 2, 3]})
