"""Dense multivariate polynomials over a graded-lexicographic monomial basis.

Coefficient vectors are always indexed by the full graded basis of a fixed
(num_vars, max_degree) pair, constant monomial first. Dimensions stay small
(n <= 4 after doubling for convexity witnesses, degree <= 12), so everything is
dense numpy; the point of this module is exact bookkeeping, not scale.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np


class PolynomialError(ValueError):
    pass


def basis_size(num_vars: int, max_degree: int) -> int:
    return math.comb(num_vars + max_degree, max_degree)


@dataclass(frozen=True)
class MonomialBasis:
    """All monomials in num_vars variables up to max_degree, graded-lex ordered.

    Graded: lower total degree first. Within a degree, lexicographic with x1
    heaviest, so for two variables the order starts 1, x1, x2, x1^2, x1 x2, x2^2.
    """

    num_vars: int
    max_degree: int
    exponents: np.ndarray = field(compare=False, repr=False)
    _index: dict = field(compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.exponents)

    def index(self, exponent) -> int:
        key = tuple(int(e) for e in exponent)
        try:
            return self._index[key]
        except KeyError:
            raise PolynomialError(f"monomial {key} not in basis({self.num_vars}, {self.max_degree})")

    def design_matrix(self, points: np.ndarray) -> np.ndarray:
        """Monomial values at each point: (N, len(basis))."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.shape[1] != self.num_vars:
            raise PolynomialError(f"points must be in R^{self.num_vars}")
        # Per-variable power tables keep memory at O(N * len(basis)).
        out = np.ones((len(pts), len(self.exponents)))
        for j in range(self.num_vars):
            table = pts[:, j : j + 1] ** np.arange(self.max_degree + 1)
            out *= table[:, self.exponents[:, j]]
        return out


@lru_cache(maxsize=None)
def monomial_basis(num_vars: int, max_degree: int) -> MonomialBasis:
    if num_vars < 1 or max_degree < 0:
        raise PolynomialError("need num_vars >= 1 and max_degree >= 0")
    exps = [
        e
        for e in itertools.product(range(max_degree + 1), repeat=num_vars)
        if sum(e) <= max_degree
    ]
    exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    arr = np.array(exps, dtype=np.int64)
    arr.flags.writeable = False
    return MonomialBasis(num_vars, max_degree, arr, {e: i for i, e in enumerate(exps)})


@dataclass(frozen=True)
class Polynomial:
    """Polynomial as a dense coefficient vector over a graded-lex basis."""

    basis: MonomialBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (len(self.basis),):
            raise PolynomialError(
                f"coefficient vector has length {c.shape}, basis needs {len(self.basis)}"
            )
        object.__setattr__(self, "coeffs", c)
        c.flags.writeable = False

    # -- construction ------------------------------------------------------

    @staticmethod
    def zero(num_vars: int, max_degree: int) -> "Polynomial":
        b = monomial_basis(num_vars, max_degree)
        return Polynomial(b, np.zeros(len(b)))

    @staticmethod
    def from_terms(num_vars: int, max_degree: int, terms: dict) -> "Polynomial":
        """terms maps exponent tuples to coefficients."""
        b = monomial_basis(num_vars, max_degree)
        c = np.zeros(len(b))
        for exp, val in terms.items():
            c[b.index(exp)] += val
        return Polynomial(b, c)

    @property
    def num_vars(self) -> int:
        return self.basis.num_vars

    def degree(self) -> int:
        """Largest total degree carried by a nonzero coefficient."""
        nz = np.nonzero(np.abs(self.coeffs) > 0)[0]
        if len(nz) == 0:
            return 0
        return int(self.basis.exponents[nz].sum(axis=1).max())

    def support(self) -> list:
        """Exponent tuples of the nonzero terms."""
        nz = np.nonzero(np.abs(self.coeffs) > 0)[0]
        return [tuple(int(x) for x in self.basis.exponents[k]) for k in nz]

    # -- evaluation --------------------------------------------------------

    def __call__(self, x) -> float:
        return float(self.basis.design_matrix(np.asarray(x, dtype=float))[0] @ self.coeffs)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        return self.basis.design_matrix(points) @ self.coeffs

    @cached_property
    def _grad_polys(self) -> tuple:
        return tuple(self.derivative(j) for j in range(self.num_vars))

    @cached_property
    def _hess_polys(self) -> tuple:
        g = self._grad_polys
        return tuple(tuple(g[i].derivative(j) for j in range(self.num_vars)) for i in range(self.num_vars))

    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([g.evaluate_many(pts) for g in self._grad_polys], axis=1)

    def hessian_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.num_vars
        out = np.empty((len(pts), n, n))
        for i in range(n):
            for j in range(n):
                out[:, i, j] = self._hess_polys[i][j].evaluate_many(pts)
        return out

    # -- algebra -----------------------------------------------------------

    def in_basis(self, basis: MonomialBasis) -> "Polynomial":
        """Re-express over another basis (must contain every nonzero monomial)."""
        if basis is self.basis:
            return self
        c = np.zeros(len(basis))
        for idx in np.nonzero(self.coeffs)[0]:
            c[basis.index(self.basis.exponents[idx])] = self.coeffs[idx]
        return Polynomial(basis, c)

    def _aligned(self, other: "Polynomial"):
        if self.num_vars != other.num_vars:
            raise PolynomialError("variable count mismatch")
        d = max(self.basis.max_degree, other.basis.max_degree)
        b = monomial_basis(self.num_vars, d)
        return self.in_basis(b), other.in_basis(b), b

    def __add__(self, other):
        if isinstance(other, (int, float)):
            c = self.coeffs.copy()
            c[0] += other
            return Polynomial(self.basis, c)
        a, b, base = self._aligned(other)
        return Polynomial(base, a.coeffs + b.coeffs)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        a, b, base = self._aligned(other)
        return Polynomial(base, a.coeffs - b.coeffs)

    def __rsub__(self, other):
        return (self * -1.0) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.basis, self.coeffs * float(other))
        if self.num_vars != other.num_vars:
            raise PolynomialError("variable count mismatch")
        deg = self.degree() + other.degree()
        b = monomial_basis(self.num_vars, deg)
        c = np.zeros(len(b))
        nz_a = np.nonzero(self.coeffs)[0]
        nz_b = np.nonzero(other.coeffs)[0]
        for ia in nz_a:
            ea = self.basis.exponents[ia]
            for ib in nz_b:
                c[b.index(ea + other.basis.exponents[ib])] += self.coeffs[ia] * other.coeffs[ib]
        return Polynomial(b, c)

    __radd__ = __add__
    __rmul__ = __mul__

    def derivative(self, var: int) -> "Polynomial":
        """Partial derivative with respect to variable `var`."""
        b = self.basis
        deg = max(b.max_degree - 1, 0)
        out_b = monomial_basis(b.num_vars, deg)
        c = np.zeros(len(out_b))
        for idx in np.nonzero(self.coeffs)[0]:
            e = b.exponents[idx]
            if e[var] == 0:
                continue
            shifted = e.copy()
            shifted[var] -= 1
            c[out_b.index(shifted)] += self.coeffs[idx] * e[var]
        return Polynomial(out_b, c)

    def affine_substitute(self, const, lin) -> "Polynomial":
        """p(const + lin @ w) as a polynomial in the new variables w.

        const is length-n, lin is (n, m); the result lives in m variables with the
        same total degree bound.
        """
        const = np.asarray(const, dtype=float)
        lin = np.asarray(lin, dtype=float)
        n = self.num_vars
        if const.shape != (n,) or lin.ndim != 2 or lin.shape[0] != n:
            raise PolynomialError("affine map shapes must be (n,) and (n, m)")
        m = lin.shape[1]
        deg = self.basis.max_degree
        out_b = monomial_basis(m, deg)
        # Memoized powers of each substituted coordinate polynomial.
        coords = []
        for j in range(n):
            terms = {tuple(np.eye(m, dtype=int)[k]): lin[j, k] for k in range(m)}
            terms[(0,) * m] = terms.get((0,) * m, 0.0) + const[j]
            coords.append(Polynomial.from_terms(m, 1, terms))
        pow_cache = [{0: Polynomial.from_terms(m, 0, {(0,) * m: 1.0})} for _ in range(n)]

        def coord_pow(j, k):
            if k not in pow_cache[j]:
                pow_cache[j][k] = coord_pow(j, k - 1) * coords[j]
            return pow_cache[j][k]

        acc = np.zeros(len(out_b))
        for idx in np.nonzero(self.coeffs)[0]:
            e = self.basis.exponents[idx]
            term = None
            for j in range(n):
                if e[j]:
                    f = coord_pow(j, int(e[j]))
                    term = f if term is None else term * f
            if term is None:
                acc[0] += self.coeffs[idx]
            else:
                acc += self.coeffs[idx] * term.in_basis(out_b).coeffs
        return Polynomial(out_b, acc)

    def hessian_quadratic_form(self) -> "Polynomial":
        """q(x, u) = u' H_p(x) u in 2n variables (x first, then u)."""
        n = self.num_vars
        deg = max(self.basis.max_degree, 2)
        out_b = monomial_basis(2 * n, deg)
        c = np.zeros(len(out_b))
        for idx in np.nonzero(self.coeffs)[0]:
            e = self.basis.exponents[idx]
            for a in range(n):
                for b in range(n):
                    if a == b:
                        factor = e[a] * (e[a] - 1)
                    else:
                        factor = e[a] * e[b]
                    if factor == 0:
                        continue
                    ee = np.zeros(2 * n, dtype=np.int64)
                    ee[:n] = e
                    ee[a] -= 1
                    ee[b] -= 1
                    ee[n + a] += 1
                    ee[n + b] += 1
                    c[out_b.index(ee)] += self.coeffs[idx] * factor
        return Polynomial(out_b, c)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "max_degree": self.basis.max_degree,
            "coefficients": [float(c) for c in self.coeffs],
        }

    @staticmethod
    def from_dict(data: dict) -> "Polynomial":
        try:
            n = int(data["num_vars"])
            d = int(data["max_degree"])
            coeffs = np.asarray(data["coefficients"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise PolynomialError(f"malformed polynomial JSON: {exc}")
        b = monomial_basis(n, d)
        if coeffs.shape != (len(b),):
            raise PolynomialError(
                f"polynomial JSON has {coeffs.size} coefficients, basis({n},{d}) needs {len(b)}"
            )
        return Polynomial(b, coeffs)


def load_polynomial(path) -> Polynomial:
    with open(path) as f:
        return Polynomial.from_dict(json.load(f))


def save_polynomial(poly: Polynomial, path) -> None:
    with open(path, "w") as f:
        json.dump(poly.to_dict(), f)
        f.write("\n")


# -- Gram-matrix bookkeeping -----------------------------------------------
#
# Symmetric matrix entries are everywhere ordered column-major over the upper
# triangle: (0,0), (0,1), (1,1), (0,2), (1,2), (2,2), ...  This matches the
# scaled-triangle vectorization used by the conic solver, so one convention
# covers the whole pipeline.


def triangle_entries(size: int) -> list[tuple[int, int]]:
    return [(i, j) for j in range(size) for i in range(j + 1)]


def triangle_count(size: int) -> int:
    return size * (size + 1) // 2


def expand_gram(P: np.ndarray, basis: MonomialBasis) -> Polynomial:
    """z(x)' P z(x) for z the given monomial basis; P is symmetrized first.

    Works for any basis, including restricted ones; the cached pair table only
    applies to the canonical full graded basis.
    """
    P = np.asarray(P, dtype=float)
    s = len(basis)
    if P.shape != (s, s):
        raise PolynomialError(f"Gram matrix must be {s}x{s} for this basis")
    P = 0.5 * (P + P.T)
    out_b = monomial_basis(basis.num_vars, 2 * basis.max_degree)
    c = np.zeros(len(out_b))
    if basis is monomial_basis(basis.num_vars, basis.max_degree):
        pair_idx = _pair_index(basis.num_vars, basis.max_degree)
        for i in range(s):
            for j in range(s):
                c[pair_idx[i, j]] += P[i, j]
    else:
        for i in range(s):
            for j in range(s):
                c[out_b.index(basis.exponents[i] + basis.exponents[j])] += P[i, j]
    return Polynomial(out_b, c)


@lru_cache(maxsize=None)
def _pair_index(num_vars: int, half_degree: int) -> np.ndarray:
    """Index of z_i * z_j in the degree-2d basis, for z the degree-d basis."""
    zb = monomial_basis(num_vars, half_degree)
    full = monomial_basis(num_vars, 2 * half_degree)
    s = len(zb)
    out = np.empty((s, s), dtype=np.int64)
    for i in range(s):
        for j in range(s):
            out[i, j] = full.index(zb.exponents[i] + zb.exponents[j])
    return out


@lru_cache(maxsize=None)
def gram_to_coeff_matrix(num_vars: int, half_degree: int) -> np.ndarray:
    """Linear map from triangle-ordered Gram entries to coefficient vectors.

    Columns follow triangle_entries(len(basis)); off-diagonal entries count twice
    since they appear symmetrically in z' P z.
    """
    zb = monomial_basis(num_vars, half_degree)
    full = monomial_basis(num_vars, 2 * half_degree)
    pair_idx = _pair_index(num_vars, half_degree)
    entries = triangle_entries(len(zb))
    G = np.zeros((len(full), len(entries)))
    for col, (i, j) in enumerate(entries):
        G[pair_idx[i, j], col] += 1.0 if i == j else 2.0
    return G


def affine_substitute_matrix(basis_from: MonomialBasis, const, lin, basis_to: MonomialBasis) -> np.ndarray:
    """Matrix T with coeffs(p(const + lin w)) = T @ coeffs(p)."""
    T = np.zeros((len(basis_to), len(basis_from)))
    for k in range(len(basis_from)):
        unit = np.zeros(len(basis_from))
        unit[k] = 1.0
        img = Polynomial(basis_from, unit).affine_substitute(const, lin).in_basis(basis_to)
        T[:, k] = img.coeffs
    return T


def multiply_matrix(fixed: Polynomial, basis_from: MonomialBasis, basis_to: MonomialBasis) -> np.ndarray:
    """Matrix M with coeffs(fixed * q) = M @ coeffs(q) for q over basis_from."""
    if fixed.num_vars != basis_from.num_vars:
        raise PolynomialError("variable count mismatch")
    M = np.zeros((len(basis_to), len(basis_from)))
    nz = np.nonzero(fixed.coeffs)[0]
    for col in range(len(basis_from)):
        e_col = basis_from.exponents[col]
        for idx in nz:
            M[basis_to.index(fixed.basis.exponents[idx] + e_col), col] += fixed.coeffs[idx]
    return M
