"""Compilation of sum-of-squares containment programs to the conic IR.

Three program families share the machinery:

* COA: p is SOS-convex and exceeds 1 nowhere on any vertex sphere of the
  polytope. Per vertex v the identity

      1 - p(v - w) - mu_v(w) (r^2 - w'w) = sigma_v(w),  sigma_v SOS,

  holds with a free (not sign-constrained) multiplier mu_v, since the sphere is
  an equality-described set. Convexity enters as u' Hp(x) u being SOS in (x, u).
* OA: a one-shot S-procedure over the polytope x ball product set. The paper
  form is

      1 - p(y - w) - l0(y,w) (r^2 - w'w) - sum_i li(y,w) (b_i - a_i'y)  SOS

  with every multiplier SOS (inequality-described set). We compile it in the
  shifted coordinates (u, w) = (y - w, w), an invertible degree-preserving
  change of variables, and restrict multiplier supports to l0 = l0(w) and
  li = li(u). Restricted multipliers are still polynomials in (y, w), so any
  feasible point remains a valid containment certificate; the restriction plus
  a witness basis cut to the identity's support shrinks the SDP by an order
  of magnitude at degree 6 with measured approximation error unchanged.
  Multipliers have the degree of p itself; anything lower loses most of the
  tightness (degree-2 error jumps from ~40% to ~1000% with constant
  multipliers).
* MVOE: minimum-volume ellipsoid containing a union of equal-radius balls, the
  classic quadratic S-lemma LMI, used as the degree-2 exactness baseline.

All identities become sparse linear equalities between Gram entries, free
multiplier coefficients, and fixed numbers; every Gram block is one PSD block in
the IR and the objective maximizes log det of the Gram of p (for MVOE, of the
squared shape matrix). Everything is dense-coefficient: n <= 4 after variable
doubling, degree <= 6.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .conic_solver import ConicProblem, ConicSolution, PSDBlock, SolverReport
from .geometry import Ball, ConvexPolytope, GeometryError
from .polynomials import (
    MonomialBasis,
    Polynomial,
    expand_gram,
    gram_to_coeff_matrix,
    monomial_basis,
    multiply_matrix,
    triangle_count,
)


class CompilerError(ValueError):
    pass


def _check_degree(degree: int) -> int:
    if degree % 2 != 0 or not 2 <= degree <= 6:
        raise CompilerError(f"polynomial degree must be even and in [2, 6], got {degree}")
    return degree


def _ball_poly(num_vars: int, radius: float, offset: int = 0, total_vars: int | None = None) -> Polynomial:
    """r^2 - sum of squares of variables [offset, offset+num_vars)."""
    total = total_vars if total_vars is not None else num_vars
    terms = {(0,) * total: radius * radius}
    for j in range(num_vars):
        e = [0] * total
        e[offset + j] = 2
        terms[tuple(e)] = -1.0
    return Polynomial.from_terms(total, 2, terms)


@lru_cache(maxsize=None)
def _vertex_substitution_cache(n: int, deg: int):
    """Structure for x -> (v - w) substitution: per target/source exponent pairs.

    Returns rows of (target_idx, source_idx, sign * binomials, power exponents)
    so the numeric matrix for a concrete v is a cheap fill.
    """
    src = monomial_basis(n, deg)
    entries = []
    for e_idx in range(len(src)):
        e = src.exponents[e_idx]
        ranges = [range(int(ei) + 1) for ei in e]
        for alpha in itertools.product(*ranges):
            coeff = (-1.0) ** sum(alpha)
            for j in range(n):
                coeff *= math.comb(int(e[j]), alpha[j])
            entries.append((src.index(alpha), e_idx, coeff, tuple(int(e[j]) - alpha[j] for j in range(n))))
    return src, tuple(entries)


def _vertex_substitution_matrix(n: int, deg: int, v: np.ndarray) -> np.ndarray:
    """T with coeffs(p(v - w)) = T @ coeffs(p), both over basis(n, deg)."""
    src, entries = _vertex_substitution_cache(n, deg)
    T = np.zeros((len(src), len(src)))
    vpow = np.vstack([v**k for k in range(deg + 1)])   # (deg+1, n)
    for tgt, e_idx, coeff, powers in entries:
        term = coeff
        for j in range(n):
            term *= vpow[powers[j], j]
        T[tgt, e_idx] += term
    return T


@lru_cache(maxsize=None)
def _split_substitution_matrix(n: int, deg: int) -> np.ndarray:
    """T with coeffs(p(y - w)) = T @ coeffs(p); target basis(2n, deg) in (y, w)."""
    src = monomial_basis(n, deg)
    tgt = monomial_basis(2 * n, deg)
    T = np.zeros((len(tgt), len(src)))
    for e_idx in range(len(src)):
        e = src.exponents[e_idx]
        ranges = [range(int(ei) + 1) for ei in e]
        for alpha in itertools.product(*ranges):
            coeff = (-1.0) ** sum(alpha)
            for j in range(n):
                coeff *= math.comb(int(e[j]), alpha[j])
            beta = tuple(int(e[j]) - alpha[j] for j in range(n)) + alpha
            T[tgt.index(beta), e_idx] += coeff
    return T


@lru_cache(maxsize=None)
def _hessian_form_matrix(n: int, deg: int) -> np.ndarray:
    """Map p coefficients to coefficients of u' Hp(x) u over basis(2n, deg)."""
    src = monomial_basis(n, deg)
    tgt = monomial_basis(2 * n, deg)
    H = np.zeros((len(tgt), len(src)))
    for k in range(len(src)):
        unit = np.zeros(len(src))
        unit[k] = 1.0
        q = Polynomial(src, unit).hessian_quadratic_form().in_basis(tgt)
        H[:, k] = q.coeffs
    return H


def _convexity_witness_basis(n: int, half_degree: int) -> MonomialBasis:
    # Full graded basis in (x, u); small enough that pruning buys nothing here.
    return monomial_basis(2 * n, half_degree)


def _masked_basis(total_vars: int, degree: int, active) -> MonomialBasis:
    """Graded basis restricted to monomials supported on the active variables."""
    full = monomial_basis(total_vars, degree)
    keep = [
        tuple(int(x) for x in e)
        for e in full.exponents
        if all(e[j] == 0 or active[j] for j in range(total_vars))
    ]
    exps = np.array(keep, dtype=np.int64).reshape(len(keep), total_vars)
    return MonomialBasis(total_vars, degree, exps, {e: i for i, e in enumerate(keep)})


def _gram_to_coeff_matrix_masked(basis: MonomialBasis, target: MonomialBasis) -> np.ndarray:
    """Coefficients of z' G z in `target` from triangle entries of G over `basis`."""
    out = np.zeros((len(target), triangle_count(len(basis))))
    col = 0
    for j in range(len(basis)):
        for i in range(j + 1):
            e = tuple(int(x) for x in basis.exponents[i] + basis.exponents[j])
            out[target.index(e), col] = 1.0 if i == j else 2.0
            col += 1
    return out


def _support_reduced_witness(n: int, half_degree: int, profiles) -> MonomialBasis:
    """Witness basis for an SOS identity with separated variable groups.

    `profiles` holds the (u-degree, w-degree) pairs occurring across the
    identity's terms. A witness monomial m can appear in some square only if
    its doubled profile lies in the convex hull of those pairs (Newton-polytope
    support argument, exact here because each profile level is fully populated
    with monomials). Falls back to the full graded basis when the hull is
    degenerate.
    """
    pts = np.array(sorted(set((float(a), float(b)) for a, b in profiles)))
    hull = ConvexPolytope.from_points(pts)
    full = monomial_basis(2 * n, half_degree)
    if not hull.is_full_dimensional():
        return full
    keep = []
    for e in full.exponents:
        prof = np.array([2.0 * sum(int(x) for x in e[:n]), 2.0 * sum(int(x) for x in e[n:])])
        if hull.contains(prof, tol=1e-9):
            keep.append(tuple(int(x) for x in e))
    exps = np.array(keep, dtype=np.int64).reshape(len(keep), 2 * n)
    return MonomialBasis(2 * n, half_degree, exps, {e: i for i, e in enumerate(keep)})


@dataclass
class CompiledSOS:
    """A compiled containment program plus the layout needed to read it back."""

    problem: ConicProblem
    method: str                  # coa | oa | mvoe
    num_vars: int
    degree: int
    radius: float
    vertices: np.ndarray | None = None
    halfspaces: tuple | None = None
    centers: np.ndarray | None = None
    multiplier_basis: MonomialBasis | None = None
    witness_basis: MonomialBasis | None = None
    convexity_basis: MonomialBasis | None = None
    ball_multiplier_basis: MonomialBasis | None = None


@dataclass
class SOSSolution:
    """Extracted certificate: the polynomial, its Gram, and all multipliers."""

    polynomial: Polynomial
    gram: np.ndarray
    gram_basis: MonomialBasis
    multipliers: list
    identity_residual: float
    report: SolverReport
    convexity_gram: np.ndarray | None = None
    witness_grams: list | None = None


def compile_coa(poly: ConvexPolytope, ball: Ball, degree: int) -> CompiledSOS:
    """Convex outer approximation: per-vertex sphere identities + SOS-convexity.

    Variables: Gram of p (log-det objective), one witness Gram per vertex, free
    multiplier coefficients per vertex, one convexity witness Gram.
    """
    v = np.asarray(poly.vertices, dtype=float)
    if ball.dim != poly.dim:
        raise CompilerError(f"ball is {ball.dim}D but polytope is {poly.dim}D")
    radius = ball.radius
    degree = _check_degree(degree)
    n = v.shape[1]
    K = len(v)
    half = degree // 2

    zb = monomial_basis(n, half)                 # basis of p's Gram
    full = monomial_basis(n, degree)             # coefficient space of identities
    mu_b = monomial_basis(n, degree - 2)         # free multiplier coefficients
    conv_b = _convexity_witness_basis(n, half)   # convexity witness Gram basis
    q_full = monomial_basis(2 * n, degree)       # coefficient space of u'Hu

    G_p = gram_to_coeff_matrix(n, half)                       # coeffs(p) from P entries
    G_w = G_p                                                 # witnesses share the basis
    G_c = gram_to_coeff_matrix_for(conv_b)
    M_mu = multiply_matrix(_ball_poly(n, radius), mu_b, full)  # mu * (r^2 - w'w)
    H_map = _hessian_form_matrix(n, degree) @ G_p             # coeffs(u'Hu) from P entries

    tri_p = triangle_count(len(zb))
    tri_w = triangle_count(len(zb))
    tri_c = triangle_count(len(conv_b))
    m_mu = len(mu_b)

    blocks = [PSDBlock("P", len(zb))]
    blocks += [PSDBlock(f"W{i}", len(zb)) for i in range(K)]
    blocks.append(PSDBlock("C", len(conv_b)))
    free_names = tuple(f"mu{i}_{k}" for i in range(K) for k in range(m_mu))

    col_P = 0
    col_W = [tri_p + i * tri_w for i in range(K)]
    col_C = tri_p + K * tri_w
    col_mu = [col_C + tri_c + i * m_mu for i in range(K)]
    n_cols = col_C + tri_c + K * m_mu

    n_rows = K * len(full) + len(q_full)
    E = np.zeros((n_rows, n_cols))
    rhs = np.zeros(n_rows)

    for i in range(K):
        r0 = i * len(full)
        T = _vertex_substitution_matrix(n, degree, v[i])
        # 1 - p(v - w) - mu(w)(r^2 - w'w) - sigma(w) = 0 per coefficient
        E[r0 : r0 + len(full), col_P : col_P + tri_p] = T @ G_p
        E[r0 : r0 + len(full), col_mu[i] : col_mu[i] + m_mu] = M_mu
        E[r0 : r0 + len(full), col_W[i] : col_W[i] + tri_w] = G_w
        rhs[r0] = 1.0

    r0 = K * len(full)
    E[r0 : r0 + len(q_full), col_P : col_P + tri_p] = H_map
    E[r0 : r0 + len(q_full), col_C : col_C + tri_c] = -G_c

    problem = ConicProblem(
        psd_blocks=tuple(blocks),
        free_names=free_names,
        eq_rows=sp.csr_matrix(E),
        eq_rhs=rhs,
        logdet_block="P",
    )
    return CompiledSOS(
        problem=problem, method="coa", num_vars=n, degree=degree, radius=float(radius),
        vertices=v, multiplier_basis=mu_b, witness_basis=zb, convexity_basis=conv_b,
    )


def _oa_constraint_polys(A: np.ndarray, b: np.ndarray, radius: float) -> list:
    """The product-set description in shifted coordinates (u, w), u = y - w:

    index 0 is the ball r^2 - w'w; index i >= 1 is halfspace i of the obstacle,
    b_i - a_i'y = b_i - a_i'u - a_i'w.
    """
    n = A.shape[1]
    polys = [_ball_poly(n, radius, offset=n, total_vars=2 * n)]
    for i in range(len(b)):
        terms = {(0,) * (2 * n): float(b[i])}
        for j in range(n):
            e = [0] * (2 * n)
            e[j] = 1
            terms[tuple(e)] = -float(A[i, j])
            e = [0] * (2 * n)
            e[n + j] = 1
            terms[tuple(e)] = -float(A[i, j])
        polys.append(Polynomial.from_terms(2 * n, 1, terms))
    return polys


def compile_oa(poly: ConvexPolytope, ball: Ball, degree: int, *, full_witness: bool = False) -> CompiledSOS:
    """One-shot outer approximation over the polytope x ball product set (2D).

    Compiled in shifted coordinates (u, w) = (y - w, w): the identity is

        1 - p(u) - l0(w)(r^2 - w'w) - sum_i li(u)(b_i - a_i'u - a_i'w) = sigma(u, w)

    with l0, li, sigma all SOS and the multipliers of the same degree as p. The
    sigma basis keeps only monomials compatible with the identity's support;
    `full_witness` disables that reduction (used to check it changes nothing).
    """
    try:
        A, b = poly.halfspaces()
    except GeometryError as exc:
        raise CompilerError(f"outer approximation needs a halfspace form: {exc}") from exc
    if ball.dim != poly.dim:
        raise CompilerError(f"ball is {ball.dim}D but polytope is {poly.dim}D")
    radius = ball.radius
    degree = _check_degree(degree)
    n = 2
    L = A.shape[0]
    half = degree // 2
    mdeg = degree                                # multiplier degree
    ident_deg = mdeg + 2                         # set by the l0 * ball product

    zb = monomial_basis(n, half)
    full = monomial_basis(2 * n, ident_deg)
    pb = monomial_basis(n, degree)

    u_active = [True] * n + [False] * n
    w_active = [False] * n + [True] * n
    ball_b = _masked_basis(2 * n, mdeg // 2, w_active)       # l0 Gram basis
    lam_b = _masked_basis(2 * n, mdeg // 2, u_active)        # li Gram basis
    ball_full = _masked_basis(2 * n, mdeg, w_active)
    lam_full = _masked_basis(2 * n, mdeg, u_active)

    constraints = _oa_constraint_polys(A, b, radius)

    if full_witness:
        wb = monomial_basis(2 * n, ident_deg // 2)
    else:
        # (u-degree, w-degree) profiles across 1, p(u), and multiplier products
        profiles = {(0, 0)} | {(d, 0) for d in range(degree + 1)}
        for mult_basis, g in zip([ball_full] + [lam_full] * L, constraints):
            for me in mult_basis.exponents:
                mu, mw = sum(int(x) for x in me[:n]), sum(int(x) for x in me[n:])
                for ge in g.support():
                    gu, gw = sum(int(x) for x in ge[:n]), sum(int(x) for x in ge[n:])
                    profiles.add((mu + gu, mw + gw))
        wb = _support_reduced_witness(n, ident_deg // 2, profiles)

    # p(u) embeds directly: no cross terms in the shifted coordinates
    emb = np.zeros((len(full), len(pb)))
    for k, e in enumerate(pb.exponents):
        emb[full.index(tuple(int(x) for x in e) + (0,) * n), k] = 1.0

    G_p = gram_to_coeff_matrix(n, half)
    G_wit = _gram_to_coeff_matrix_masked(wb, full)
    G_ball = _gram_to_coeff_matrix_masked(ball_b, ball_full)
    G_lam = _gram_to_coeff_matrix_masked(lam_b, lam_full)
    mult_mats = [multiply_matrix(constraints[0], ball_full, full) @ G_ball]
    mult_mats += [multiply_matrix(g, lam_full, full) @ G_lam for g in constraints[1:]]

    tri_p = triangle_count(len(zb))
    tri_w = triangle_count(len(wb))
    tri_0 = triangle_count(len(ball_b))
    tri_l = triangle_count(len(lam_b))

    blocks = [PSDBlock("P", len(zb)), PSDBlock("W", len(wb)), PSDBlock("L0", len(ball_b))]
    blocks += [PSDBlock(f"L{i + 1}", len(lam_b)) for i in range(L)]

    col_W = tri_p
    col_0 = tri_p + tri_w
    col_L = [col_0 + tri_0 + i * tri_l for i in range(L)]
    n_cols = col_0 + tri_0 + L * tri_l

    E = np.zeros((len(full), n_cols))
    rhs = np.zeros(len(full))
    rhs[0] = 1.0
    E[:, :tri_p] = emb @ G_p
    E[:, col_W : col_W + tri_w] = G_wit
    E[:, col_0 : col_0 + tri_0] = mult_mats[0]
    for i in range(L):
        E[:, col_L[i] : col_L[i] + tri_l] = mult_mats[i + 1]

    # rows for monomials no term can produce are identically zero; drop them
    keep = np.flatnonzero((np.abs(E).sum(axis=1) > 0) | (rhs != 0))
    problem = ConicProblem(
        psd_blocks=tuple(blocks),
        eq_rows=sp.csr_matrix(E[keep]),
        eq_rhs=rhs[keep],
        logdet_block="P",
    )
    return CompiledSOS(
        problem=problem, method="oa", num_vars=n, degree=degree, radius=float(radius),
        halfspaces=(A, b), multiplier_basis=lam_b, witness_basis=wb,
        ball_multiplier_basis=ball_b,
    )


def compile_mvoe(centers, radius: float) -> CompiledSOS:
    """Minimum-volume ellipsoid covering equal-radius balls at given centers.

    Ellipsoid {x : ||Ax + b|| <= 1} with lifted variables (A^2, Ab); one S-lemma
    LMI per ball, log-det objective on A^2. Rejects unions that are not
    full-dimensional (all radii zero with affinely dependent centers).
    """
    c = np.asarray(centers, dtype=float)
    if c.ndim != 2 or c.shape[1] not in (2, 3):
        raise CompilerError("centers must be a (K, 2) or (K, 3) array")
    if len(c) == 0:
        raise CompilerError("at least one ball center is required")
    if radius < 0 or not np.isfinite(radius):
        raise CompilerError("radius must be finite and nonnegative")
    n = c.shape[1]
    K = len(c)
    if radius == 0.0 and np.linalg.matrix_rank(c - c[0], tol=1e-12) < n:
        raise CompilerError("degenerate input: zero radius with affinely dependent centers")

    m = 2 * n + 1
    blocks = [PSDBlock("A2", n)]
    blocks += [PSDBlock(f"tau{i}", 1) for i in range(K)]
    blocks += [PSDBlock(f"S{i}", m) for i in range(K)]
    free_names = tuple(f"bt{j}" for j in range(n))

    prob_layout = ConicProblem(psd_blocks=tuple(blocks), free_names=free_names, logdet_block="A2")

    rows = []
    rhs_list = []

    def add_row(cols: dict, rhs_val: float):
        rows.append(cols)
        rhs_list.append(rhs_val)

    for i in range(K):
        ci = c[i]
        c_scal = float(ci @ ci) - radius * radius
        tau = prob_layout.entry_index(f"tau{i}", 0, 0)
        # S_i + LMI_i = 0 entrywise over the upper triangle, with
        # LMI = [[A2 - tau I, bt + tau c_i, 0], [., -1 - tau c_scal, bt'], [0, bt, -A2]]
        for col in range(m):
            for row in range(col + 1):
                cols = {prob_layout.entry_index(f"S{i}", row, col): 1.0}
                rhs_val = 0.0
                if row < n and col < n:
                    cols[prob_layout.entry_index("A2", row, col)] = cols.get(prob_layout.entry_index("A2", row, col), 0.0) + 1.0
                    if row == col:
                        cols[tau] = cols.get(tau, 0.0) - 1.0
                elif row < n and col == n:
                    cols[prob_layout.free_index(f"bt{row}")] = 1.0
                    cols[tau] = cols.get(tau, 0.0) + float(ci[row])
                elif row < n and col > n:
                    pass                                   # zero block
                elif row == n and col == n:
                    cols[tau] = cols.get(tau, 0.0) - c_scal
                    rhs_val = 1.0                          # -1 moves to the rhs
                elif row == n and col > n:
                    cols[prob_layout.free_index(f"bt{col - n - 1}")] = 1.0
                else:                                      # bottom-right -A2
                    idx = prob_layout.entry_index("A2", row - n - 1, col - n - 1)
                    cols[idx] = cols.get(idx, 0.0) - 1.0
                add_row(cols, rhs_val)

    data, ri, ci_ = [], [], []
    for r, cols in enumerate(rows):
        for idx, val in cols.items():
            data.append(val)
            ri.append(r)
            ci_.append(idx)
    E = sp.csr_matrix((data, (ri, ci_)), shape=(len(rows), prob_layout.num_vars))

    problem = ConicProblem(
        psd_blocks=tuple(blocks), free_names=free_names,
        eq_rows=E, eq_rhs=np.array(rhs_list), logdet_block="A2",
    )
    return CompiledSOS(problem=problem, method="mvoe", num_vars=n, degree=2,
                       radius=float(radius), centers=c)


def gram_to_coeff_matrix_for(basis: MonomialBasis) -> np.ndarray:
    return gram_to_coeff_matrix(basis.num_vars, basis.max_degree)


def extract_solution(compiled: CompiledSOS, solution: ConicSolution, report: SolverReport) -> SOSSolution:
    """Read Gram blocks back into polynomials and recheck the identities.

    The identity residual is recomputed with plain polynomial algebra, not the
    equality matrices the compiler emitted, so a bookkeeping bug on either side
    shows up as a nonzero residual.
    """
    if compiled.method == "mvoe":
        return _extract_mvoe(compiled, solution, report)

    n = compiled.num_vars
    degree = compiled.degree
    half = degree // 2
    zb = monomial_basis(n, half)
    P = np.asarray(solution.blocks["P"])
    P = 0.5 * (P + P.T)
    p = expand_gram(P, zb)

    residual = 0.0
    mults = []
    witnesses = []
    conv_gram = None

    if compiled.method == "coa":
        mu_b = compiled.multiplier_basis
        ball = _ball_poly(n, compiled.radius)
        for i, v in enumerate(compiled.vertices):
            mu_coeffs = np.array([solution.free[f"mu{i}_{k}"] for k in range(len(mu_b))])
            mu = Polynomial(mu_b, mu_coeffs)
            mults.append(mu)
            W = solution.blocks[f"W{i}"]
            witnesses.append(W)
            shifted = p.affine_substitute(v, -np.eye(n))
            res_poly = 1 - shifted - mu * ball - expand_gram(W, zb)
            residual = max(residual, float(np.max(np.abs(res_poly.coeffs))))
        conv_gram = solution.blocks["C"]
        q = p.hessian_quadratic_form().in_basis(monomial_basis(2 * n, degree))
        res_poly = q - expand_gram(conv_gram, compiled.convexity_basis).in_basis(monomial_basis(2 * n, degree))
        residual = max(residual, float(np.max(np.abs(res_poly.coeffs))))
    else:
        A, b = compiled.halfspaces
        constraints = _oa_constraint_polys(A, b, compiled.radius)
        # identity in the shifted coordinates: 1 - p(u) - sum(mult * constraint) - sigma
        lift = np.zeros((len(monomial_basis(2 * n, degree)), len(monomial_basis(n, degree))))
        src = monomial_basis(n, degree)
        tgt = monomial_basis(2 * n, degree)
        for k, e in enumerate(src.exponents):
            lift[tgt.index(tuple(int(x) for x in e) + (0,) * n), k] = 1.0
        p_joint = Polynomial(tgt, lift @ p.in_basis(src).coeffs)
        acc = 1 - p_joint - expand_gram(solution.blocks["W"], compiled.witness_basis)
        bases = [compiled.ball_multiplier_basis] + [compiled.multiplier_basis] * len(b)
        for i, (g, mb) in enumerate(zip(constraints, bases)):
            lam = expand_gram(solution.blocks[f"L{i}"], mb)
            mults.append(lam)
            acc = acc - lam * g
        residual = float(np.max(np.abs(acc.coeffs)))
        witnesses.append(solution.blocks["W"])

    return SOSSolution(
        polynomial=p, gram=P, gram_basis=zb, multipliers=mults,
        identity_residual=residual, report=report,
        convexity_gram=conv_gram, witness_grams=witnesses,
    )


def _extract_mvoe(compiled: CompiledSOS, solution: ConicSolution, report: SolverReport) -> SOSSolution:
    n = compiled.num_vars
    A2 = np.asarray(solution.blocks["A2"])
    A2 = 0.5 * (A2 + A2.T)
    bt = np.array([solution.free[f"bt{j}"] for j in range(n)])
    const = float(bt @ np.linalg.solve(A2, bt))
    zb = monomial_basis(n, 1)
    P = np.zeros((n + 1, n + 1))
    P[0, 0] = const
    P[0, 1:] = bt
    P[1:, 0] = bt
    P[1:, 1:] = A2
    p = expand_gram(P, zb)
    # Residual: every ball's surface must satisfy p <= 1 up to solver accuracy;
    # checked here on the worst sampled surface point.
    worst = 0.0
    for c in compiled.centers:
        for ang in np.linspace(0.0, 2 * np.pi, 64, endpoint=False):
            if n == 2:
                x = c + compiled.radius * np.array([np.cos(ang), np.sin(ang)])
                worst = max(worst, p(x) - 1.0)
    return SOSSolution(
        polynomial=p, gram=P, gram_basis=zb, multipliers=[],
        identity_residual=max(worst, 0.0), report=report,
    )
