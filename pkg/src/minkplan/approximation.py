"""Certified outer approximations of polytope + ball Minkowski sums.

`approximate` is the front door: it normalizes the instance to a centered
unit-scale frame (similarity transforms commute with the Minkowski sum, so
nothing is lost), compiles and solves the requested program, maps the
polynomial back to the original frame, and refuses to return anything that
fails its own certificate checks. `quality` computes the paper's area-error
metric by seeded Monte Carlo.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .conic_solver import SolverFailure, SolverReport, SolverSettings, solve
from .geometry import (
    Ball,
    BufferedPolytope,
    ConvexPolytope,
    minkowski_sum_ball,
    sample_in_region,
)
from .polynomials import MonomialBasis, Polynomial, affine_substitute_matrix, monomial_basis
from .sos_compiler import (
    CompilerError,
    compile_coa,
    compile_mvoe,
    compile_oa,
    extract_solution,
)

METHODS = ("coa", "oa", "mvoe")

OUTER_SLACK = 1e-6          # p <= 1 + this on exact-set samples
HESSIAN_SLACK = -1e-6       # min eigenvalue of the COA Hessian
RESIDUAL_TOL = 1e-6         # S-procedure identity residual


class CertificationError(RuntimeError):
    """A returned solution failed an independent certificate check.

    This means a bug in the compiler or solver adapter, not a property of the
    instance; it is never turned into a quiet failure result.
    """


@dataclass(frozen=True)
class SublevelApproximation:
    """p and its Gram in original coordinates, with certification evidence."""

    polynomial: Polynomial
    gram: np.ndarray
    gram_basis: MonomialBasis
    method: str
    degree: int
    radius: float
    source_vertices: np.ndarray
    identity_residual: float
    outer_margin: float             # max sampled p(x) - 1 over the exact set
    report: SolverReport
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.polynomial.num_vars

    def to_dict(self) -> dict:
        return {
            "schema": "minkplan.approximation.v1",
            "polynomial": self.polynomial.to_dict(),
            "gram": [[float(x) for x in row] for row in np.asarray(self.gram)],
            "method": self.method,
            "degree": self.degree,
            "radius": self.radius,
            "source_vertices": [[float(x) for x in v] for v in self.source_vertices],
            "identity_residual": self.identity_residual,
            "outer_margin": self.outer_margin,
            "solver": self.report.to_dict(),
            "metadata": self.metadata,
        }

    @staticmethod
    def from_dict(d: dict) -> "SublevelApproximation":
        if d.get("schema") != "minkplan.approximation.v1":
            raise ValueError(f"unknown approximation schema {d.get('schema')!r}")
        p = Polynomial.from_dict(d["polynomial"])
        half = d["degree"] // 2
        basis = monomial_basis(p.num_vars, half)
        solver = d.get("solver", {})
        report = SolverReport(
            status=solver.get("status", "optimal"),
            objective=float(solver.get("objective", float("nan"))),
            iterations=int(solver.get("iterations", 0)),
            gap=float(solver.get("gap", float("nan"))),
            primal_residual=float(solver.get("primal_residual", float("nan"))),
            dual_residual=float(solver.get("dual_residual", float("nan"))),
            solve_time=float(solver.get("solve_time", 0.0)),
        )
        return SublevelApproximation(
            polynomial=p,
            gram=np.asarray(d["gram"], dtype=float),
            gram_basis=basis,
            method=d["method"],
            degree=int(d["degree"]),
            radius=float(d["radius"]),
            source_vertices=np.asarray(d["source_vertices"], dtype=float),
            identity_residual=float(d["identity_residual"]),
            outer_margin=float(d["outer_margin"]),
            report=report,
            metadata=dict(d.get("metadata", {})),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def load(path) -> "SublevelApproximation":
        with open(path) as f:
            return SublevelApproximation.from_dict(json.load(f))


@dataclass(frozen=True)
class ApproxQuality:
    area_exact: float
    area_approx: float
    area_approx_se: float
    error_pct: float
    error_pct_se: float
    samples: int
    seed: int


def _normalization(poly: ConvexPolytope, radius: float) -> tuple[np.ndarray, float]:
    """Center and scale placing the buffered set roughly in [-1, 1]^n."""
    lo, hi = poly.bbox()
    center = 0.5 * (lo + hi)
    scale = 0.5 * float(np.max(hi - lo)) + radius
    if scale <= 0.0:
        scale = 1.0
    return center, scale


def _exact_set_samples(exact: BufferedPolytope, count: int, seed: int) -> np.ndarray:
    indicator = lambda pts: exact.contains(pts)
    return sample_in_region(indicator, exact.bbox(), count, seed=seed)


def _sphere_samples(vertices: np.ndarray, radius: float, count: int, seed: int) -> np.ndarray:
    """Per-vertex sphere surface points, the 3D certification surrogate."""
    rng = np.random.default_rng(seed)
    K, n = vertices.shape
    per = max(count // K, 1)
    out = []
    for v in vertices:
        d = rng.normal(size=(per, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        out.append(v + radius * d)
    return np.vstack(out)


def approximate(
    poly: ConvexPolytope,
    ball: Ball,
    degree: int,
    method: str = "coa",
    settings: SolverSettings | None = None,
    certify: bool = True,
    certify_samples: int = 10_000,
    seed: int = 0,
) -> SublevelApproximation:
    """Solve for an outer approximation and certify it before returning.

    Raises SolverFailure (with the report attached) when the conic solve does
    not reach an acceptable status, and CertificationError if the returned
    certificate fails any independent recheck.
    """
    method = method.lower()
    if method not in METHODS:
        raise CompilerError(f"method must be one of {METHODS}, got {method!r}")
    if method == "mvoe" and degree != 2:
        raise CompilerError("the ellipsoid baseline is degree 2 only")

    n = poly.dim
    center, scale = _normalization(poly, ball.radius)
    norm_vertices = (poly.vertices - center) / scale
    norm_poly = ConvexPolytope.from_points(norm_vertices)
    norm_ball = Ball(ball.radius / scale, dim=n)

    if method == "coa":
        compiled = compile_coa(norm_poly, norm_ball, degree)
    elif method == "oa":
        compiled = compile_oa(norm_poly, norm_ball, degree)
    else:
        compiled = compile_mvoe(norm_poly.vertices, norm_ball.radius)

    solution, report = solve(compiled.problem, settings)
    extracted = extract_solution(compiled, solution, report)

    # Back to original coordinates: x' = (x - center)/scale, so substitute the
    # normalized polynomial with that affine map and congruence-map the Gram.
    half = degree // 2
    zb = monomial_basis(n, half)
    shift = -center / scale
    lin = np.eye(n) / scale
    p = extracted.polynomial.affine_substitute(shift, lin)
    S = affine_substitute_matrix(zb, shift, lin, zb)
    gram = S @ extracted.gram @ S.T

    exact = minkowski_sum_ball(poly, ball)
    outer_margin = float("nan")
    if certify:
        if extracted.identity_residual > RESIDUAL_TOL:
            raise CertificationError(
                f"identity residual {extracted.identity_residual:.3e} exceeds {RESIDUAL_TOL}"
            )
        if n == 2:
            pts = _exact_set_samples(exact, certify_samples, seed)
        else:
            pts = _sphere_samples(poly.vertices, ball.radius, certify_samples, seed)
        vals = p.evaluate_many(pts)
        outer_margin = float(np.max(vals) - 1.0)
        if outer_margin > OUTER_SLACK:
            raise CertificationError(
                f"outer-ness violated: max p on exact-set samples = 1 + {outer_margin:.3e}"
            )
        if method in ("coa", "mvoe"):
            lo, hi = poly.bbox()
            c, h = 0.5 * (lo + hi), 0.5 * (hi - lo) + ball.radius
            rng = np.random.default_rng(seed + 1)
            box_pts = rng.uniform(c - 2 * h, c + 2 * h, size=(100, n))
            eigs = np.linalg.eigvalsh(p.hessian_at(box_pts))
            if float(eigs.min()) < HESSIAN_SLACK:
                raise CertificationError(
                    f"convexity violated: Hessian eigenvalue {eigs.min():.3e}"
                )

    return SublevelApproximation(
        polynomial=p,
        gram=gram,
        gram_basis=zb,
        method=method,
        degree=int(degree),
        radius=float(ball.radius),
        source_vertices=np.asarray(poly.vertices, dtype=float),
        identity_residual=extracted.identity_residual,
        outer_margin=outer_margin,
        report=report,
        metadata={
            "version": __version__,
            "seed": int(seed),
            "frame": {"center": [float(x) for x in center], "scale": float(scale)},
            "normalized_objective": report.objective,
        },
    )


def quality(
    approx: SublevelApproximation,
    exact: BufferedPolytope,
    samples: int = 20_000,
    seed: int = 0,
) -> ApproxQuality:
    """Paper's error metric: 100 * (area(M-tilde) - area(M)) / area(M).

    area(M) comes from the closed form; area(M-tilde) from seeded Monte Carlo
    over the exact set's bounding box expanded 3x about its center, which
    contains every certified sublevel set produced here (the degree-2 MVOE has
    its Loewner center inside the set; higher degrees are tighter).
    """
    if exact.base.dim != 2:
        raise ValueError("the area-error metric is 2D only")
    lo, hi = exact.bbox()
    c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
    box = (c - 3.0 * h, c + 3.0 * h)
    box_area = float(np.prod(box[1] - box[0]))

    rng = np.random.default_rng(seed)
    pts = rng.uniform(box[0], box[1], size=(samples, 2))
    inside = approx.polynomial.evaluate_many(pts) <= 1.0
    frac = float(np.mean(inside))
    area_approx = frac * box_area
    se = box_area * float(np.sqrt(max(frac * (1.0 - frac), 0.0) / samples))

    area_exact = exact.area()
    error_pct = 100.0 * (area_approx - area_exact) / area_exact
    return ApproxQuality(
        area_exact=area_exact,
        area_approx=area_approx,
        area_approx_se=se,
        error_pct=error_pct,
        error_pct_se=100.0 * se / area_exact,
        samples=samples,
        seed=seed,
    )
