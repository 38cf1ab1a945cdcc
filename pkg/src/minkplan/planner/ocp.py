"""Direct transcription of the obstacle-avoidance optimal control problem.

The trajectory optimization is a multiple-shooting NLP over states X[0..N] and
inputs U[0..N-1] with RK4 defect equalities. Collision avoidance at knots
k = 1..N comes in two interchangeable forms:

* approximate: each obstacle carries a precomputed polynomial sublevel-set
  outer approximation of obstacle (+) disc, and the knot constraint is the
  exponentially rescaled membership test
      exp(-(1 + margin)) - exp(-p(t_i(x_k))) >= 0,
  one smooth row per (obstacle, disc, knot). The rescaling maps p's range
  [0, inf) into (-1, 0] without moving the constraint boundary, which keeps
  QP subproblems well scaled when p grows like ||t||^{2d} far from the set.

* exact: separating-hyperplane duals. For each (obstacle, knot) a multiplier
  vector lam >= 0 over the obstacle's facets joins the decision variables, and
  the rows
      (A t(x_k) - b)^T lam - (radius + margin) >= 0
      1 - ||A^T lam||^2 >= 0
  certify that the hyperplane {y : lam^T A y = lam^T b} separates the disc
  from the obstacle. Feasible points of the smooth system are exactly the
  collision-free ones, at the price of bilinear rows and L extra variables
  per obstacle per knot.

Both modes expose their structural row/variable counts so callers can verify
the transcription size without solving anything.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..geometry import ConvexPolytope
from .astar import PlanningError
from .dynamics import rk4_defect_jacobians, rk4_defects, rk4_step
from .sqp import SQPSettings, solve_sl1qp

PLAN_SCHEMA = "minkplan.plan.v1"

# Tolerance for the independent geometric collision check on returned plans.
# Knots may graze the exact boundary when the optimizer uses margin = 0.
CLEARANCE_SLACK = 1e-9


class OCPError(PlanningError):
    """Malformed problem specification."""


@dataclass(frozen=True)
class ObstacleSpec:
    """One workspace obstacle, optionally with per-disc sublevel approximations.

    ``approximations`` must hold one entry per robot collision disc (in model
    disc order) when the OCP runs in approximate mode; exact mode ignores it.
    """

    polytope: ConvexPolytope
    approximations: tuple | None = None


@dataclass(frozen=True)
class OCPSpec:
    model: object
    N: int
    dt: float
    x_start: np.ndarray
    x_goal: np.ndarray
    state_lb: np.ndarray
    state_ub: np.ndarray
    input_lb: np.ndarray
    input_ub: np.ndarray
    obstacles: tuple = ()
    mode: str = "approximate"
    margin: float = 1e-3
    terminal: str = "position"      # "position" pins t_0(x_N), "full" pins x_N
    dual_init: float = 0.05


def _as_vec(x, n, name):
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise OCPError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def _validate(spec: OCPSpec):
    model = spec.model
    nx, nu = model.n_x, model.n_u
    if spec.N < 1:
        raise OCPError("horizon N must be at least 1")
    if not np.isfinite(spec.dt) or spec.dt <= 0:
        raise OCPError("dt must be positive and finite")
    if spec.mode not in ("approximate", "exact"):
        raise OCPError(f"unknown mode {spec.mode!r}")
    if spec.terminal not in ("position", "full"):
        raise OCPError(f"unknown terminal condition {spec.terminal!r}")
    if spec.margin < 0:
        raise OCPError("collision margin must be nonnegative")

    xs = _as_vec(spec.x_start, nx, "x_start")
    xg = _as_vec(spec.x_goal, nx, "x_goal")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(xg))):
        raise OCPError("start and goal states must be finite")
    slb = _as_vec(spec.state_lb, nx, "state_lb")
    sub = _as_vec(spec.state_ub, nx, "state_ub")
    ilb = _as_vec(spec.input_lb, nu, "input_lb")
    iub = _as_vec(spec.input_ub, nu, "input_ub")
    if np.any(slb > sub) or np.any(ilb > iub):
        raise OCPError("lower bounds exceed upper bounds")
    if np.any(xs < slb - 1e-9) or np.any(xs > sub + 1e-9):
        raise OCPError("x_start violates the state bounds")
    if spec.terminal == "full" and (np.any(xg < slb - 1e-9) or np.any(xg > sub + 1e-9)):
        raise OCPError("x_goal violates the state bounds")

    radii = np.asarray(model.ball_radii, dtype=float)
    for m, obs in enumerate(spec.obstacles):
        if obs.polytope.dim != 2:
            raise OCPError("obstacles must live in the planar workspace")
        if spec.mode == "approximate":
            if obs.approximations is None or len(obs.approximations) != model.n_b:
                raise OCPError(
                    f"obstacle {m}: approximate mode needs one sublevel "
                    f"approximation per collision disc ({model.n_b})"
                )
            for i, ap in enumerate(obs.approximations):
                if ap.polynomial.num_vars != 2:
                    raise OCPError(f"obstacle {m}: approximation {i} is not planar")
                if abs(ap.radius - radii[i]) > 1e-9:
                    raise OCPError(
                        f"obstacle {m}: approximation {i} was built for disc radius "
                        f"{ap.radius}, model disc {i} has radius {radii[i]}"
                    )
        else:
            if obs.polytope.num_vertices < 3:
                raise OCPError("exact mode needs full-dimensional obstacles")
    if spec.mode == "exact" and model.n_b != 1:
        raise OCPError("exact mode supports a single collision disc")
    return xs, xg, slb, sub, ilb, iub


class TranscribedNLP:
    """Callback bundle plus layout bookkeeping for one OCP instance."""

    def __init__(self, spec: OCPSpec):
        xs, xg, slb, sub, ilb, iub = _validate(spec)
        self.spec = spec
        model = spec.model
        N, dt = spec.N, spec.dt
        nx, nu = model.n_x, model.n_u
        nb = model.n_b
        M = len(spec.obstacles)
        self._xs, self._xg = xs, xg

        # variable layout: [X (N+1,nx); U (N,nu); duals (exact mode)]
        self.off_u = (N + 1) * nx
        self.off_dual = self.off_u + N * nu
        self._facet_counts = []
        self._dual_base = []
        dual_vars = 0
        if spec.mode == "exact":
            for obs in spec.obstacles:
                A, b = obs.polytope.halfspaces()
                L = A.shape[0]
                self._facet_counts.append(L)
                self._dual_base.append(self.off_dual + dual_vars)
                dual_vars += L * N
        self.n = self.off_dual + dual_vars

        self._trans_jacs = [np.asarray(model.translation_jacobian(i), dtype=float)
                            for i in range(nb)]

        n_term = 2 if spec.terminal == "position" else nx
        self.m_eq = nx + N * nx + n_term
        if spec.mode == "approximate":
            ineq_rows = nb * M * N
            bound_rows = 0
        else:
            ineq_rows = 2 * M * N
            bound_rows = sum(self._facet_counts) * N
        self.m_ineq = ineq_rows

        self.counts = {
            "variables": self.n,
            "state_vars": (N + 1) * nx,
            "input_vars": N * nu,
            "dual_vars": dual_vars,
            "eq_rows": self.m_eq,
            "initial_rows": nx,
            "dynamics_rows": N * nx,
            "terminal_rows": n_term,
            "collision_ineq_rows": ineq_rows,
            "dual_bound_rows": bound_rows,
            # accounting total: multiplier sign conditions enter the problem as
            # variable bounds but count as rows of the collision system
            "collision_rows": ineq_rows + bound_rows,
        }

        lb = np.empty(self.n)
        ub = np.empty(self.n)
        lb[:self.off_u] = np.tile(slb, N + 1)
        ub[:self.off_u] = np.tile(sub, N + 1)
        lb[self.off_u:self.off_dual] = np.tile(ilb, N)
        ub[self.off_u:self.off_dual] = np.tile(iub, N)
        lb[self.off_dual:] = 0.0
        ub[self.off_dual:] = np.inf
        self.lb, self.ub = lb, ub

        self.hessian = sp.diags(
            np.concatenate([
                np.zeros(self.off_u),
                np.full(N * nu, 2.0),
                np.zeros(dual_vars),
            ]),
            format="csc",
        )

        self._build_eq_pattern(n_term)
        self._build_ineq_pattern()

    # -- variable (un)packing ---------------------------------------------

    def split(self, z):
        spec = self.spec
        nx, nu, N = spec.model.n_x, spec.model.n_u, spec.N
        X = np.asarray(z[:self.off_u], dtype=float).reshape(N + 1, nx)
        U = np.asarray(z[self.off_u:self.off_dual], dtype=float).reshape(N, nu)
        duals = None
        if spec.mode == "exact":
            duals = [
                np.asarray(z[base:base + L * N], dtype=float).reshape(N, L)
                for base, L in zip(self._dual_base, self._facet_counts)
            ]
        return X, U, duals

    def pack(self, X, U, duals=None):
        spec = self.spec
        z = np.empty(self.n)
        z[:self.off_u] = np.asarray(X, dtype=float).reshape(-1)
        z[self.off_u:self.off_dual] = np.asarray(U, dtype=float).reshape(-1)
        if spec.mode == "exact":
            if duals is None:
                z[self.off_dual:] = spec.dual_init
            else:
                for base, L, lam in zip(self._dual_base, self._facet_counts, duals):
                    z[base:base + L * spec.N] = np.asarray(lam, dtype=float).reshape(-1)
        return z

    # -- objective ---------------------------------------------------------

    def objective(self, z):
        u = z[self.off_u:self.off_dual]
        return float(u @ u)

    def gradient(self, z):
        g = np.zeros(self.n)
        g[self.off_u:self.off_dual] = 2.0 * z[self.off_u:self.off_dual]
        return g

    # -- equality system ---------------------------------------------------

    def _build_eq_pattern(self, n_term):
        spec = self.spec
        nx, nu, N = spec.model.n_x, spec.model.n_u, spec.N
        rows, cols = [], []

        # initial condition: identity on x_0
        rows.append(np.arange(nx))
        cols.append(np.arange(nx))

        # defect rows k: -A_k on x_k, +I on x_{k+1}, -B_k on u_k
        base = nx
        k = np.arange(N)
        r_blk = base + (k[:, None, None] * nx + np.arange(nx)[None, :, None])
        rows.append(np.broadcast_to(r_blk, (N, nx, nx)).ravel())
        cols.append(np.broadcast_to(
            k[:, None, None] * nx + np.arange(nx)[None, None, :], (N, nx, nx)).ravel())
        rows.append((base + k[:, None] * nx + np.arange(nx)[None, :]).ravel())
        cols.append(((k[:, None] + 1) * nx + np.arange(nx)[None, :]).ravel())
        rows.append(np.broadcast_to(r_blk[:, :, :nu], (N, nx, nu)).ravel())
        cols.append(np.broadcast_to(
            self.off_u + k[:, None, None] * nu + np.arange(nu)[None, None, :],
            (N, nx, nu)).ravel())

        # terminal rows on x_N
        t_base = base + N * nx
        rows.append(np.repeat(np.arange(t_base, t_base + n_term), nx))
        cols.append(np.tile(N * nx + np.arange(nx), n_term))

        self._eq_rows = np.concatenate(rows)
        self._eq_cols = np.concatenate(cols)
        if spec.terminal == "position":
            self._term_jac = self._trans_jacs[0]
        else:
            self._term_jac = np.eye(nx)

    def eq_fun(self, z):
        spec = self.spec
        X, U, _ = self.split(z)
        defects = rk4_defects(spec.model, X, U, spec.dt)
        if spec.terminal == "position":
            term = self._trans_jacs[0] @ (X[-1] - self._xg)
        else:
            term = X[-1] - self._xg
        return np.concatenate([X[0] - self._xs, defects.ravel(), term])

    def eq_jac(self, z):
        spec = self.spec
        nx = spec.model.n_x
        X, U, _ = self.split(z)
        A, B = rk4_defect_jacobians(spec.model, X, U, spec.dt)
        vals = np.concatenate([
            np.ones(nx),
            (-A).ravel(),
            np.ones(spec.N * nx),
            (-B).ravel(),
            self._term_jac.ravel(),
        ])
        return sp.csr_matrix((vals, (self._eq_rows, self._eq_cols)),
                             shape=(self.m_eq, self.n))

    # -- collision system --------------------------------------------------

    def _build_ineq_pattern(self):
        spec = self.spec
        model = spec.model
        nx, N = model.n_x, spec.N
        M = len(spec.obstacles)
        k = np.arange(N)
        xk_cols = (k[:, None] + 1) * nx + np.arange(nx)[None, :]   # knots 1..N

        if spec.mode == "approximate":
            rows, cols = [], []
            for blk in range(M * model.n_b):
                r0 = blk * N
                rows.append(np.repeat(r0 + k, nx))
                cols.append(xk_cols.ravel())
            self._ineq_rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
            self._ineq_cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
            return

        # exact mode: all separation rows first, then all norm rows
        self._halfspaces = [obs.polytope.halfspaces() for obs in spec.obstacles]
        rows, cols = [], []
        for m in range(M):
            L = self._facet_counts[m]
            base = self._dual_base[m]
            r0 = m * N
            lam_cols = base + k[:, None] * L + np.arange(L)[None, :]
            # separation row: x_k entries then lambda entries
            rows.append(np.repeat(r0 + k, nx))
            cols.append(xk_cols.ravel())
            rows.append(np.repeat(r0 + k, L))
            cols.append(lam_cols.ravel())
            # norm row: lambda entries only
            rn = M * N + r0
            rows.append(np.repeat(rn + k, L))
            cols.append(lam_cols.ravel())
        self._ineq_rows = np.concatenate(rows)
        self._ineq_cols = np.concatenate(cols)

    def ineq_fun(self, z):
        spec = self.spec
        model = spec.model
        N = spec.N
        M = len(spec.obstacles)
        if M == 0:
            return np.zeros(0)
        X, _, duals = self.split(z)
        Xk = X[1:]

        if spec.mode == "approximate":
            level = float(np.exp(-(1.0 + spec.margin)))
            out = np.empty(self.m_ineq)
            for m, obs in enumerate(spec.obstacles):
                for i in range(model.n_b):
                    t = model.translation(i, Xk)
                    p = obs.approximations[i].polynomial.evaluate_many(t)
                    out[(m * model.n_b + i) * N:(m * model.n_b + i + 1) * N] = (
                        level - np.exp(-p)
                    )
            return out

        out = np.empty(self.m_ineq)
        radius = float(model.ball_radii[0]) + spec.margin
        for m in range(M):
            A, b = self._halfspaces[m]
            lam = duals[m]
            t = model.translation(0, Xk)
            slack = t @ A.T - b[None, :]
            out[m * N:(m + 1) * N] = np.sum(slack * lam, axis=1) - radius
            w = lam @ A
            out[M * N + m * N:M * N + (m + 1) * N] = 1.0 - np.sum(w * w, axis=1)
        return out

    def ineq_jac(self, z):
        spec = self.spec
        model = spec.model
        N = spec.N
        M = len(spec.obstacles)
        if M == 0:
            return sp.csr_matrix((0, self.n))
        X, _, duals = self.split(z)
        Xk = X[1:]

        if spec.mode == "approximate":
            vals = []
            for m, obs in enumerate(spec.obstacles):
                for i in range(model.n_b):
                    T = self._trans_jacs[i]
                    t = model.translation(i, Xk)
                    poly = obs.approximations[i].polynomial
                    p = poly.evaluate_many(t)
                    g = poly.gradient_at(t)                    # (N, 2)
                    vals.append((np.exp(-p)[:, None] * (g @ T)).ravel())
            vals = np.concatenate(vals)
            return sp.csr_matrix((vals, (self._ineq_rows, self._ineq_cols)),
                                 shape=(self.m_ineq, self.n))

        vals = []
        for m in range(M):
            A, b = self._halfspaces[m]
            lam = duals[m]
            t = model.translation(0, Xk)
            T = self._trans_jacs[0]
            vals.append(((lam @ A) @ T).ravel())               # sep wrt x_k
            vals.append((t @ A.T - b[None, :]).ravel())        # sep wrt lambda
            vals.append((-2.0 * lam @ (A @ A.T)).ravel())      # norm wrt lambda
        vals = np.concatenate(vals)
        return sp.csr_matrix((vals, (self._ineq_rows, self._ineq_cols)),
                             shape=(self.m_ineq, self.n))


def build_nlp(spec: OCPSpec) -> TranscribedNLP:
    return TranscribedNLP(spec)


# -- plans -----------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryPlan:
    """Solved (or failed) trajectory with independently recomputed diagnostics.

    ``max_defect`` and ``min_clearance`` never come from solver internals: the
    defects are re-integrated knot by knot and the clearance is measured
    against the exact obstacle (+) disc regions, so a plan that merely fooled
    its own transcription still reports honest numbers here.
    """

    mode: str
    status: str
    objective: float
    iterations: int
    kkt_residual: float
    max_violation: float
    max_defect: float
    min_clearance: float
    exact_check_pass: bool
    X: np.ndarray
    U: np.ndarray
    duals: tuple | None
    counts: dict

    @property
    def ok(self) -> bool:
        return self.status == "solved" and self.exact_check_pass

    def to_dict(self) -> dict:
        return {
            "schema": PLAN_SCHEMA,
            "mode": self.mode,
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "max_violation": self.max_violation,
            "max_defect": self.max_defect,
            "min_clearance": self.min_clearance,
            "exact_check_pass": self.exact_check_pass,
            "X": [[float(v) for v in row] for row in self.X],
            "U": [[float(v) for v in row] for row in self.U],
            "duals": None if self.duals is None else [
                [[float(v) for v in row] for row in lam] for lam in self.duals
            ],
            "counts": dict(self.counts),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrajectoryPlan":
        if data.get("schema") != PLAN_SCHEMA:
            raise OCPError(f"unknown plan schema {data.get('schema')!r}")
        duals = data.get("duals")
        return cls(
            mode=data["mode"],
            status=data["status"],
            objective=float(data["objective"]),
            iterations=int(data["iterations"]),
            kkt_residual=float(data["kkt_residual"]),
            max_violation=float(data["max_violation"]),
            max_defect=float(data["max_defect"]),
            min_clearance=float(data["min_clearance"]),
            exact_check_pass=bool(data["exact_check_pass"]),
            X=np.asarray(data["X"], dtype=float),
            U=np.asarray(data["U"], dtype=float),
            duals=None if duals is None else tuple(np.asarray(l, dtype=float) for l in duals),
            counts=dict(data["counts"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TrajectoryPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def exact_collision_check(model, X, obstacles, margin: float = 0.0):
    """Minimum clearance of knots 1..N against the exact obstacle (+) disc sets.

    Returns (passed, min_clearance) where clearance is distance minus disc
    radius minus margin; the start state is given, so knot 0 is not checked.
    """
    X = np.asarray(X, dtype=float)
    if len(obstacles) == 0 or X.shape[0] < 2:
        return True, float("inf")
    min_clear = float("inf")
    for obs in obstacles:
        poly = obs.polytope if isinstance(obs, ObstacleSpec) else obs
        for i in range(model.n_b):
            t = model.translation(i, X[1:])
            d = poly.distance(t) - float(model.ball_radii[i]) - margin
            min_clear = min(min_clear, float(np.min(d)))
    return min_clear >= -CLEARANCE_SLACK, min_clear


def solve_nlp(nlp: TranscribedNLP, X0=None, U0=None, duals0=None,
              settings: SQPSettings | None = None) -> TrajectoryPlan:
    spec = nlp.spec
    model = spec.model
    if X0 is None:
        X0 = np.linspace(nlp._xs, nlp._xg, spec.N + 1)
    if U0 is None:
        U0 = np.zeros((spec.N, model.n_u))
    z0 = nlp.pack(X0, U0, duals0)

    res = solve_sl1qp(
        nlp.n, nlp.objective, nlp.gradient, nlp.hessian,
        nlp.eq_fun, nlp.eq_jac, nlp.lb, nlp.ub, z0,
        ineq_fun=nlp.ineq_fun, ineq_jac=nlp.ineq_jac,
        settings=settings,
    )
    X, U, duals = nlp.split(res.z)

    # independent diagnostics: fresh single-step integration for the defects
    defect = 0.0
    for k in range(spec.N):
        step = rk4_step(model, X[k], U[k], spec.dt)
        defect = max(defect, float(np.max(np.abs(X[k + 1] - step))))
    passed, min_clear = exact_collision_check(model, X, spec.obstacles)

    return TrajectoryPlan(
        mode=spec.mode,
        status=res.status,
        objective=res.objective,
        iterations=res.iterations,
        kkt_residual=res.stationarity,
        max_violation=res.max_violation,
        max_defect=defect,
        min_clearance=min_clear,
        exact_check_pass=passed,
        X=X,
        U=U,
        duals=None if duals is None else tuple(duals),
        counts=dict(nlp.counts),
    )


# -- mode comparison -------------------------------------------------------

@dataclass(frozen=True)
class ModeComparison:
    approximate: TrajectoryPlan
    exact: TrajectoryPlan
    suboptimality_pct: float | None

    def to_dict(self) -> dict:
        return {
            "approximate": self.approximate.to_dict(),
            "exact": self.exact.to_dict(),
            "suboptimality_pct": self.suboptimality_pct,
        }


def compare_modes(spec_approx: OCPSpec, spec_exact: OCPSpec, X0=None, U0=None,
                  settings: SQPSettings | None = None) -> ModeComparison:
    """Solve the same instance under both collision models from one warm start.

    Suboptimality is the relative objective gap of the approximate plan over
    the exact one, reported only when both solves succeeded end to end.
    """
    plan_a = solve_nlp(build_nlp(spec_approx), X0=X0, U0=U0, settings=settings)
    plan_e = solve_nlp(build_nlp(spec_exact), X0=X0, U0=U0, settings=settings)
    subopt = None
    if plan_a.ok and plan_e.ok and plan_e.objective > 0:
        subopt = 100.0 * (plan_a.objective - plan_e.objective) / plan_e.objective
    return ModeComparison(approximate=plan_a, exact=plan_e, suboptimality_pct=subopt)
