"""Conic problem IR and its interior-point backend.

The IR is a block-diagonal PSD program: named symmetric PSD blocks, free scalar
variables, sparse linear equalities over all entries, and a log-det objective on
one designated block. Solving goes through Clarabel after reformulating the
log-det term with the standard lower-triangular-factor construction:

    maximize sum_i u_i  subject to  [[P, Z], [Z', diag(Z)]] >= 0,
    Z lower triangular, (u_i, 1, Z_ii) in the exponential cone,

whose optimum equals log det P. Verification never touches the solve path: it
recomputes residuals and eigenvalues with numpy directly from the IR.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .polynomials import triangle_count, triangle_entries

SQRT2 = np.sqrt(2.0)


class ConicSolverError(RuntimeError):
    pass


class SolverFailure(ConicSolverError):
    """Solve did not reach an (almost) optimal point; carries the SolverReport."""

    def __init__(self, report):
        super().__init__(f"conic solve failed with status '{report.status}'")
        self.report = report


@dataclass(frozen=True)
class PSDBlock:
    name: str
    size: int


@dataclass
class ConicProblem:
    """Equality-constrained PSD program with an optional log-det objective.

    Variable layout: for each PSD block in declaration order, its upper-triangle
    entries column-major ((0,0), (0,1), (1,1), (0,2), ...), then the free scalar
    variables. Equalities are rows over that layout. The objective maximizes
    log det of the designated block minus an optional linear term.
    """

    psd_blocks: tuple[PSDBlock, ...]
    free_names: tuple[str, ...] = ()
    eq_rows: sp.csr_matrix | None = None
    eq_rhs: np.ndarray | None = None
    logdet_block: str | None = None
    linear_obj: np.ndarray | None = None

    def __post_init__(self):
        names = [b.name for b in self.psd_blocks]
        if len(set(names)) != len(names):
            raise ConicSolverError("duplicate PSD block names")
        if self.logdet_block is not None and self.logdet_block not in names:
            raise ConicSolverError(f"unknown log-det block '{self.logdet_block}'")

    # -- variable layout ---------------------------------------------------

    @property
    def num_vars(self) -> int:
        return sum(triangle_count(b.size) for b in self.psd_blocks) + len(self.free_names)

    def block_offset(self, name: str) -> int:
        off = 0
        for b in self.psd_blocks:
            if b.name == name:
                return off
            off += triangle_count(b.size)
        raise ConicSolverError(f"unknown block '{name}'")

    def block(self, name: str) -> PSDBlock:
        for b in self.psd_blocks:
            if b.name == name:
                return b
        raise ConicSolverError(f"unknown block '{name}'")

    def entry_index(self, name: str, i: int, j: int) -> int:
        """Flat index of entry (i, j) (order-free) of a block."""
        size = self.block(name).size
        if not (0 <= i < size and 0 <= j < size):
            raise ConicSolverError("entry out of range")
        if i > j:
            i, j = j, i
        return self.block_offset(name) + j * (j + 1) // 2 + i

    def free_index(self, name: str) -> int:
        base = sum(triangle_count(b.size) for b in self.psd_blocks)
        return base + self.free_names.index(name)

    # -- debugging ---------------------------------------------------------

    def describe(self) -> str:
        lines = [f"ConicProblem: {self.num_vars} variables"]
        for b in self.psd_blocks:
            tag = "  (log-det)" if b.name == self.logdet_block else ""
            lines.append(f"  psd block {b.name}: {b.size}x{b.size} ({triangle_count(b.size)} entries){tag}")
        if self.free_names:
            lines.append(f"  free vars: {len(self.free_names)}")
        if self.eq_rows is not None:
            lines.append(f"  equalities: {self.eq_rows.shape[0]} rows, {self.eq_rows.nnz} nonzeros")
        return "\n".join(lines)

    # -- dense reconstruction (shared by extraction and verification) ------

    def split_solution(self, x: np.ndarray) -> "ConicSolution":
        blocks = {}
        off = 0
        for b in self.psd_blocks:
            M = np.zeros((b.size, b.size))
            for k, (i, j) in enumerate(triangle_entries(b.size)):
                M[i, j] = x[off + k]
                M[j, i] = x[off + k]
            blocks[b.name] = M
            off += triangle_count(b.size)
        free = {name: float(x[off + k]) for k, name in enumerate(self.free_names)}
        return ConicSolution(blocks=blocks, free=free, x=np.asarray(x, dtype=float))


@dataclass
class ConicSolution:
    blocks: dict
    free: dict
    x: np.ndarray


@dataclass
class SolverSettings:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200
    verbose: bool = False
    # Optional feasibility aid: relaxes every PSD block to X + eps I >= 0.
    eps_psd_shift: float = 0.0


@dataclass
class SolverReport:
    status: str                  # optimal | near_optimal | infeasible | unbounded | numerical_error
    objective: float             # maximized value: log det(block) - linear term
    iterations: int
    gap: float
    primal_residual: float
    dual_residual: float
    solve_time: float

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "gap": self.gap,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "solve_time": self.solve_time,
        }


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "near_optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def solve(problem: ConicProblem, settings: SolverSettings | None = None):
    """Solve the conic program; returns (ConicSolution, SolverReport).

    Raises SolverFailure (report attached) unless the status is optimal or
    near_optimal.
    """
    import clarabel

    settings = settings or SolverSettings()
    n_primal = problem.num_vars

    # Inconsistent equality systems make the homogeneous embedding stall
    # (no conic certificate is needed to see them), so screen them directly.
    if problem.eq_rows is not None and problem.eq_rows.shape[0] > 0:
        E = problem.eq_rows
        dense = E.toarray() if E.shape[0] * E.shape[1] <= 5_000_000 else None
        if dense is not None:
            x_ls, *_ = np.linalg.lstsq(dense, problem.eq_rhs, rcond=None)
            resid = np.max(np.abs(dense @ x_ls - problem.eq_rhs))
            if resid > 1e-8 * (1.0 + np.max(np.abs(problem.eq_rhs))):
                raise SolverFailure(SolverReport(
                    status="infeasible", objective=-np.inf, iterations=0, gap=np.inf,
                    primal_residual=float(resid), dual_residual=0.0, solve_time=0.0,
                ))
    logdet = problem.logdet_block
    s_log = problem.block(logdet).size if logdet is not None else 0
    # Auxiliary variables for the log-det reformulation: lower-triangular Z
    # (stored row-major over i >= j) then the s exponential-cone scalars u.
    z_off = n_primal
    z_entries = [(i, j) for i in range(s_log) for j in range(i + 1)]
    u_off = z_off + len(z_entries)
    n_total = u_off + s_log
    z_index = {e: z_off + k for k, e in enumerate(z_entries)}

    rows = []   # (list of (col, val), offset) per conic row, in cone order
    cones = []

    # Equalities: b - Ax must be zero.
    n_eq = 0
    if problem.eq_rows is not None and problem.eq_rows.shape[0] > 0:
        n_eq = problem.eq_rows.shape[0]
        cones.append(clarabel.ZeroConeT(n_eq))

    # Standalone PSD cones. The designated log-det block is covered by the
    # augmented matrix below, so its own cone would be redundant.
    psd_specs = []
    for b in problem.psd_blocks:
        if b.name == logdet:
            continue
        psd_specs.append(b)

    def triangle_rows(entry_cols, size, shift=0.0):
        """Scaled-triangle rows for a symmetric matrix given per-entry columns."""
        out = []
        for k, (i, j) in enumerate(triangle_entries(size)):
            scale = 1.0 if i == j else SQRT2
            cols = entry_cols(i, j)
            offset = shift if i == j else 0.0
            out.append(([(c, scale * v) for c, v in cols], scale * offset))
        return out

    body_rows = []
    for b in psd_specs:
        if b.size == 1:
            idx = problem.entry_index(b.name, 0, 0)
            body_rows.append(([(idx, 1.0)], settings.eps_psd_shift))
            cones.append(clarabel.NonnegativeConeT(1))
            continue
        rs = triangle_rows(lambda i, j, name=b.name: [(problem.entry_index(name, i, j), 1.0)],
                           b.size, shift=settings.eps_psd_shift)
        body_rows.extend(rs)
        cones.append(clarabel.PSDTriangleConeT(b.size))

    if logdet is not None:
        # Augmented block [[P, Z], [Z', diag(Z)]] of size 2s.
        def aug_cols(i, j):
            if i > j:
                i, j = j, i
            if j < s_log:                          # P part
                return [(problem.entry_index(logdet, i, j), 1.0)]
            if i < s_log:                          # Z part: row i of P side, col j-s of Z
                k = j - s_log
                return [(z_index[(i, k)], 1.0)] if i >= k else []
            # diag(Z) part
            return [(z_index[(i - s_log, i - s_log)], 1.0)] if i == j else []

        body_rows.extend(triangle_rows(aug_cols, 2 * s_log, shift=settings.eps_psd_shift))
        cones.append(clarabel.PSDTriangleConeT(2 * s_log))
        for i in range(s_log):
            body_rows.append(([(u_off + i, 1.0)], 0.0))       # u_i
            body_rows.append(([], 1.0))                       # constant 1
            body_rows.append(([(z_index[(i, i)], 1.0)], 0.0))  # Z_ii
            cones.append(clarabel.ExponentialConeT())

    # Assemble A x + s = b with s in the cone product: cone rows encode
    # s = expr, i.e. A = -coeffs, b = offset; equality rows use s = 0.
    n_rows = n_eq + len(body_rows)
    data, rix, cix = [], [], []
    bvec = np.zeros(n_rows)
    if n_eq:
        eq = problem.eq_rows.tocoo()
        data.extend(eq.data.tolist())
        rix.extend(eq.row.tolist())
        cix.extend(eq.col.tolist())
        bvec[:n_eq] = problem.eq_rhs
    for r, (cols, offset) in enumerate(body_rows):
        for c, v in cols:
            data.append(-v)
            rix.append(n_eq + r)
            cix.append(c)
        bvec[n_eq + r] = offset
    A = sp.csc_matrix((data, (rix, cix)), shape=(n_rows, n_total))

    q = np.zeros(n_total)
    if problem.linear_obj is not None:
        q[:n_primal] = np.asarray(problem.linear_obj, dtype=float)
    q[u_off : u_off + s_log] = -1.0

    cl_settings = clarabel.DefaultSettings()
    cl_settings.verbose = settings.verbose
    cl_settings.max_iter = settings.max_iter
    cl_settings.tol_gap_abs = settings.tol_gap
    cl_settings.tol_gap_rel = settings.tol_gap
    cl_settings.tol_feas = settings.tol_feas
    cl_settings.max_threads = 1

    solver = clarabel.DefaultSolver(sp.csc_matrix((n_total, n_total)), q, A, bvec, cones, cl_settings)
    sol = solver.solve()

    status = _STATUS_MAP.get(str(sol.status).split(".")[-1], "numerical_error")
    x = np.asarray(sol.x[:n_total], dtype=float)
    # Log-det growth is sublinear, so an unbounded objective has no linear
    # recession certificate; it shows up as "converged" iterates of absurd
    # scale instead. Treat those as unbounded.
    if status in ("optimal", "near_optimal") and logdet is not None:
        if np.max(np.abs(x[:n_primal])) > 1e10:
            status = "unbounded"
    report = SolverReport(
        status=status,
        objective=-float(sol.obj_val),
        iterations=int(sol.iterations),
        gap=abs(float(sol.obj_val) - float(sol.obj_val_dual)),
        primal_residual=float(sol.r_prim),
        dual_residual=float(sol.r_dual),
        solve_time=float(sol.solve_time),
    )
    if not report.ok:
        raise SolverFailure(report)
    solution = problem.split_solution(x[:n_primal])
    return solution, report


@dataclass
class VerificationResult:
    equality_residual: float
    min_eigenvalues: dict
    objective: float
    psd_ok: bool
    equalities_ok: bool

    @property
    def ok(self) -> bool:
        return self.psd_ok and self.equalities_ok


def verify_solution(problem: ConicProblem, solution: ConicSolution,
                    tol_eq: float = 1e-6, tol_psd: float = 1e-7) -> VerificationResult:
    """Independent feasibility check: dense eigenvalues + raw equality residuals.

    Intentionally shares nothing with solve(): it reads the IR and the returned
    matrices, nothing from the Clarabel reformulation.
    """
    x = np.zeros(problem.num_vars)
    off = 0
    min_eigs = {}
    psd_ok = True
    for b in problem.psd_blocks:
        M = np.asarray(solution.blocks[b.name], dtype=float)
        if M.shape != (b.size, b.size):
            raise ConicSolverError(f"block {b.name} has wrong shape")
        M = 0.5 * (M + M.T)
        lo = float(np.linalg.eigvalsh(M)[0]) if b.size > 0 else 0.0
        min_eigs[b.name] = lo
        psd_ok = psd_ok and lo >= -tol_psd
        for k, (i, j) in enumerate(triangle_entries(b.size)):
            x[off + k] = M[i, j]
        off += triangle_count(b.size)
    for k, name in enumerate(problem.free_names):
        x[off + k] = solution.free[name]

    if problem.eq_rows is not None and problem.eq_rows.shape[0] > 0:
        residual = float(np.max(np.abs(problem.eq_rows @ x - problem.eq_rhs)))
    else:
        residual = 0.0

    objective = 0.0
    if problem.logdet_block is not None:
        P = solution.blocks[problem.logdet_block]
        P = 0.5 * (P + P.T)
        sign, logdet = np.linalg.slogdet(P)
        objective = logdet if sign > 0 else -np.inf
    if problem.linear_obj is not None:
        objective -= float(np.asarray(problem.linear_obj) @ x)

    return VerificationResult(
        equality_residual=residual,
        min_eigenvalues=min_eigs,
        objective=objective,
        psd_ok=psd_ok,
        equalities_ok=residual <= tol_eq,
    )
