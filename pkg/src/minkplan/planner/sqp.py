"""Elastic l1 trust-region SQP over interior-point QP subproblems.

Each iteration linearizes the constraints, solves a convex QP with elastic
slacks (so the subproblem is always feasible), and accepts or rejects the step
against the l1 merit function. The model Hessian is the exact objective
Hessian, which is constant and PSD for the quadratic objectives used here;
constraint curvature is handled by the trust region.

The subproblems go to Clarabel: the elastic slack pairs make first-order QP
methods crawl (the active-set degeneracy also defeats their polish step),
while an interior point method returns machine-accurate multipliers in a few
dozen factorizations regardless, and does so deterministically.

Progress is judged on the merit function, convergence on the true first-order
conditions: feasibility of the original constraints and stationarity of the
Lagrangian assembled from the QP multipliers.
"""
from __future__ import annotations

from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp


@dataclass
class SQPSettings:
    tol: float = 1e-6
    max_iter: int = 500
    trust_init: float = 0.5
    trust_min: float = 1e-10
    trust_max: float = 100.0
    penalty_init: float = 10.0
    penalty_max: float = 1e8
    qp_eps: float = 1e-9
    qp_max_iter: int = 200
    verbose: bool = False


@dataclass
class SQPResult:
    z: np.ndarray
    status: str                  # solved | max_iter | trust_region_failure | qp_failure
    iterations: int
    objective: float
    stationarity: float
    max_violation: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray

    @property
    def ok(self) -> bool:
        return self.status == "solved"


class _NoIneq:
    @staticmethod
    def fun(z):
        return np.zeros(0)

    @staticmethod
    def jac(z):
        return sp.csr_matrix((0, z.shape[0]))


def _violation(cE, cI):
    vE = float(np.max(np.abs(cE))) if cE.size else 0.0
    vI = float(np.max(np.maximum(-cI, 0.0))) if cI.size else 0.0
    return max(vE, vI)


def _l1_infeasibility(cE, cI):
    return float(np.sum(np.abs(cE)) + np.sum(np.maximum(-cI, 0.0)))


def _solve_qp(H_eff, g, JE, cE, JI, cI, d_lo, d_hi, nu, cfg):
    """Elastic trust-region QP step, or None when the solver fails.

    Variables are [d, s+, s-, t]; JE d − s+ + s- = −cE with s± >= 0 absorbs
    equality infeasibility, t >= 0 absorbs inequality infeasibility, and the
    slacks enter the objective at weight nu so the subproblem is always
    feasible. The trust region keeps every box row finite. Returned
    multipliers follow the convention g + H d + JE' yE + JI' yI + yB = 0.
    """
    n = g.size
    mE, mI = cE.size, cI.size
    nslack = 2 * mE + mI
    P = sp.block_diag([H_eff, sp.csc_matrix((nslack, nslack))], format="csc")
    q = np.concatenate([g, nu * np.ones(nslack)])
    Zc = sp.csc_matrix
    A = sp.vstack([
        sp.hstack([JE, -sp.eye(mE), sp.eye(mE), Zc((mE, mI))]),
        sp.hstack([-JI, Zc((mI, 2 * mE)), -sp.eye(mI)]),
        sp.hstack([sp.eye(n), Zc((n, nslack))]),
        sp.hstack([-sp.eye(n), Zc((n, nslack))]),
        sp.hstack([Zc((nslack, n)), -sp.eye(nslack)]),
    ], format="csc")
    b = np.concatenate([-cE, cI, d_hi, -d_lo, np.zeros(nslack)])
    cones = [clarabel.ZeroConeT(mE),
             clarabel.NonnegativeConeT(mI + 2 * n + nslack)]

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = cfg.qp_max_iter
    settings.tol_feas = cfg.qp_eps
    settings.tol_gap_abs = cfg.qp_eps
    settings.tol_gap_rel = cfg.qp_eps
    sol = clarabel.DefaultSolver(sp.triu(P, format="csc"), q, A, b,
                                 cones, settings).solve()
    if sol.status != clarabel.SolverStatus.Solved:
        return None
    w = np.asarray(sol.x)
    zdual = np.asarray(sol.z)
    d = w[:n]
    slack_lin = float(np.sum(np.maximum(w[n:], 0.0)))
    yE = zdual[:mE]
    yI = -zdual[mE:mE + mI]
    yB = zdual[mE + mI:mE + mI + n] - zdual[mE + mI + n:mE + mI + 2 * n]
    return d, slack_lin, yE, yI, yB


def solve_sl1qp(
    n: int,
    objective,
    gradient,
    hessian,
    eq_fun,
    eq_jac,
    lb,
    ub,
    z0,
    ineq_fun=None,
    ineq_jac=None,
    settings: SQPSettings | None = None,
) -> SQPResult:
    """Minimize objective(z) s.t. eq(z) = 0, ineq(z) >= 0, lb <= z <= ub."""
    cfg = settings or SQPSettings()
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    z = np.clip(np.asarray(z0, dtype=float), lb, ub)
    H = sp.csc_matrix(hessian)
    ineq_fun = ineq_fun or _NoIneq.fun
    ineq_jac = ineq_jac or _NoIneq.jac

    nu = cfg.penalty_init
    delta = cfg.trust_init
    # Proximal damping added to the model Hessian. The objective Hessian alone
    # can be singular along feasible directions (zero curvature on states or
    # dual variables), which makes bare QP steps zigzag between trust-region
    # corners; a small adaptive diagonal keeps steps proximal without moving
    # any KKT point.
    sigma = 1e-8
    polish = 0
    polish_stat = None
    best = None
    yE = np.zeros(0)
    yI = np.zeros(0)
    # multiplier estimates valid at the current z: the QP multipliers belong
    # to the accepted trial point, so they are carried one iteration and
    # tested against the next linearization
    yE_c = None
    yI_c = None
    yB_c = np.zeros(n)
    stat = np.inf
    status = "max_iter"
    it = 0

    f = objective(z)
    cE = np.asarray(eq_fun(z), dtype=float)
    cI = np.asarray(ineq_fun(z), dtype=float)

    def merit(fv, e, i):
        return fv + nu * _l1_infeasibility(e, i)

    def keep_best(zv, fv, viol):
        nonlocal best
        key = (max(viol - cfg.tol, 0.0), fv)
        if best is None or key < best[0]:
            best = (key, zv.copy(), fv, viol)

    viol = _violation(cE, cI)
    keep_best(z, f, viol)

    for it in range(1, cfg.max_iter + 1):
        g = np.asarray(gradient(z), dtype=float)
        JE = sp.csr_matrix(eq_jac(z))
        JI = sp.csr_matrix(ineq_jac(z))
        mE, mI = JE.shape[0], JI.shape[0]
        if yE_c is None:
            yE_c = np.zeros(mE)
            yI_c = np.zeros(mI)

        # Convergence is the true KKT residual at z. Using the fresh QP
        # multipliers here would be circular: they satisfy the QP identity
        # g + H_eff d + J'y + yB = 0, so the residual would collapse to
        # ||H_eff d|| and pass with an arbitrarily long step whenever the
        # Hessian block is zero. Bound multipliers only count where a real
        # bound is active; the trust region shares those rows.
        viol = _violation(cE, cI)
        btol = 1e-8 * (1.0 + np.abs(z))
        at_bound = (z - lb <= btol) | (ub - z <= btol)
        stat_vec = g + JE.T @ yE_c + JI.T @ yI_c + np.where(at_bound, yB_c, 0.0)
        stat = float(np.max(np.abs(stat_vec))) if n else 0.0
        gscale = 1.0 + (float(np.max(np.abs(g))) if n else 0.0)
        comp = float(np.max(np.abs(yI_c * cI))) if mI else 0.0
        ymax_c = float(np.max(np.abs(yI_c))) if mI else 0.0
        if (viol <= cfg.tol and stat <= cfg.tol * gscale
                and comp <= cfg.tol * (1.0 + ymax_c)):
            status = "solved"
            keep_best(z, f, viol)
            break

        H_eff = H + sigma * sp.eye(n)
        d_lo = np.maximum(lb - z, -delta)
        d_hi = np.minimum(ub - z, delta)
        step = _solve_qp(H_eff, g, JE, cE, JI, cI, d_lo, d_hi, nu, cfg)
        if step is None:
            delta *= 0.25
            if delta < cfg.trust_min:
                status = "qp_failure"
                break
            continue
        d, slack_lin, yE, yI, yB = step
        step_inf = float(np.max(np.abs(d))) if n else 0.0
        tr_inactive = step_inf < 0.9 * delta

        # l1 merit model reduction (d = 0 with feasible slacks gives zero)
        quad = float(g @ d + 0.5 * d @ (H_eff @ d))
        pred = nu * _l1_infeasibility(cE, cI) - (quad + nu * slack_lin)
        z_try = np.clip(z + d, lb, ub)
        f_try = objective(z_try)
        cE_try = np.asarray(eq_fun(z_try), dtype=float)
        cI_try = np.asarray(ineq_fun(z_try), dtype=float)
        ared = merit(f, cE, cI) - merit(f_try, cE_try, cI_try)

        # The QP is solved to qp_eps per row, so pred inherits roughly
        # rows * qp_eps of noise through the slack values; anything below
        # that is indistinguishable from model stationarity. When the step
        # is also tiny, this QP's multipliers do belong to z (the residual
        # test is not circular), so either certify z or conclude that the
        # subproblem at this penalty has nothing left to say and escalate.
        # Without the step-size condition a long move along a flat direction
        # would be misread as stationarity.
        noise_floor = max(1e-14, cfg.qp_eps * (mE + mI + n)) * (1.0 + abs(f))
        tiny = step_inf <= 1e-4 * (1.0 + float(np.max(np.abs(z))))
        if pred <= noise_floor and (tiny or pred <= 1e-14):
            if viol <= cfg.tol:
                if tr_inactive:
                    at_b = (z - lb <= btol) | (ub - z <= btol)
                    sv = g + JE.T @ yE + JI.T @ yI + np.where(at_b, yB, 0.0)
                    stat = float(np.max(np.abs(sv))) if n else 0.0
                    if stat <= cfg.tol * gscale:
                        status = "solved"
                        keep_best(z, f, viol)
                        break
                    if polish < 150:
                        # the ratio test is blind down here, but the step is
                        # the model's best contraction of what residual is
                        # left and the merit cannot degrade by more than the
                        # noise. Take it and let the plain KKT test at the
                        # top decide. Steer the damping by the observed
                        # contraction: residual shrinking slowly means sigma
                        # is oversized, residual growing means it overshot.
                        if polish_stat is not None and polish_stat > 0.0:
                            contraction = stat / polish_stat
                            if contraction > 1.05:
                                sigma = min(4.0 * sigma, 1e6)
                            elif contraction > 0.7:
                                sigma = max(0.7 * sigma, 1e-10)
                        polish_stat = stat
                        polish += 1
                        z, f, cE, cI = z_try, f_try, cE_try, cI_try
                        yE_c, yI_c, yB_c = yE, yI, yB
                        keep_best(z, f, _violation(cE, cI))
                        continue
                    status = "trust_region_failure"
                    keep_best(z, f, viol)
                    break
                # feasible but strangled by the trust region: widen it,
                # the penalty has nothing to do with this
                delta = min(2.0 * delta, cfg.trust_max)
                continue
            nu = min(nu * 5.0, cfg.penalty_max)
            delta = min(2.0 * delta, cfg.trust_max)
            continue

        ratio = ared / pred
        if ratio < 0.05 and (mE or mI):
            # Second-order correction: the l1 merit rejects good tangential
            # steps whose violation grows quadratically (Maratos). Re-solve the
            # same QP with the constraints re-centered at the trial point.
            cEs = cE_try - (JE @ d) if mE else cE_try
            cIs = cI_try - (JI @ d) if mI else cI_try
            step2 = _solve_qp(H_eff, g, JE, cEs, JI, cIs, d_lo, d_hi, nu, cfg)
            if step2 is not None:
                d2 = step2[0]
                z_soc = np.clip(z + d2, lb, ub)
                f_soc = objective(z_soc)
                cE_soc = np.asarray(eq_fun(z_soc), dtype=float)
                cI_soc = np.asarray(ineq_fun(z_soc), dtype=float)
                ared_soc = merit(f, cE, cI) - merit(f_soc, cE_soc, cI_soc)
                if ared_soc > ared:
                    z_try, f_try, cE_try, cI_try = z_soc, f_soc, cE_soc, cI_soc
                    ared, ratio = ared_soc, ared_soc / pred

        if cfg.verbose:
            print(f"  it={it:4d} f={f: .6e} viol={viol:.2e} stat={stat:.2e} "
                  f"step={step_inf:.2e} delta={delta:.2e} sigma={sigma:.2e} "
                  f"nu={nu:.1e} ratio={ratio: .3f} "
                  f"{'accept' if ratio >= 0.05 else 'reject'}")
        if ratio >= 0.05:
            z, f, cE, cI = z_try, f_try, cE_try, cI_try
            yE_c, yI_c, yB_c = yE, yI, yB
            keep_best(z, f, _violation(cE, cI))
            polish = 0
            polish_stat = None
            if ratio >= 0.75:
                sigma = max(0.7 * sigma, 1e-10)
                if float(np.max(np.abs(d))) >= 0.5 * delta:
                    delta = min(2.0 * delta, cfg.trust_max)
            else:
                # accepted but under-predicted: keep the damping, let it
                # leak so cautious accepts still regain full steps
                sigma = max(0.85 * sigma, 1e-10)
            # keep the penalty dominating the multipliers so the merit stays
            # exact. Only unclipped duals estimate true multipliers: when the
            # elastic slacks are active the equality duals sit exactly at nu,
            # and raising nu toward them just chases its own tail.
            if mE + mI and slack_lin <= 1e-10:
                ymax = float(np.max(np.abs(np.concatenate([yE, yI]))))
                if ymax > 0.75 * nu:
                    nu = min(2.0 * ymax, cfg.penalty_max)
        else:
            # The merit model missed curvature 2(pred - ared)/||d||^2 along this
            # step; raising sigma to that level makes the next proximal step
            # self-limiting, which matters when the objective Hessian is zero
            # along the constraint surface.
            dn2 = float(d @ d)
            if dn2 > 0.0:
                kappa = 2.0 * max(pred - ared, 0.0) / dn2
                sigma = min(max(kappa, 4.0 * sigma, 1e-8), 1e6)
            delta = max(0.25 * delta, 0.5 * float(np.max(np.abs(d))) if np.any(d) else 0.25 * delta)
            if delta < cfg.trust_min:
                status = "trust_region_failure"
                break

    if status != "solved" and best is not None:
        _, z, f, viol = best
        cE = np.asarray(eq_fun(z), dtype=float)
        cI = np.asarray(ineq_fun(z), dtype=float)

    return SQPResult(
        z=z, status=status, iterations=it, objective=float(objective(z)),
        stationarity=stat, max_violation=_violation(cE, cI),
        eq_multipliers=yE, ineq_multipliers=yI,
    )
