"""Seeded benchmark suites over random Minkowski-sum instances.

The error-table suite draws the paper-style random instances (hulls of 3..12
uniform points in [-1, 1]^2, radius uniform in [0, 1]), runs every requested
method and degree on each, and reports the sampled area error.

Reports are split deliberately: the CSV holds only seed-deterministic content
so identical configs produce byte-identical files, while wall-clock times go
to a JSON sidecar that is allowed to differ between runs.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .approximation import CertificationError, approximate, quality
from .conic_solver import SolverFailure
from .geometry import Ball, minkowski_sum_ball, random_instance

TABLE1_SCHEMA = "minkplan.table1.v1"
TIMING_SCHEMA = "minkplan.timing.v1"

TABLE1_COLUMNS = [
    "schema", "row_type", "case_seed", "vertices", "radius", "degree",
    "method", "error_pct", "error_se_pct", "outer_margin",
    "identity_residual", "solve_status", "stat", "value",
]

SUMMARY_STATS = ("mean_error_pct", "median_error_pct", "p90_error_pct",
                 "max_outer_margin", "n_cases", "n_failed")


@dataclass
class BenchmarkReport:
    schema: str
    suite: str
    seed: int
    cases: int
    config: dict
    rows: list = field(default_factory=list)      # deterministic case rows
    summary: list = field(default_factory=list)   # deterministic summary rows
    timings: list = field(default_factory=list)   # wall times, sidecar only


def case_seeds(seed: int, cases: int) -> list:
    """Per-case seeds derived from the suite seed, stable across runs."""
    if cases < 1:
        raise ValueError("cases must be >= 1")
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(cases)]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _run_table1_case(args):
    case_seed, degrees, methods, quality_samples, certify_samples = args
    poly, r = random_instance(case_seed)
    ball = Ball(r)
    exact = minkowski_sum_ball(poly, ball)
    rows, timings = [], []
    for method in methods:
        for degree in degrees:
            base = {
                "schema": TABLE1_SCHEMA, "row_type": "case",
                "case_seed": case_seed, "vertices": poly.num_vertices,
                "radius": r, "degree": degree, "method": method,
                "error_pct": None, "error_se_pct": None, "outer_margin": None,
                "identity_residual": None, "solve_status": None,
                "stat": "", "value": "",
            }
            t0 = time.perf_counter()
            try:
                a = approximate(
                    poly, ball, degree, method=method,
                    certify_samples=certify_samples, seed=case_seed,
                )
                q = quality(a, exact, samples=quality_samples, seed=case_seed)
                base.update(
                    error_pct=q.error_pct, error_se_pct=q.error_pct_se,
                    outer_margin=a.outer_margin,
                    identity_residual=a.identity_residual,
                    solve_status=a.report.status,
                )
                solve_time = a.report.solve_time
                iters = a.report.iterations
            except SolverFailure as e:
                base.update(solve_status=f"solver_failure:{e.report.status}")
                solve_time, iters = e.report.solve_time, e.report.iterations
            except CertificationError as e:
                base.update(solve_status=f"certification_error:{e}")
                solve_time, iters = 0.0, 0
            rows.append(base)
            timings.append({
                "case_seed": case_seed, "method": method, "degree": degree,
                "wall_s": time.perf_counter() - t0,
                "solve_time_s": solve_time, "iterations": iters,
            })
    return rows, timings


def table1_suite(
    cases: int,
    seed: int = 0,
    degrees=(2, 4, 6),
    methods=("coa", "oa"),
    quality_samples: int = 20_000,
    certify_samples: int = 10_000,
    threads: int = 1,
) -> BenchmarkReport:
    """Run the random-instance error suite; failures become rows, not aborts."""
    seeds = case_seeds(seed, cases)
    work = [(cs, tuple(degrees), tuple(methods), quality_samples, certify_samples)
            for cs in seeds]
    report = BenchmarkReport(
        schema=TABLE1_SCHEMA, suite="table1", seed=seed, cases=cases,
        config={
            "version": __version__, "suite": "table1", "seed": seed,
            "cases": cases, "degrees": list(degrees), "methods": list(methods),
            "quality_samples": quality_samples,
            "certify_samples": certify_samples, "threads": threads,
        },
    )
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_table1_case, work))
    else:
        results = [_run_table1_case(w) for w in work]
    for rows, timings in results:
        report.rows.extend(rows)
        report.timings.extend(timings)

    for method in methods:
        for degree in degrees:
            grp = [r for r in report.rows
                   if r["method"] == method and r["degree"] == degree]
            ok = [r["error_pct"] for r in grp if r["error_pct"] is not None]
            margins = [r["outer_margin"] for r in grp if r["outer_margin"] is not None]
            stats = {
                "mean_error_pct": float(np.mean(ok)) if ok else None,
                "median_error_pct": float(np.median(ok)) if ok else None,
                "p90_error_pct": float(np.percentile(ok, 90)) if ok else None,
                "max_outer_margin": float(np.max(margins)) if margins else None,
                "n_cases": len(grp),
                "n_failed": len(grp) - len(ok),
            }
            for stat in SUMMARY_STATS:
                report.summary.append({
                    "schema": TABLE1_SCHEMA, "row_type": "summary",
                    "case_seed": None, "vertices": None, "radius": None,
                    "degree": degree, "method": method,
                    "error_pct": None, "error_se_pct": None,
                    "outer_margin": None, "identity_residual": None,
                    "solve_status": None,
                    "stat": stat, "value": _fmt(stats[stat]),
                })
    return report


def write_csv(report: BenchmarkReport, path, columns=None) -> None:
    """Deterministic CSV: fixed column order, repr floats, LF line endings."""
    cols = columns or TABLE1_COLUMNS
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for row in report.rows + report.summary:
            w.writerow([_fmt(row.get(c)) for c in cols])


def write_timing_sidecar(report: BenchmarkReport, path) -> None:
    payload = {
        "schema": TIMING_SCHEMA,
        "suite": report.suite,
        "seed": report.seed,
        "cases": report.cases,
        "config": report.config,
        "rows": report.timings,
        "total_wall_s": float(sum(t["wall_s"] for t in report.timings)),
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def summary_value(report: BenchmarkReport, method: str, degree: int, stat: str):
    for row in report.summary:
        if (row["method"], row["degree"], row["stat"]) == (method, degree, stat):
            v = row["value"]
            return None if v == "" else float(v)
    raise KeyError(f"no summary row for {(method, degree, stat)}")
