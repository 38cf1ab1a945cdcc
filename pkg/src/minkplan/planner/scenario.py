"""Randomized desk-scale driving scenarios on a miniature track.

A scenario is one planning instance: a rectangular track, start and goal
states near the left and right edges, and a handful of convex obstacles in
between. The generator draws obstacle hulls at random and keeps a draw only
when a buffered grid search still finds a path, so every emitted scenario is
plannable by construction; everything downstream (warm start, both collision
modes, benchmarks) consumes the same frozen instance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..approximation import approximate
from ..geometry import Ball, BufferedPolytope, ConvexPolytope
from .astar import NoPathError, astar_initialize, astar_path
from .dynamics import CarModel
from .ocp import ObstacleSpec, OCPSpec, OCPError, build_nlp, solve_nlp, compare_modes

SCENARIO_SCHEMA = "minkplan.scenario.v1"

TRACK_LO = np.array([0.0, 0.0])
TRACK_HI = np.array([1.0, 0.3])
# vx floor keeps the slip angles of the tire model defined along the whole
# trajectory; the other limits are the track box and actuator ranges
CAR_STATE_LB = np.array([0.0, 0.0, -np.inf, 0.05, -np.inf, -np.inf])
CAR_STATE_UB = np.array([1.0, 0.3, np.inf, 4.0, np.inf, np.inf])
CAR_INPUT_LB = np.array([-0.1, -1.0])
CAR_INPUT_UB = np.array([1.0, 1.0])


class ScenarioError(OCPError):
    """Malformed or unplannable scenario."""


@dataclass(frozen=True)
class Scenario:
    """One frozen planning instance; geometry and endpoints, no solver config."""

    name: str
    seed: int
    N: int
    dt: float
    x_start: np.ndarray
    x_goal: np.ndarray
    state_lb: np.ndarray
    state_ub: np.ndarray
    input_lb: np.ndarray
    input_ub: np.ndarray
    obstacles: tuple = ()

    def bounds(self):
        return np.asarray(self.state_lb[:2]), np.asarray(self.state_ub[:2])

    def to_dict(self) -> dict:
        return {
            "schema": SCENARIO_SCHEMA,
            "name": self.name,
            "seed": self.seed,
            "N": self.N,
            "dt": self.dt,
            "x_start": [float(v) for v in self.x_start],
            "x_goal": [float(v) for v in self.x_goal],
            "state_lb": [float(v) for v in self.state_lb],
            "state_ub": [float(v) for v in self.state_ub],
            "input_lb": [float(v) for v in self.input_lb],
            "input_ub": [float(v) for v in self.input_ub],
            "obstacles": [
                [[float(c) for c in v] for v in poly.vertices] for poly in self.obstacles
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if data.get("schema") != SCENARIO_SCHEMA:
            raise ScenarioError(f"unknown scenario schema {data.get('schema')!r}")
        return cls(
            name=str(data["name"]),
            seed=int(data["seed"]),
            N=int(data["N"]),
            dt=float(data["dt"]),
            x_start=np.asarray(data["x_start"], dtype=float),
            x_goal=np.asarray(data["x_goal"], dtype=float),
            state_lb=np.asarray(data["state_lb"], dtype=float),
            state_ub=np.asarray(data["state_ub"], dtype=float),
            input_lb=np.asarray(data["input_lb"], dtype=float),
            input_ub=np.asarray(data["input_ub"], dtype=float),
            obstacles=tuple(ConvexPolytope(np.asarray(v, dtype=float))
                            for v in data["obstacles"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def gen_car_scenario(seed: int, n_obstacles: int | None = None, N: int = 50,
                     dt: float = 0.02, max_tries: int = 60) -> Scenario:
    """Draw a plannable random scenario; the same seed always gives the same one."""
    rng = np.random.default_rng(seed)
    model = CarModel()
    r = float(model.ball_radii[0])
    if n_obstacles is None:
        n_obstacles = int(rng.integers(1, 4))
    if not 0 <= n_obstacles <= 5:
        raise ScenarioError("n_obstacles must be between 0 and 5")

    py_s, py_f = rng.uniform(0.05, 0.25, size=2)
    x_start = np.array([0.0, py_s, 0.0, 1.0, 0.0, 0.0])
    x_goal = np.array([1.0, py_f, 0.0, 1.0, 0.0, 0.0])

    for _ in range(max_tries):
        polys = []
        for _ in range(n_obstacles):
            cx = rng.uniform(0.2, 0.8)
            cy = rng.uniform(0.03, 0.27)
            wx = rng.uniform(0.04, 0.09)
            wy = rng.uniform(0.03, 0.06)
            pts = np.column_stack([
                cx + wx * rng.uniform(-1.0, 1.0, 6),
                cy + wy * rng.uniform(-1.0, 1.0, 6),
            ])
            poly = ConvexPolytope.from_points(pts)
            if poly.num_vertices < 3:
                break
            polys.append(poly)
        if len(polys) != n_obstacles:
            continue
        # Plannability is checked with the radius inflated well past the true
        # ball: the polynomial constraint is conservative and the car cannot
        # brake hard, so a corridor that is merely wide enough for the disc
        # tends to produce a dynamically infeasible program. Demanding slack
        # here keeps the drawn scenarios solvable in both modes.
        buffered = [BufferedPolytope(p, 1.5 * r) for p in polys]
        # The start pose faces straight down the track at cruise speed, and
        # the friction-limited turn radius at that speed is about a quarter
        # of the track length. A wall near the start line can demand a bend
        # the car cannot make, so every obstacle keeps a clear runway.
        if any(float(np.min(p.vertices[:, 0])) - 1.5 * r < 0.30 for p in polys):
            continue
        if any(b.contains(x_start[:2]) or b.contains(x_goal[:2]) for b in buffered):
            continue
        try:
            astar_path((TRACK_LO, TRACK_HI), buffered, x_start[:2], x_goal[:2],
                       resolution=r / 2)
        except NoPathError:
            continue
        return Scenario(
            name=f"car-{seed:04d}",
            seed=seed,
            N=N,
            dt=dt,
            x_start=x_start,
            x_goal=x_goal,
            state_lb=CAR_STATE_LB.copy(),
            state_ub=CAR_STATE_UB.copy(),
            input_lb=CAR_INPUT_LB.copy(),
            input_ub=CAR_INPUT_UB.copy(),
            obstacles=tuple(polys),
        )
    raise ScenarioError(
        f"no plannable obstacle layout found for seed {seed} "
        f"after {max_tries} tries"
    )


def scenario_specs(scenario: Scenario, model=None, degree: int = 4,
                   method: str = "coa", certify_samples: int = 2000):
    """(approximate, exact) problem specs sharing one set of approximations."""
    model = model or CarModel()
    radii = [float(v) for v in np.atleast_1d(model.ball_radii)]
    obs_approx = []
    obs_exact = []
    for poly in scenario.obstacles:
        aps = tuple(
            approximate(poly, Ball(r), degree, method=method,
                        certify_samples=certify_samples, seed=scenario.seed)
            for r in radii
        )
        obs_approx.append(ObstacleSpec(poly, aps))
        obs_exact.append(ObstacleSpec(poly))
    common = dict(
        model=model, N=scenario.N, dt=scenario.dt,
        x_start=scenario.x_start, x_goal=scenario.x_goal,
        state_lb=scenario.state_lb, state_ub=scenario.state_ub,
        input_lb=scenario.input_lb, input_ub=scenario.input_ub,
    )
    spec_a = OCPSpec(obstacles=tuple(obs_approx), mode="approximate", **common)
    spec_e = OCPSpec(obstacles=tuple(obs_exact), mode="exact", **common)
    return spec_a, spec_e


def warm_start(scenario: Scenario, model=None) -> np.ndarray:
    """Grid-search path resampled to the horizon, with interpolated velocities."""
    model = model or CarModel()
    r = float(model.ball_radii[0])
    buffered = [BufferedPolytope(p, r) for p in scenario.obstacles]
    return astar_initialize(scenario.bounds(), buffered, scenario.x_start,
                            scenario.x_goal, scenario.N + 1, resolution=r / 2)


def plan_scenario(scenario: Scenario, mode: str = "approximate", degree: int = 4,
                  method: str = "coa", settings=None, model=None):
    """Solve one scenario in the requested mode from the grid warm start."""
    if mode not in ("approximate", "exact"):
        raise ScenarioError(f"unknown mode {mode!r}")
    model = model or CarModel()
    spec_a, spec_e = scenario_specs(scenario, model=model, degree=degree, method=method)
    X0 = warm_start(scenario, model=model)
    spec = spec_a if mode == "approximate" else spec_e
    return solve_nlp(build_nlp(spec), X0=X0, settings=settings)


def compare_scenario(scenario: Scenario, degree: int = 4, method: str = "coa",
                     settings=None, model=None):
    """Both modes from the same warm start, paired for a suboptimality reading."""
    model = model or CarModel()
    spec_a, spec_e = scenario_specs(scenario, model=model, degree=degree, method=method)
    X0 = warm_start(scenario, model=model)
    return compare_modes(spec_a, spec_e, X0=X0, settings=settings)
