"""Grid A* warm start for the trajectory optimizer.

Finds a shortest collision-free polyline for the vehicle's disk center on an
8-connected grid, blocking every cell that could touch a buffered obstacle
(conservative: center distance <= radius + half cell diagonal). The polyline
is arclength-resampled to the knot count and non-position states are linearly
interpolated, which is all the NLP needs to start in the right homotopy class.
"""
from __future__ import annotations

import heapq

import numpy as np

from ..geometry import BufferedPolytope


class PlanningError(RuntimeError):
    pass


class NoPathError(PlanningError):
    """The discretized environment admits no path at this resolution."""


_SQRT2 = float(np.sqrt(2.0))
# 8-connected neighborhood, lexicographic order for deterministic tie-breaks
_MOVES = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _blocked_mask(xs, ys, obstacles, margin):
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    blocked = np.zeros(centers.shape[0], dtype=bool)
    for obs in obstacles:
        blocked |= obs.base.distance(centers) <= obs.radius + margin
    return blocked.reshape(len(xs), len(ys))


def _segment_clear(a, b, obstacles, step):
    n = max(int(np.ceil(np.linalg.norm(b - a) / step)), 1)
    ts = np.linspace(0.0, 1.0, n + 1)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    return not any(np.any(obs.contains(pts)) for obs in obstacles)


def resample_polyline(points: np.ndarray, count: int) -> np.ndarray:
    """Arclength-uniform resampling to `count` points, endpoints preserved."""
    pts = np.asarray(points, dtype=float)
    if count < 2:
        raise PlanningError("need at least two sample points")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0.0:
        return np.repeat(pts[:1], count, axis=0)
    targets = np.linspace(0.0, s[-1], count)
    out = np.empty((count, pts.shape[1]))
    for j in range(pts.shape[1]):
        out[:, j] = np.interp(targets, s, pts[:, j])
    return out


def astar_path(
    bounds,
    obstacles,
    start,
    goal,
    resolution: float,
) -> np.ndarray:
    """Shortest 8-connected grid path from start to goal as a polyline.

    Returns the straight segment when nothing blocks it. Raises NoPathError
    when an endpoint is inside an obstacle or the grid has no route.
    """
    lo, hi = (np.asarray(v, dtype=float) for v in bounds)
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if resolution <= 0.0:
        raise PlanningError("resolution must be positive")
    for name, pt in (("start", start), ("goal", goal)):
        if np.any(pt < lo) or np.any(pt > hi):
            raise NoPathError(f"{name} outside planning bounds")
        if any(obs.contains(pt) for obs in obstacles):
            raise NoPathError(f"{name} inside a buffered obstacle")

    if _segment_clear(start, goal, obstacles, 0.25 * resolution):
        return np.stack([start, goal])

    xs = np.arange(lo[0], hi[0] + 0.5 * resolution, resolution)
    ys = np.arange(lo[1], hi[1] + 0.5 * resolution, resolution)
    margin = 0.5 * resolution * _SQRT2
    blocked = _blocked_mask(xs, ys, obstacles, margin)

    def nearest_free(pt, name):
        i0 = int(np.clip(round((pt[0] - lo[0]) / resolution), 0, len(xs) - 1))
        j0 = int(np.clip(round((pt[1] - lo[1]) / resolution), 0, len(ys) - 1))
        best = None
        for di in range(-2, 3):
            for dj in range(-2, 3):
                i, j = i0 + di, j0 + dj
                if 0 <= i < len(xs) and 0 <= j < len(ys) and not blocked[i, j]:
                    d = (di * di + dj * dj, i, j)
                    if best is None or d < best:
                        best = d
        if best is None:
            raise NoPathError(f"no free grid cell near {name}")
        return best[1], best[2]

    si, sj = nearest_free(start, "start")
    gi, gj = nearest_free(goal, "goal")

    def heuristic(i, j):
        dx, dy = abs(i - gi), abs(j - gj)
        return (max(dx, dy) + (_SQRT2 - 1.0) * min(dx, dy)) * resolution

    nx, ny = len(xs), len(ys)
    dist = np.full((nx, ny), np.inf)
    parent = {}
    h0 = heuristic(si, sj)
    open_heap = [(h0, h0, si * ny + sj)]
    dist[si, sj] = 0.0
    closed = np.zeros((nx, ny), dtype=bool)
    while open_heap:
        f, h, idx = heapq.heappop(open_heap)
        i, j = divmod(idx, ny)
        if closed[i, j]:
            continue
        closed[i, j] = True
        if (i, j) == (gi, gj):
            break
        for di, dj in _MOVES:
            ni, nj = i + di, j + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or blocked[ni, nj]:
                continue
            if di and dj and (blocked[i, nj] or blocked[ni, j]):
                continue          # no cutting corners past a blocked cell
            step = _SQRT2 * resolution if di and dj else resolution
            nd = dist[i, j] + step
            if nd < dist[ni, nj] - 1e-12:
                dist[ni, nj] = nd
                parent[(ni, nj)] = (i, j)
                nh = heuristic(ni, nj)
                heapq.heappush(open_heap, (nd + nh, nh, ni * ny + nj))
    if not closed[gi, gj]:
        raise NoPathError("A* found no route at this resolution")

    cells = [(gi, gj)]
    while cells[-1] != (si, sj):
        cells.append(parent[cells[-1]])
    cells.reverse()
    mid = np.array([[xs[i], ys[j]] for i, j in cells])
    return np.vstack([start[None, :], mid, goal[None, :]])


def astar_initialize(
    bounds,
    obstacles,
    x_start: np.ndarray,
    x_goal: np.ndarray,
    n_points: int,
    resolution: float,
    position_idx=(0, 1),
) -> np.ndarray:
    """Full state guess: A* positions, everything else linearly interpolated."""
    x_start = np.asarray(x_start, dtype=float)
    x_goal = np.asarray(x_goal, dtype=float)
    pos_idx = list(position_idx)
    path = astar_path(bounds, obstacles, x_start[pos_idx], x_goal[pos_idx], resolution)
    positions = resample_polyline(path, n_points)
    alphas = np.linspace(0.0, 1.0, n_points)[:, None]
    X0 = (1.0 - alphas) * x_start[None, :] + alphas * x_goal[None, :]
    X0[:, pos_idx] = positions
    return X0
