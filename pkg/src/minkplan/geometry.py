"""Exact convex geometry: polytopes, balls, buffered regions, and sampled areas.

Everything here is deliberately closed-form or brute-force so it can serve as an
oracle for the polynomial approximations built elsewhere in the package.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GEOM_TOL = 1e-9


class GeometryError(ValueError):
    """Raised for invalid or dimensionally inconsistent geometric input."""


def _as_points(points, dim=None) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2:
        raise GeometryError(f"expected an array of points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("points must be finite")
    if dim is not None and pts.shape[1] != dim:
        raise GeometryError(f"expected points in R^{dim}, got R^{pts.shape[1]}")
    return pts


def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _monotone_chain(pts: np.ndarray) -> np.ndarray:
    """Convex hull of 2D points, CCW, degenerate inputs reduce to segment/point."""
    # Unique rows, lexicographic order. Exact duplicates collapse here; near
    # duplicates are resolved by the collinearity tolerance below.
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.abs(np.diff(pts, axis=0)) > 0, axis=1)
    pts = pts[keep]
    if len(pts) == 1:
        return pts
    if len(pts) == 2:
        return pts

    def half(seq):
        h = []
        for p in seq:
            while len(h) >= 2 and _cross2(h[-2], h[-1], p) <= GEOM_TOL:
                h.pop()
            h.append(p)
        return h

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        # All points collinear: keep the two extreme points as a segment.
        return np.array([pts[0], pts[-1]])
    return hull


def _rotate_to_lexmin(vertices: np.ndarray) -> np.ndarray:
    start = np.lexsort((vertices[:, 1], vertices[:, 0]))[0]
    return np.roll(vertices, -start, axis=0)


@dataclass(frozen=True)
class ConvexPolytope:
    """Convex polytope in vertex form. 2D vertices are stored CCW.

    Halfspace form is derived on demand and only defined in 2D; 3D polytopes are
    vertex-only. Degenerate inputs (collinear, duplicated) reduce to segment or
    point polytopes, which are allowed everywhere except halfspace conversion.
    """

    vertices: np.ndarray
    _halfspaces: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        v = _as_points(self.vertices)
        if v.shape[1] not in (2, 3):
            raise GeometryError("only R^2 and R^3 polytopes are supported")
        object.__setattr__(self, "vertices", v)
        v.flags.writeable = False

    # -- construction ------------------------------------------------------

    @staticmethod
    def from_points(points) -> "ConvexPolytope":
        pts = _as_points(points)
        if pts.shape[1] == 2:
            hull = _monotone_chain(pts)
            if len(hull) >= 3:
                hull = _rotate_to_lexmin(hull)
            return ConvexPolytope(hull)
        return ConvexPolytope(_hull_3d(pts))

    # -- basic measures ----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def is_full_dimensional(self) -> bool:
        if self.dim == 2:
            return self.num_vertices >= 3 and self.area() > GEOM_TOL
        rank = np.linalg.matrix_rank(self.vertices - self.vertices[0], tol=1e-9)
        return rank == 3

    def area(self) -> float:
        """Signed shoelace area (2D). Degenerate polytopes have area 0."""
        if self.dim != 2:
            raise GeometryError("area is a 2D measure")
        if self.num_vertices < 3:
            return 0.0
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def perimeter(self) -> float:
        """Boundary length. A segment's boundary is walked on both sides."""
        if self.dim != 2:
            raise GeometryError("perimeter is a 2D measure")
        if self.num_vertices == 1:
            return 0.0
        if self.num_vertices == 2:
            return 2.0 * float(np.linalg.norm(self.vertices[1] - self.vertices[0]))
        d = np.diff(np.vstack([self.vertices, self.vertices[:1]]), axis=0)
        return float(np.sum(np.linalg.norm(d, axis=1)))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    # -- halfspace form (2D only) -----------------------------------------

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with unit-norm rows such that the polytope is {x : Ax <= b}."""
        cached = object.__getattribute__(self, "_halfspaces")
        if cached is None:
            cached = vertices_to_halfspaces_2d(self)
            object.__setattr__(self, "_halfspaces", cached)
        return cached

    # -- predicates --------------------------------------------------------

    def contains(self, points, tol: float = GEOM_TOL):
        """Closed-set membership test; scalar for one point, bool array for many."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = _as_points(pts, self.dim)
        if self.dim == 3:
            out = _contains_3d(self.vertices, pts, tol)
        elif self.num_vertices >= 3:
            v = self.vertices
            e = np.roll(v, -1, axis=0) - v                      # (k, 2) edge vectors
            rel = pts[:, None, :] - v[None, :, :]               # (N, k, 2)
            cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
            out = np.all(cross >= -tol, axis=1)
        else:
            out = self.distance(pts) <= tol
        return bool(out[0]) if single else out

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the polytope (0 inside)."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = _as_points(pts, self.dim)
        if self.dim != 2:
            raise GeometryError("distance supports 2D polytopes only")
        v = self.vertices
        if self.num_vertices == 1:
            d = np.linalg.norm(pts - v[0], axis=1)
        else:
            starts = v
            ends = np.roll(v, -1, axis=0) if self.num_vertices >= 3 else v[1:2]
            if self.num_vertices == 2:
                starts = v[0:1]
            d = _point_segments_distance(pts, starts, ends)
            if self.num_vertices >= 3:
                inside = self.contains(pts, tol=0.0)
                d = np.where(inside, 0.0, d)
        return float(d[0]) if single else d

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {"vertices": [[float(c) for c in v] for v in self.vertices]}

    @staticmethod
    def from_dict(data: dict) -> "ConvexPolytope":
        if not isinstance(data, dict) or "vertices" not in data:
            raise GeometryError("polytope JSON must be an object with a 'vertices' key")
        return ConvexPolytope.from_points(data["vertices"])


def _point_segments_distance(pts: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Min distance from each point to any of the segments [starts_i, ends_i]."""
    d = ends - starts                                          # (k, 2)
    len2 = np.maximum(np.sum(d * d, axis=1), 1e-300)
    rel = pts[:, None, :] - starts[None, :, :]                 # (N, k, 2)
    t = np.clip(np.einsum("nkj,kj->nk", rel, d) / len2, 0.0, 1.0)
    proj = starts[None, :, :] + t[:, :, None] * d[None, :, :]
    return np.min(np.linalg.norm(pts[:, None, :] - proj, axis=2), axis=1)


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross2(q1, q2, p1)
    d2 = _cross2(q1, q2, p2)
    d3 = _cross2(p1, p2, q1)
    d4 = _cross2(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def _hull_3d(pts: np.ndarray) -> np.ndarray:
    """Reduce a 3D point set to its hull vertices (full-dimensional input)."""
    from scipy.spatial import ConvexHull as SciHull

    uniq = np.unique(pts, axis=0)
    if len(uniq) < 4 or np.linalg.matrix_rank(uniq - uniq[0], tol=1e-9) < 3:
        raise GeometryError("3D polytopes must be full-dimensional (use 2D otherwise)")
    hull = SciHull(uniq)
    return uniq[np.sort(hull.vertices)]


def _contains_3d(vertices: np.ndarray, pts: np.ndarray, tol: float) -> np.ndarray:
    from scipy.spatial import ConvexHull as SciHull

    hull = SciHull(vertices)
    # hull.equations rows are (normal, offset) with normal . x + offset <= 0 inside
    vals = pts @ hull.equations[:, :3].T + hull.equations[:, 3]
    return np.all(vals <= tol, axis=1)


def convex_hull(points) -> ConvexPolytope:
    """Convex hull of a 2D point set (degenerate inputs give segment/point)."""
    pts = _as_points(points, 2)
    return ConvexPolytope.from_points(pts)


def vertices_to_halfspaces_2d(poly: ConvexPolytope) -> tuple[np.ndarray, np.ndarray]:
    """Outward unit-normal halfspace form {x : Ax <= b} of a full-dim 2D polytope.

    Each row is tight at the two endpoints of its edge. Degenerate polytopes have
    no valid bounded halfspace form and are rejected.
    """
    if poly.dim != 2:
        raise GeometryError("halfspace conversion is 2D only")
    if not poly.is_full_dimensional():
        raise GeometryError("halfspace form requires a full-dimensional polytope")
    v = poly.vertices
    e = np.roll(v, -1, axis=0) - v
    # CCW boundary: outward normal of edge (dx, dy) is (dy, -dx).
    normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    b = np.einsum("ij,ij->i", normals, v)
    return normals, b


@dataclass(frozen=True)
class Ball:
    """Origin-centered Euclidean ball."""

    radius: float
    dim: int = 2

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius < 0:
            raise GeometryError("ball radius must be finite and nonnegative")
        if self.dim not in (2, 3):
            raise GeometryError("only 2D and 3D balls are supported")


@dataclass(frozen=True)
class BufferedPolytope:
    """Exact Minkowski sum of a polytope and an origin-centered ball.

    The region is {x : dist(x, P) <= r}: the polytope grown by rounded edges and
    vertex arcs. Its 2D area has the closed form area(P) + perimeter(P) * r + pi r^2
    (Steiner formula; the segment/point degenerations fall out with the perimeter
    convention used by ConvexPolytope).
    """

    base: ConvexPolytope
    radius: float

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius < 0:
            raise GeometryError("buffer radius must be finite and nonnegative")

    @property
    def dim(self) -> int:
        return self.base.dim

    def area(self) -> float:
        return self.base.area() + self.base.perimeter() * self.radius + np.pi * self.radius**2

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.base.bbox()
        return lo - self.radius, hi + self.radius

    def contains(self, points, tol: float = GEOM_TOL):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        out = self.base.distance(np.atleast_2d(pts)) <= self.radius + tol
        return bool(out[0]) if single else out


def minkowski_sum_ball(poly: ConvexPolytope, ball: Ball) -> BufferedPolytope:
    """Exact polytope ⊕ ball region (the ball is symmetric, so O ⊕ (-B) = O ⊕ B)."""
    if poly.dim != ball.dim:
        raise GeometryError(f"dimension mismatch: polytope in R^{poly.dim}, ball in R^{ball.dim}")
    return BufferedPolytope(poly, ball.radius)


def monte_carlo_area(indicator, bbox, samples: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Estimate the measure of {x in bbox : indicator(x)} by uniform sampling.

    indicator takes an (N, n) array of points and returns a boolean array. Returns
    (estimate, standard_error). Fully determined by the seed.
    """
    lo = np.asarray(bbox[0], dtype=float)
    hi = np.asarray(bbox[1], dtype=float)
    if lo.shape != hi.shape or np.any(hi < lo):
        raise GeometryError("invalid bounding box")
    if samples <= 0:
        raise GeometryError("sample count must be positive")
    vol = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(samples, len(lo)))
    hits = np.asarray(indicator(pts), dtype=bool)
    p = hits.mean()
    est = vol * p
    se = vol * np.sqrt(max(p * (1.0 - p), 0.0) / samples)
    return float(est), float(se)


def sample_in_region(indicator, bbox, count: int, seed: int = 0, max_batches: int = 2000) -> np.ndarray:
    """Draw `count` points from the region by rejection sampling the bbox."""
    lo = np.asarray(bbox[0], dtype=float)
    hi = np.asarray(bbox[1], dtype=float)
    rng = np.random.default_rng(seed)
    out = []
    got = 0
    for _ in range(max_batches):
        pts = rng.uniform(lo, hi, size=(max(4 * count, 1024), len(lo)))
        hit = pts[np.asarray(indicator(pts), dtype=bool)]
        if len(hit):
            out.append(hit)
            got += len(hit)
        if got >= count:
            return np.vstack(out)[:count]
    raise GeometryError("rejection sampling failed: region too small for its bbox")


def random_instance(seed: int, n_vertices: int | None = None, radius: float | None = None):
    """Seeded random (polytope, radius) benchmark instance.

    Vertex count uniform in {3..12}, vertices from uniform points in [-1, 1]^2,
    radius uniform in [0, 1]. Degenerate hulls (fewer than 3 hull vertices) are
    resampled so instances are always full-dimensional.
    """
    rng = np.random.default_rng(seed)
    k = int(n_vertices) if n_vertices is not None else int(rng.integers(3, 13))
    if k < 3:
        raise GeometryError("n_vertices must be at least 3")
    r = float(radius) if radius is not None else float(rng.uniform(0.0, 1.0))
    if not 0.0 <= r:
        raise GeometryError("radius must be nonnegative")
    while True:
        pts = rng.uniform(-1.0, 1.0, size=(k, 2))
        poly = ConvexPolytope.from_points(pts)
        if poly.is_full_dimensional():
            return poly, r


def load_polytope(path) -> ConvexPolytope:
    with open(path) as f:
        data = json.load(f)
    return ConvexPolytope.from_dict(data)


def save_polytope(poly: ConvexPolytope, path) -> None:
    with open(path, "w") as f:
        json.dump(poly.to_dict(), f, indent=2)
        f.write("\n")
