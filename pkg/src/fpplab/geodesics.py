"""Observables of geodesics: transversal fluctuation, line crossings,
side-to-side passage times of rectangles and parallelograms, and the
concatenation defect."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, Parallelogram, Rect, point_line_distances
from .models import Geodesic, ModelInstance


@dataclass(frozen=True)
class CrossingProfile:
    lines_x: tuple[float, ...]
    first_hit_heights: tuple[float, ...]
    k_indices: tuple[int, ...]
    W: float

    def tau1(self) -> int:
        """Sum of |k_i - k_{i-1}| with k_0 = k_M = 0 appended."""
        k = (0, *self.k_indices, 0)
        return int(sum(abs(b - a) for a, b in zip(k[:-1], k[1:])))


@dataclass(frozen=True)
class CorridorQuery:
    region: Rect | Parallelogram
    side_sample_step: float
    mode: str = "min"

    def __post_init__(self):
        if not self.side_sample_step > 0:
            raise ValueError("side_sample_step must be positive")
        if self.mode not in ("min", "max"):
            raise ValueError("mode must be 'min' or 'max'")

    def sides(self) -> tuple[np.ndarray, np.ndarray]:
        r = self.region
        if isinstance(r, Rect):
            left = (r.x0, r.y0, r.y1)
            right = (r.x1, r.y0, r.y1)
        else:
            left = (r.left_x, *r.left_side)
            right = (r.right_x, *r.right_side)
        return _side_net(*left, self.side_sample_step), _side_net(*right, self.side_sample_step)


def _side_net(x: float, y0: float, y1: float, step: float) -> np.ndarray:
    """Points y0, y0 + step, ... on a vertical side, always including y1.
    Halving a step that divides the side length refines the net."""
    count = max(1, math.ceil((y1 - y0) / step - 1e-9)) + 1 if y1 > y0 else 1
    ys = np.linspace(y0, y1, count) if count > 1 else np.array([y0])
    return np.column_stack([np.full(len(ys), x), ys])


def transversal_fluctuation(g: Geodesic) -> float:
    """Largest distance of the path from the chord between its endpoints."""
    v = g.vertices
    if len(v) < 2 or tuple(v[0]) == tuple(v[-1]):
        raise GeometryError("transversal fluctuation needs distinct endpoints")
    return float(point_line_distances(v, v[0], v[-1]).max())


def arc_length_point(vertices: np.ndarray, t: float) -> tuple[np.ndarray, int]:
    """Point at arc-length fraction t of the polyline and the index of the
    segment holding it."""
    seg = np.hypot(*np.diff(vertices, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = t * cum[-1]
    k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1))
    if seg[k] == 0:
        return vertices[k].copy(), k
    lam = (s - cum[k]) / seg[k]
    return vertices[k] + lam * (vertices[k + 1] - vertices[k]), k


def first_crossing_height(vertices: np.ndarray, x_line: float) -> float:
    """Height of the first point where the polyline meets x = x_line."""
    xs = vertices[:, 0]
    for k in range(len(vertices) - 1):
        a, b = xs[k], xs[k + 1]
        if a == x_line:
            return float(vertices[k, 1])
        if (a - x_line) * (b - x_line) <= 0:
            lam = (x_line - a) / (b - a)
            return float(vertices[k, 1] + lam * (vertices[k + 1, 1] - vertices[k, 1]))
    if xs[-1] == x_line:
        return float(vertices[-1, 1])
    raise GeometryError(f"path does not reach the line x = {x_line}")


def crossing_profile(g: Geodesic, n: float, M: int, W: float) -> CrossingProfile:
    """First hitting heights of the lines x = i n, i = 1..M-1, and their
    normalised indices floor(height / W)."""
    v = g.vertices
    if not (v[:, 0].min() <= n and v[:, 0].max() >= (M - 1) * n):
        raise GeometryError("geodesic does not span the crossing lines")
    lines = tuple(i * n for i in range(1, M))
    heights = tuple(first_crossing_height(v, x) for x in lines)
    ks = tuple(math.floor(h / W) for h in heights)
    return CrossingProfile(lines, heights, ks, W)


def corridor_passage(m: ModelInstance, q: CorridorQuery):
    """Min or max of X_uv over u on the left and v on the right side net.

    Returns (value, (u, v)). The min uses one multi-source sweep; the max
    runs one sweep per left sample.
    """
    left, right = q.sides()
    if len(left) == 0 or len(right) == 0:
        raise GeometryError("empty side discretisation")
    if q.mode == "min":
        dist = m.sweep(left)
        vals = np.array([m.arrival(dist, v) for v in right])
        j = int(np.argmin(vals))
        # X is symmetric, so a reverse sweep from v_j scores every left point
        back = m.sweep([right[j]])
        i = int(np.argmin([m.arrival(back, u) for u in left]))
        return float(vals[j]), (tuple(left[i]), tuple(right[j]))
    best = (-math.inf, None)
    for u in left:
        dist = m.sweep([u])
        vals = np.array([m.arrival(dist, v) for v in right])
        j = int(np.argmax(vals))
        if vals[j] > best[0]:
            best = (float(vals[j]), (tuple(u), tuple(right[j])))
    return best


def resolve_breakpoints(m: ModelInstance, g: Geodesic, breakpoints) -> list[np.ndarray]:
    """Points of the path at the given parameters. Parameters are arc-length
    fractions; on lattice geodesics the point is moved to the nearest path
    vertex, the lattice analogue of rounding to Z^2."""
    pts = []
    prev = 0.0
    for t in breakpoints:
        if not 0 < t < 1 or t <= prev:
            raise ValueError("breakpoints must be strictly increasing in (0, 1)")
        prev = t
        p, k = arc_length_point(g.vertices, t)
        if m.spec.is_grid:
            a, b = g.vertices[k], g.vertices[k + 1]
            p = a if np.hypot(*(p - a)) <= np.hypot(*(p - b)) else b
        pts.append(np.asarray(p, dtype=float))
    return pts


def gamma_defect(m: ModelInstance, g: Geodesic, breakpoints) -> float:
    """(1/M) [sum of X between consecutive path points - X_uv] for M
    breakpoints; zero when there are none."""
    breakpoints = list(breakpoints)
    if not breakpoints:
        return 0.0
    u, v = g.vertices[0], g.vertices[-1]
    pts = [u, *resolve_breakpoints(m, g, breakpoints), v]
    pieces = [m.passage_time(tuple(a), tuple(b)) for a, b in zip(pts[:-1], pts[1:])]
    total = math.fsum(pieces)
    return (total - m.passage_time(tuple(u), tuple(v))) / len(breakpoints)


def local_tf_audit(m: ModelInstance, n: float, M: float, y1: float, y2: float) -> float:
    """Height at which the geodesic from (0, y1) to (Mn, y2) first meets x = n."""
    if M < 1.5:
        raise ValueError("local transversal audit needs M >= 3/2")
    if abs(y1) > M * n or abs(y2) > M * n:
        raise ValueError("endpoint heights must satisfy |y| <= Mn")
    g = m.geodesic((0.0, y1), (M * n, y2))
    return first_crossing_height(g.vertices, n)


def local_tf_excess(H: float, M: float, y1: float, y2: float) -> float:
    """H minus the linear interpolation y1 + (y2 - y1)/M."""
    return H - y1 - (y2 - y1) / M
