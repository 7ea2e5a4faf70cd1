"""Planar primitives: points, rectangles, strips, parallelograms and a few
elementary distance bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Degenerate or invalid geometry."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


def as_xy(p) -> tuple[float, float]:
    """Accept a Point, a 2-sequence or a length-2 array."""
    if isinstance(p, Point):
        return p.x, p.y
    x, y = p
    return float(x), float(y)


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise GeometryError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)

    def distance_to_boundary(self, p) -> float:
        """Signed distance from p to the boundary; negative outside."""
        x, y = as_xy(p)
        return min(x - self.x0, self.x1 - x, y - self.y0, self.y1 - y)

    def expanded(self, pad: float) -> "Rect":
        return Rect(self.x0 - pad, self.x1 + pad, self.y0 - pad, self.y1 + pad)

    def scaled(self, factor: float) -> "Rect":
        """Same centre, side lengths multiplied by ``factor``."""
        cx, cy = (self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2
        hw, hh = factor * self.width / 2, factor * self.height / 2
        return Rect(cx - hw, cx + hw, cy - hh, cy + hh)

    def intersects(self, other: "Rect") -> bool:
        return not (other.x1 <= self.x0 or other.x0 >= self.x1
                    or other.y1 <= self.y0 or other.y0 >= self.y1)

    @classmethod
    def bounding(cls, points, pad: float = 0.0) -> "Rect":
        xs, ys = zip(*(as_xy(p) for p in points))
        return cls(min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad)


@dataclass(frozen=True)
class VStrip:
    """Open vertical strip x0 < x < x1."""
    x0: float
    x1: float

    def __post_init__(self):
        if not self.x0 < self.x1:
            raise GeometryError(f"degenerate strip {self}")

    def contains(self, x, y):
        x = np.asarray(x)
        return (x > self.x0) & (x < self.x1) & np.ones(np.shape(y), dtype=bool)


@dataclass(frozen=True)
class Parallelogram:
    """Parallelogram with left side {((i-1)n, y): kW <= y <= (k+1)W} and right
    side {(in, y): k'W <= y <= (k'+1)W}."""
    i: int
    k: int
    k_prime: int
    n: float
    W: float

    def __post_init__(self):
        if not (self.n > 0 and self.W > 0):
            raise GeometryError("parallelogram needs n > 0 and W > 0")

    @property
    def left_x(self) -> float:
        return (self.i - 1) * self.n

    @property
    def right_x(self) -> float:
        return self.i * self.n

    @property
    def left_side(self) -> tuple[float, float]:
        return self.k * self.W, (self.k + 1) * self.W

    @property
    def right_side(self) -> tuple[float, float]:
        return self.k_prime * self.W, (self.k_prime + 1) * self.W

    def bounding_rect(self) -> Rect:
        lo = min(self.k, self.k_prime) * self.W
        hi = (max(self.k, self.k_prime) + 1) * self.W
        return Rect(self.left_x, self.right_x, lo, hi)


def round_to_lattice(p) -> Point:
    """Nearest point of Z^2; exact halves go to the smaller integer."""
    x, y = as_xy(p)
    return Point(float(_round_half_down(x)), float(_round_half_down(y)))


def _round_half_down(t: float) -> int:
    return math.ceil(t - 0.5)


def hypot_bounds(n: float, y: float) -> tuple[float, float]:
    """Lower and upper bounds on sqrt(n^2 + y^2) from the second order
    expansion of the square root."""
    if not n > 0:
        raise GeometryError("hypot_bounds needs n > 0")
    upper = n + y * y / (2 * n)
    lower = max(n, upper - y ** 4 / (8 * n ** 3))
    return lower, upper


def point_line_distance(w, u, v) -> float:
    """Distance from w to the line through u and v."""
    wx, wy = as_xy(w)
    ux, uy = as_xy(u)
    vx, vy = as_xy(v)
    dx, dy = vx - ux, vy - uy
    norm = math.hypot(dx, dy)
    if norm == 0:
        raise GeometryError("line through coincident points")
    return abs(dx * (wy - uy) - dy * (wx - ux)) / norm


def point_line_distances(ws: np.ndarray, u, v) -> np.ndarray:
    ux, uy = as_xy(u)
    vx, vy = as_xy(v)
    dx, dy = vx - ux, vy - uy
    norm = math.hypot(dx, dy)
    if norm == 0:
        raise GeometryError("line through coincident points")
    ws = np.asarray(ws, dtype=float)
    return np.abs(dx * (ws[:, 1] - uy) - dy * (ws[:, 0] - ux)) / norm
