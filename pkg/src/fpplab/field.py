"""Seeded random environments on a finite window.

Two kinds of field are supported: a rate-``ppp_rate`` marked Poisson point
process and a grid discretisation of Gaussian white noise. Points are generated
unit cell by unit cell (white noise: lattice node by lattice node) from
counter-based streams, so the restriction of a field to any region is a
function of the seeds of the cells meeting that region only. This is what makes
region resampling exact: everything outside the region is literally the same
data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np
from scipy import special, stats
from scipy.spatial import cKDTree

from . import rng
from .geometry import Rect, VStrip, as_xy

MAX_WINDOW_CELLS = 5_000_000


class FieldError(RuntimeError):
    pass


class EmptyFieldError(FieldError):
    pass


class ResourceError(FieldError):
    pass


@dataclass(frozen=True)
class MarkSpec:
    """Law of the point marks. ``exponential`` (scale), ``uniform`` (low, high)
    or ``constant`` (value)."""
    name: str = "exponential"
    scale: float = 1.0
    low: float = 0.0
    high: float = 1.0
    value: float = 1.0

    def __post_init__(self):
        if self.name not in ("exponential", "uniform", "constant"):
            raise ValueError(f"unknown mark distribution {self.name!r}")
        if self.name == "exponential" and not self.scale > 0:
            raise ValueError("exponential mark scale must be positive")
        if self.name == "uniform" and not self.low < self.high:
            raise ValueError("uniform marks need low < high")

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        if self.name == "exponential":
            return -self.scale * np.log(u)
        if self.name == "uniform":
            return self.low + (self.high - self.low) * u
        return np.full_like(u, self.value)


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel supported in the unit ball with K(0) = 1.

    ``bump4``: (1 - r^2)^4.  ``smooth``: exp(1 - 1/(1 - r^2)), infinitely
    differentiable.
    """
    name: str = "bump4"

    def __post_init__(self):
        if self.name not in ("bump4", "smooth"):
            raise ValueError(f"unknown kernel {self.name!r}")

    def __call__(self, r2: np.ndarray) -> np.ndarray:
        """Kernel as a function of the squared distance."""
        r2 = np.asarray(r2, dtype=float)
        inside = r2 < 1.0
        out = np.zeros_like(r2)
        s = 1.0 - r2[inside]
        if self.name == "bump4":
            out[inside] = s ** 4
        else:
            out[inside] = np.exp(1.0 - 1.0 / s)
        return out


@dataclass(frozen=True)
class FieldSpec:
    window: Rect
    kind: str = "poisson_marked"
    ppp_rate: float = 1.0
    marks: MarkSpec = field(default_factory=MarkSpec)
    grid_step: float = 0.25
    master_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("poisson_marked", "white_noise_grid"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if not self.ppp_rate > 0:
            raise ValueError("ppp_rate must be positive")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")

    def with_window(self, window: Rect) -> "FieldSpec":
        return replace(self, window=window)

    def with_seed(self, seed: int) -> "FieldSpec":
        return replace(self, master_seed=seed)


@dataclass(frozen=True)
class RegionSelector:
    """``rect`` / ``vstrip`` select the geometry itself; ``complement``
    selects everything outside it."""
    shape: str
    geometry: Rect | VStrip

    def __post_init__(self):
        if self.shape not in ("rect", "vstrip", "complement"):
            raise ValueError(f"unknown region shape {self.shape!r}")
        if self.shape == "rect" and not isinstance(self.geometry, Rect):
            raise ValueError("rect selector needs a Rect")
        if self.shape == "vstrip" and not isinstance(self.geometry, VStrip):
            raise ValueError("vstrip selector needs a VStrip")

    def contains(self, x, y) -> np.ndarray:
        inside = self.geometry.contains(x, y)
        return ~inside if self.shape == "complement" else inside


@dataclass(frozen=True, eq=False)
class FieldRealization:
    """An immutable sample of the environment.

    Poisson fields carry ``xy`` (N x 2), ``marks`` and ``tiebreak``; white
    noise fields carry ``noise`` indexed by global lattice nodes
    ``(noise_i0 + a, noise_j0 + b)`` at spacing ``spec.grid_step``.
    """
    spec: FieldSpec
    xy: np.ndarray
    marks: np.ndarray
    tiebreak: np.ndarray
    noise: np.ndarray | None = None
    noise_i0: int = 0
    noise_j0: int = 0

    @property
    def n_points(self) -> int:
        return len(self.xy)

    def cell_seed(self, ix: int, iy: int) -> int:
        """Seed of unit cell [ix, ix+1) x [iy, iy+1)."""
        return rng.derive_seed(self.spec.master_seed, ix, iy)

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.xy if len(self.xy) else np.zeros((0, 2)))

    @cached_property
    def noise_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates (M x 2) and weights of the white-noise lattice, with
        weights scaled so that sum K(x - y_j) w_j discretises the integral of
        K against white noise."""
        h = self.spec.grid_step
        a, b = self.noise.shape
        ii, jj = np.meshgrid(np.arange(a) + self.noise_i0, np.arange(b) + self.noise_j0,
                             indexing="ij")
        xy = np.column_stack([ii.ravel() * h, jj.ravel() * h])
        return xy, self.noise.ravel() * h

    def same_as(self, other: "FieldRealization") -> bool:
        if self.noise is not None or other.noise is not None:
            return (other.noise is not None and self.noise is not None
                    and self.noise.shape == other.noise.shape
                    and np.array_equal(self.noise, other.noise))
        return (np.array_equal(self.xy, other.xy) and np.array_equal(self.marks, other.marks)
                and np.array_equal(self.tiebreak, other.tiebreak))


def _window_cells(window: Rect) -> tuple[np.ndarray, np.ndarray]:
    ix = np.arange(math.floor(window.x0), math.ceil(window.x1), dtype=np.int64)
    iy = np.arange(math.floor(window.y0), math.ceil(window.y1), dtype=np.int64)
    if len(ix) * len(iy) > MAX_WINDOW_CELLS:
        raise ResourceError(f"window {window} needs {len(ix) * len(iy)} cells")
    cx, cy = np.meshgrid(ix, iy, indexing="ij")
    return cx.ravel(), cy.ravel()


@lru_cache(maxsize=32)
def _poisson_table(rate: float) -> np.ndarray:
    kmax = int(rate + 20 * math.sqrt(rate) + 30)
    return stats.poisson.cdf(np.arange(kmax + 1), rate)


def _poisson_points(key: int, window: Rect, spec: FieldSpec):
    """Points of the cell-wise process with seed ``key`` lying in ``window``,
    in canonical (cell, slot) order."""
    cx, cy = _window_cells(window)
    u = rng.uniforms(key, rng.COUNT, cx, cy)
    counts = np.searchsorted(_poisson_table(spec.ppp_rate), u, side="right")
    total = int(counts.sum())
    pcx = np.repeat(cx, counts)
    pcy = np.repeat(cy, counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    slot = np.arange(total, dtype=np.int64) - starts
    x = pcx + rng.uniforms(key, rng.COORD_X, pcx, pcy, slot)
    y = pcy + rng.uniforms(key, rng.COORD_Y, pcx, pcy, slot)
    marks = spec.marks.from_uniform(rng.uniforms(key, rng.MARK, pcx, pcy, slot))
    tiebreak = rng.uniforms(key, rng.TIEBREAK, pcx, pcy, slot)
    keep = window.contains(x, y)
    return np.column_stack([x, y])[keep], marks[keep], tiebreak[keep]


def _noise_lattice(window: Rect, h: float):
    i0 = math.ceil(window.x0 / h)
    i1 = math.floor(window.x1 / h)
    j0 = math.ceil(window.y0 / h)
    j1 = math.floor(window.y1 / h)
    if (i1 - i0 + 1) * (j1 - j0 + 1) > 4 * MAX_WINDOW_CELLS:
        raise ResourceError(f"white-noise lattice for {window} too large")
    return i0, i1, j0, j1


def _noise_values(key: int, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    return special.ndtri(rng.uniforms(key, rng.NOISE, ii, jj))


def sample_field(spec: FieldSpec) -> FieldRealization:
    """Generate the field over ``spec.window``; a pure function of ``spec``."""
    empty = np.zeros((0, 2)), np.zeros(0), np.zeros(0)
    if spec.kind == "white_noise_grid":
        i0, i1, j0, j1 = _noise_lattice(spec.window, spec.grid_step)
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
        noise = _noise_values(spec.master_seed, ii, jj)
        return FieldRealization(spec, *empty, noise=noise, noise_i0=i0, noise_j0=j0)
    return FieldRealization(spec, *_poisson_points(spec.master_seed, spec.window, spec))


def resample_region(f: FieldRealization, region: RegionSelector,
                    resample_seed: int) -> FieldRealization:
    """Redraw the field inside ``region`` from ``resample_seed``; everything
    outside is kept bit for bit."""
    spec = f.spec
    if f.noise is not None:
        h = spec.grid_step
        a, b = f.noise.shape
        ii, jj = np.meshgrid(np.arange(a) + f.noise_i0, np.arange(b) + f.noise_j0,
                             indexing="ij")
        inside = region.contains(ii * h, jj * h)
        noise = f.noise.copy()
        noise[inside] = _noise_values(resample_seed, ii[inside], jj[inside])
        return replace(f, noise=noise)
    keep = ~region.contains(f.xy[:, 0], f.xy[:, 1])
    fresh_xy, fresh_marks, fresh_tb = _poisson_points(resample_seed, spec.window, spec)
    take = region.contains(fresh_xy[:, 0], fresh_xy[:, 1])
    return FieldRealization(
        spec,
        np.concatenate([f.xy[keep], fresh_xy[take]]),
        np.concatenate([f.marks[keep], fresh_marks[take]]),
        np.concatenate([f.tiebreak[keep], fresh_tb[take]]),
    )


def nearest_point(f: FieldRealization, u, candidates: np.ndarray | None = None) -> int:
    """Index of the point closest to ``u``; exact distance ties go to the
    smaller tie-break mark. ``candidates`` restricts the search to a subset
    of point indices."""
    if candidates is not None:
        if len(candidates) == 0:
            raise EmptyFieldError("no candidate points")
        sub = f.xy[candidates]
        d2 = _sq_dist(sub, u)
        best = np.flatnonzero(d2 == d2.min())
        return int(candidates[best[np.argmin(f.tiebreak[candidates[best]])]])
    if f.n_points == 0:
        raise EmptyFieldError("field has no points")
    k = min(8, f.n_points)
    _, idx = f.tree.query(as_xy(u), k=k)
    idx = np.atleast_1d(idx)
    d2 = _sq_dist(f.xy[idx], u)
    dmin = d2.min()
    if k < f.n_points and d2.max() == dmin:
        # more than k exact ties: fall back to the full scan
        return nearest_point(f, u, np.arange(f.n_points))
    best = idx[d2 == dmin]
    return int(best[np.argmin(f.tiebreak[best])])


def _sq_dist(xy: np.ndarray, u) -> np.ndarray:
    ux, uy = as_xy(u)
    return (xy[:, 0] - ux) ** 2 + (xy[:, 1] - uy) ** 2


def smoothed_field_value(f: FieldRealization, x, kernel: KernelSpec = KernelSpec()) -> float:
    """Phi(x): sum of K(x - y) over the Poisson points, or the white-noise
    lattice discretisation of the stochastic integral of K."""
    if f.noise is not None:
        xy, w = f.noise_nodes
        return float(np.sum(kernel(_sq_dist(xy, x)) * w))
    if f.n_points == 0:
        return 0.0
    idx = f.tree.query_ball_point(as_xy(x), 1.0)
    if not idx:
        return 0.0
    return float(np.sum(kernel(_sq_dist(f.xy[idx], x))))


def smoothed_field_on_lattice(f: FieldRealization, i0: int, j0: int, shape: tuple[int, int],
                              step: float, kernel: KernelSpec = KernelSpec()) -> np.ndarray:
    """Phi on the lattice nodes ((i0 + a) * step, (j0 + b) * step).

    Each source scatters its kernel onto the lattice nodes within unit
    distance; the scatter is accumulated with one ``bincount``.
    """
    if f.noise is not None:
        src, w = f.noise_nodes
    else:
        src, w = f.xy, np.ones(f.n_points)
    na, nb = shape
    out = np.zeros(na * nb)
    if len(src) == 0:
        return out.reshape(shape)
    reach = int(math.ceil(1.0 / step))
    # lattice index of the node just below each source
    ia = np.floor(src[:, 0] / step).astype(np.int64) - i0
    jb = np.floor(src[:, 1] / step).astype(np.int64) - j0
    offsets = np.arange(-reach, reach + 2)
    idx_parts, val_parts = [], []
    for da in offsets:
        a = ia + da
        xa = (a + i0) * step
        okx = (a >= 0) & (a < na)
        for db in offsets:
            b = jb + db
            ok = okx & (b >= 0) & (b < nb)
            if not ok.any():
                continue
            yb = (b + j0) * step
            r2 = (xa - src[:, 0]) ** 2 + (yb - src[:, 1]) ** 2
            ok &= r2 < 1.0
            if not ok.any():
                continue
            idx_parts.append(a[ok] * nb + b[ok])
            val_parts.append(kernel(r2[ok]) * w[ok])
    if idx_parts:
        out = np.bincount(np.concatenate(idx_parts), weights=np.concatenate(val_parts),
                          minlength=na * nb)
    return out.reshape(shape)
