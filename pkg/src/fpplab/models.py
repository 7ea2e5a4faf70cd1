"""The four passage-time models on a sampled field.

Every model is reduced to a directed graph on "nodes" (Poisson points, or
lattice nodes for the Riemannian model) plus rules attaching an arbitrary
query point to the graph: ``entry(u)`` lists (node, cost) pairs for leaving
``u`` and ``exit(v)`` lists (node, cost) pairs for arriving at ``v``. Then

    X_uv = min over a in entry(u), b in exit(v) of c_a + d(a, b) + c_b,

with X_uu = 0. Passage times reported on a :class:`Geodesic` are re-summed
with ``math.fsum`` over its per-edge costs so that they do not depend on the
direction of the search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import Delaunay, QhullError

from .field import (FieldRealization, KernelSpec, RegionSelector, nearest_point,
                    resample_region, smoothed_field_on_lattice, smoothed_field_value)
from .geometry import Rect, as_xy

MODEL_KINDS = ("voronoi", "voronoi_weighted", "howard_newman", "rgg", "riemannian")
RGG_CRITICAL_THRESHOLD = 1.1983  # continuum percolation radius at unit intensity


class ModelError(RuntimeError):
    pass


class WindowViolation(ModelError):
    pass


class CutoffTooSmall(ModelError):
    pass


class SubcriticalWindow(ModelError):
    pass


@dataclass(frozen=True)
class RiemannianSpec:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    d1: float = 0.5
    d2: float = 1.5
    grid_step: float = 0.25
    connectivity: int = 8

    def __post_init__(self):
        if not 0 < self.d1 < self.d2 < math.inf:
            raise ValueError("need 0 < d1 < d2 < inf")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        if self.connectivity not in (8, 16):
            raise ValueError("connectivity must be 8 or 16")

    def psi(self, t):
        """Smooth increasing map of the real line onto (d1, d2)."""
        return self.d1 + (self.d2 - self.d1) * 0.5 * (1.0 + np.tanh(0.5 * np.asarray(t)))


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    beta: float = 2.0
    rgg_threshold: float = 1.5
    riemannian: RiemannianSpec = field(default_factory=RiemannianSpec)
    r_cut: float = 4.0
    max_doublings: int = 3

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not self.rgg_threshold > 0:
            raise ValueError("rgg threshold L must be positive")
        if not self.r_cut > 0:
            raise ValueError("r_cut must be positive")

    @property
    def is_grid(self) -> bool:
        return self.kind == "riemannian"

    def trivial_speed_bounds(self) -> tuple[float, float]:
        """(lower, upper) multipliers of Euclidean length valid for every
        path; only the Riemannian model has nontrivial ones."""
        if self.is_grid:
            return self.riemannian.d1, self.riemannian.d2
        return 0.0, math.inf


@dataclass(frozen=True, eq=False)
class Geodesic:
    vertices: np.ndarray
    passage_time: float
    per_edge_costs: np.ndarray
    nodes: tuple[int, ...] = ()

    @property
    def start(self) -> tuple[float, float]:
        return tuple(self.vertices[0])

    @property
    def end(self) -> tuple[float, float]:
        return tuple(self.vertices[-1])

    def length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.vertices, axis=0).T)))


def _trivial_geodesic(u) -> Geodesic:
    p = np.array([as_xy(u), as_xy(u)], dtype=float)
    return Geodesic(p, 0.0, np.zeros(1))


def delaunay_edges(xy: np.ndarray) -> np.ndarray:
    """Unique undirected Delaunay edges (i < j). Collinear or tiny point sets
    get the chain along the line."""
    n = len(xy)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    try:
        if n < 3:
            raise QhullError("too few points")
        tri = Delaunay(xy)
    except QhullError:
        centred = xy - xy.mean(axis=0)
        direction = np.linalg.svd(centred, full_matrices=False)[2][0]
        order = np.argsort(centred @ direction, kind="stable")
        e = np.column_stack([order[:-1], order[1:]])
        return np.unique(np.sort(e, axis=1), axis=0)
    indptr, indices = tri.vertex_neighbor_vertices
    src = np.repeat(np.arange(n), np.diff(indptr))
    keep = src < indices
    e = np.column_stack([src[keep], indices[keep]])
    return e[np.lexsort((e[:, 1], e[:, 0]))]


def voronoi_window_edges(xy: np.ndarray, window: Rect) -> np.ndarray:
    """Pairs (i < j) whose Voronoi cells share boundary inside ``window``.

    Each Delaunay edge is dual to a Voronoi segment between two circumcentres
    (or a ray, for hull edges); the edge is kept iff that dual piece meets
    the window.
    """
    n = len(xy)
    if n < 3:
        return delaunay_edges(xy)
    try:
        tri = Delaunay(xy)
    except QhullError:
        return delaunay_edges(xy)
    simp, nb = tri.simplices, tri.neighbors
    p = xy[simp]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    d = 2 * ((a[:, 0] - c[:, 0]) * (b[:, 1] - c[:, 1]) - (b[:, 0] - c[:, 0]) * (a[:, 1] - c[:, 1]))
    a2 = (a[:, 0] - c[:, 0]) ** 2 + (a[:, 1] - c[:, 1]) ** 2
    b2 = (b[:, 0] - c[:, 0]) ** 2 + (b[:, 1] - c[:, 1]) ** 2
    cx = c[:, 0] + (a2 * (b[:, 1] - c[:, 1]) - b2 * (a[:, 1] - c[:, 1])) / d
    cy = c[:, 1] + (b2 * (a[:, 0] - c[:, 0]) - a2 * (b[:, 0] - c[:, 0])) / d
    centre = np.column_stack([cx, cy])
    pairs, starts, dirs, rays = [], [], [], []
    for k in range(3):
        i, j = simp[:, (k + 1) % 3], simp[:, (k + 2) % 3]
        other = nb[:, k]
        ids = np.arange(len(simp))
        inner = (other >= 0) & (ids < other)
        hull = other < 0
        for mask, is_ray in ((inner, False), (hull, True)):
            pairs.append(np.column_stack([i[mask], j[mask]]))
            starts.append(centre[mask])
            if is_ray:
                e = xy[j[mask]] - xy[i[mask]]
                normal = np.column_stack([e[:, 1], -e[:, 0]])
                away = xy[i[mask]] - xy[simp[mask, k]]
                normal *= np.sign(np.sum(normal * away, axis=1))[:, None]
                dirs.append(normal)
            else:
                dirs.append(centre[other[mask]] - centre[mask])
            rays.append(np.full(mask.sum(), is_ray))
    pairs, starts = np.concatenate(pairs), np.concatenate(starts)
    dirs, rays = np.concatenate(dirs), np.concatenate(rays)
    keep = _clip_hits(starts, dirs, rays, window)
    e = np.sort(pairs[keep], axis=1)
    return e[np.lexsort((e[:, 1], e[:, 0]))]


def _clip_hits(p0: np.ndarray, dp: np.ndarray, ray: np.ndarray, r: Rect) -> np.ndarray:
    """Liang-Barsky test: does p0 + t dp, t in [0, 1] (or [0, inf) for rays),
    meet the closed rectangle?"""
    lo = np.zeros(len(p0))
    hi = np.where(ray, np.inf, 1.0)
    ok = np.ones(len(p0), dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis, (m0, m1) in enumerate(((r.x0, r.x1), (r.y0, r.y1))):
            q, v = p0[:, axis], dp[:, axis]
            flat = v == 0
            ok &= ~flat | ((q >= m0) & (q <= m1))
            t0, t1 = (m0 - q) / v, (m1 - q) / v
            tmin, tmax = np.minimum(t0, t1), np.maximum(t0, t1)
            lo = np.where(flat, lo, np.maximum(lo, tmin))
            hi = np.where(flat, hi, np.minimum(hi, tmax))
    return ok & (lo <= hi)


def _csr(n: int, src: np.ndarray, dst: np.ndarray, w: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix((w, (src, dst)), shape=(n, n))


class ModelInstance:
    """A model bound to one field realisation; immutable after construction.

    ``safety_margin`` is the minimum distance a query point must keep from the
    window boundary.
    """

    def __init__(self, spec: ModelSpec, field: FieldRealization, safety_margin: float = 0.0,
                 _psi_half: np.ndarray | None = None):
        self.spec = spec
        self.field = field
        self.window: Rect = field.spec.window
        self.safety_margin = safety_margin
        self._graphs: dict[float, sp.csr_matrix] = {}
        kind = spec.kind
        if kind == "riemannian":
            self._build_grid(_psi_half)
        else:
            if field.noise is not None:
                raise ModelError(f"{kind} needs a Poisson field")
            self.coords = field.xy
            if kind in ("voronoi", "voronoi_weighted"):
                self._build_voronoi()
            elif kind == "howard_newman":
                self._build_howard_newman()
            else:
                self._build_rgg()

    # -- construction -----------------------------------------------------

    def _build_voronoi(self):
        e = voronoi_window_edges(self.coords, self.window)
        self.edges = e
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        if self._hops:
            w = self._hop_weights(src, dst)
        else:
            w = self.field.marks[dst]
        self.graph = _csr(len(self.coords), src, dst, w)

    def _hop_weights(self, src, dst) -> np.ndarray:
        # Hop-count models: each edge costs 1 + eps * length, so among paths
        # with the fewest hops the Euclidean-shortest one is chosen. eps keeps
        # the total perturbation of any simple path below 1/4; distances are
        # rounded back to integers.
        w = self.window
        self._hop_eps = 0.25 / (max(len(self.coords), 1) * (math.hypot(w.x1 - w.x0, w.y1 - w.y0)
                                                             + 1.0))
        d = self.coords[dst] - self.coords[src]
        return 1.0 + self._hop_eps * np.hypot(d[:, 0], d[:, 1])

    def _hn_edge_costs(self, e: np.ndarray) -> np.ndarray:
        d = self.coords[e[:, 1]] - self.coords[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1]) ** self.spec.beta

    def _build_howard_newman(self):
        # For beta >= 2 every edge outside the Gabriel graph (a subgraph of
        # the Delaunay graph) is beaten by a two-hop detour, so Delaunay edges
        # carry all geodesics exactly.
        self.edges = delaunay_edges(self.coords)
        self.graph = self._hn_graph(None)

    def _hn_graph(self, r_cut: float | None) -> sp.csr_matrix:
        if r_cut in self._graphs:
            return self._graphs[r_cut]
        e = self.edges
        if r_cut is not None and len(self.coords) > 1:
            pairs = self.field.tree.query_pairs(r_cut, output_type="ndarray")
            if len(pairs):
                e = np.unique(np.concatenate([e, np.sort(pairs, axis=1)]), axis=0)
        w = self._hn_edge_costs(e)
        g = _csr(len(self.coords), np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]], np.r_[w, w])
        self._graphs[r_cut] = g
        return g

    def _build_rgg(self):
        L = self.spec.rgg_threshold
        n = len(self.coords)
        pairs = (self.field.tree.query_pairs(L, output_type="ndarray")
                 if n > 1 else np.zeros((0, 2), dtype=np.int64))
        self.edges = pairs
        src, dst = np.r_[pairs[:, 0], pairs[:, 1]], np.r_[pairs[:, 1], pairs[:, 0]]
        self.graph = _csr(n, src, dst, self._hop_weights(src, dst))
        if n == 0:
            raise SubcriticalWindow("empty field")
        ncomp, labels = connected_components(self.graph, directed=False)
        sizes = np.bincount(labels)
        # largest component; ties go to the one holding the lowest point index
        first = np.full(ncomp, n)
        np.minimum.at(first, labels, np.arange(n))
        giant = min(range(ncomp), key=lambda c: (-sizes[c], first[c]))
        self.giant = np.flatnonzero(labels == giant)
        self.giant_fraction = len(self.giant) / n
        if self.giant_fraction < 0.25:
            raise SubcriticalWindow(
                f"largest component holds {self.giant_fraction:.1%} of points (L={L})")

    def _build_grid(self, psi_half: np.ndarray | None):
        rs = self.spec.riemannian
        h = rs.grid_step
        w = self.window
        self.i0, i1 = math.ceil(w.x0 / h - 1e-9), math.floor(w.x1 / h + 1e-9)
        self.j0, j1 = math.ceil(w.y0 / h - 1e-9), math.floor(w.y1 / h + 1e-9)
        self.ni, self.nj = i1 - self.i0 + 1, j1 - self.j0 + 1
        if self.ni < 2 or self.nj < 2:
            raise ModelError("window too small for the Riemannian grid")
        ii, jj = np.meshgrid(np.arange(self.ni), np.arange(self.nj), indexing="ij")
        self.coords = np.column_stack([(ii.ravel() + self.i0) * h, (jj.ravel() + self.j0) * h])
        if psi_half is None:
            phi = smoothed_field_on_lattice(self.field, 2 * self.i0, 2 * self.j0,
                                            (2 * self.ni - 1, 2 * self.nj - 1), h / 2, rs.kernel)
            self.phi_half = phi
            psi_half = rs.psi(phi)
        self.psi_half = psi_half
        src, dst, wt = [], [], []
        for di, dj in self.stencil:
            a0, a1 = max(0, -di), self.ni - max(0, di)
            b0, b1 = max(0, -dj), self.nj - max(0, dj)
            if a0 >= a1 or b0 >= b1:
                continue
            a, b = np.meshgrid(np.arange(a0, a1), np.arange(b0, b1), indexing="ij")
            a, b = a.ravel(), b.ravel()
            mid = psi_half[2 * a + di, 2 * b + dj]
            s = a * self.nj + b
            t = (a + di) * self.nj + (b + dj)
            c = h * math.hypot(di, dj) * mid
            src += [s, t]
            dst += [t, s]
            wt += [c, c]
        self.graph = _csr(self.ni * self.nj, np.concatenate(src), np.concatenate(dst),
                          np.concatenate(wt))

    @property
    def stencil(self) -> list[tuple[int, int]]:
        """Half stencil; each offset also stands for its negative."""
        base = [(1, 0), (0, 1), (1, 1), (1, -1)]
        if self.spec.riemannian.connectivity == 16:
            base += [(2, 1), (1, 2), (2, -1), (1, -2)]
        return base

    # -- attaching query points -------------------------------------------

    def check_query(self, u):
        d = self.window.distance_to_boundary(u)
        if d < self.safety_margin:
            raise WindowViolation(
                f"query {as_xy(u)} is {d:.3g} from the window boundary "
                f"(margin {self.safety_margin:.3g})")

    def entry(self, u) -> tuple[np.ndarray, np.ndarray]:
        """(nodes, costs) for leaving the query point ``u``."""
        kind = self.spec.kind
        if kind == "riemannian":
            return self._grid_corners(u)
        if kind == "rgg":
            return np.array([nearest_point(self.field, u, self.giant)]), np.zeros(1)
        a = nearest_point(self.field, u)
        if kind == "voronoi":
            cost = 1.0
        elif kind == "voronoi_weighted":
            cost = float(self.field.marks[a])
        else:
            cost = 0.0
        return np.array([a]), np.array([cost])

    def exit(self, v) -> tuple[np.ndarray, np.ndarray]:
        """(nodes, costs) for arriving at ``v``."""
        if self.spec.kind == "riemannian":
            return self._grid_corners(v)
        nodes, _ = self.entry(v)
        return nodes, np.zeros(1)

    def _grid_index(self, t: float) -> int:
        r = round(t)
        return int(r) if abs(t - r) < 1e-9 else math.floor(t)

    def _grid_corners(self, u):
        h = self.spec.riemannian.grid_step
        x, y = as_xy(u)
        ci, cj = self._grid_index(x / h), self._grid_index(y / h)
        nodes, costs = [], []
        for di in (0, 1):
            for dj in (0, 1):
                a, b = ci + di - self.i0, cj + dj - self.j0
                if 0 <= a < self.ni and 0 <= b < self.nj:
                    nodes.append(a * self.nj + b)
                    costs.append(self.spec.riemannian.d2 * math.hypot(x - (ci + di) * h,
                                                                      y - (cj + dj) * h))
        if not nodes:
            raise WindowViolation(f"query {as_xy(u)} outside the lattice")
        return np.array(nodes), np.array(costs)

    # -- shortest paths ----------------------------------------------------

    def _sssp(self, graph, sources, return_predecessors=True):
        return dijkstra(graph, directed=True, indices=sources,
                        return_predecessors=return_predecessors)

    def _solve(self, graph, u, v):
        ea, ca = self.entry(u)
        eb, cb = self.exit(v)
        best = None
        for a, c0 in sorted(zip(ea.tolist(), ca.tolist())):
            dist, pred = self._sssp(graph, a)
            tot = c0 + dist[eb] + cb
            k = int(np.argmin(tot))
            if not np.isfinite(tot[k]):
                continue
            if best is None or tot[k] < best[0]:
                best = (float(tot[k]), a, c0, int(eb[k]), float(cb[k]), pred)
        if best is None:
            raise ModelError(f"no admissible path from {as_xy(u)} to {as_xy(v)}")
        return best

    @property
    def _hops(self) -> bool:
        return self.spec.kind in ("voronoi", "rgg")

    def _edge_weights(self, nodes: np.ndarray) -> np.ndarray:
        """Exact costs of the consecutive edges of a node path."""
        s, t = nodes[:-1], nodes[1:]
        kind = self.spec.kind
        if self._hops:
            return np.ones(len(s))
        if kind == "voronoi_weighted":
            return self.field.marks[t].astype(float)
        if kind == "howard_newman":
            d = self.coords[t] - self.coords[s]
            return np.hypot(d[:, 0], d[:, 1]) ** self.spec.beta
        h = self.spec.riemannian.grid_step
        a, b = np.divmod(s, self.nj)
        di, dj = np.divmod(t, self.nj)[0] - a, np.divmod(t, self.nj)[1] - b
        mid = self.psi_half[2 * a + di, 2 * b + dj]
        return np.array([h * math.hypot(x, y) for x, y in zip(di.tolist(), dj.tolist())]) * mid

    def _path_nodes(self, pred: np.ndarray, a: int, b: int) -> list[int]:
        path = [b]
        while path[-1] != a:
            p = int(pred[path[-1]])
            if p < 0:
                raise ModelError("broken predecessor chain")
            path.append(p)
        return path[::-1]

    def _geodesic(self, graph, u, v) -> Geodesic:
        _, a, c0, b, c1, pred = self._solve(graph, u, v)
        nodes = self._path_nodes(pred, a, b)
        costs = np.concatenate([[c0], self._edge_weights(np.array(nodes)), [c1]])
        verts = np.vstack([as_xy(u), self.coords[nodes], as_xy(v)])
        return Geodesic(verts, math.fsum(costs), costs, tuple(nodes))

    def geodesic(self, u, v) -> Geodesic:
        """Optimal path from ``u`` to ``v``."""
        self.check_query(u)
        self.check_query(v)
        if as_xy(u) == as_xy(v):
            return _trivial_geodesic(u)
        if self.spec.kind == "howard_newman" and self.spec.beta < 2:
            return self._hn_certified(u, v)
        return self._geodesic(self.graph, u, v)

    def passage_time(self, u, v) -> float:
        return self.geodesic(u, v).passage_time

    def _hn_certified(self, u, v) -> Geodesic:
        # A found value D <= r^beta cannot be beaten by any path using a hop
        # longer than r; otherwise fall back to the doubling comparison.
        r = self.spec.r_cut
        beta = self.spec.beta
        g = self._geodesic(self._hn_graph(r), u, v)
        for _ in range(self.spec.max_doublings):
            if g.passage_time <= r ** beta:
                return g
            g2 = self._geodesic(self._hn_graph(2 * r), u, v)
            if g2.passage_time == g.passage_time:
                return g2
            g, r = g2, 2 * r
        if g.passage_time <= r ** beta:
            return g
        raise CutoffTooSmall(f"Howard-Newman cutoff unresolved after doubling to r={r}")

    # -- multi-source sweeps -------------------------------------------------

    def sweep(self, sources) -> np.ndarray:
        """Distances from the set of query points ``sources`` to every node,
        min over sources, entry costs included (one search via a virtual
        source)."""
        graph = self.graph
        if self.spec.kind == "howard_newman" and self.spec.beta < 2:
            graph = self._hn_graph(self.spec.r_cut)
        best: dict[int, float] = {}
        for u in sources:
            self.check_query(u)
            for a, c in zip(*self.entry(u)):
                a = int(a)
                best[a] = min(best.get(a, math.inf), float(c))
        n = graph.shape[0]
        nodes = np.array(sorted(best))
        costs = np.array([best[a] for a in nodes])
        coo = graph.tocoo()
        aug = sp.csr_matrix(
            (np.r_[coo.data, costs], (np.r_[coo.row, np.full(len(nodes), n)],
                                      np.r_[coo.col, nodes])),
            shape=(n + 1, n + 1))
        dist = dijkstra(aug, directed=True, indices=n)[:n]
        return np.rint(dist) if self._hops else dist

    def arrival(self, dist: np.ndarray, v) -> float:
        """Cost of reaching query point ``v`` given node distances."""
        self.check_query(v)
        nodes, costs = self.exit(v)
        return float(np.min(dist[nodes] + costs))

    # -- recomputation from the field --------------------------------------

    def path_cost(self, vertices) -> float:
        """Cost of the polyline ``vertices`` recomputed from the field, or
        ``inf`` if it is not an admissible path for this instance."""
        verts = np.asarray(vertices, dtype=float)
        u, v = tuple(verts[0]), tuple(verts[-1])
        if len(verts) == 2 and u == v:
            return 0.0
        inner = verts[1:-1]
        if len(inner) == 0:
            return math.inf
        if self.spec.kind == "riemannian":
            return self._grid_path_cost(u, inner, v)
        lookup = {tuple(p): i for i, p in enumerate(self.coords.tolist())}
        try:
            nodes = [lookup[tuple(p)] for p in inner.tolist()]
        except KeyError:
            return math.inf
        ea, ca = self.entry(u)
        eb, _ = self.exit(v)
        if nodes[0] != ea[0] or nodes[-1] != eb[0]:
            return math.inf
        kind = self.spec.kind
        costs = [float(ca[0])]
        adjacent = None
        if kind != "howard_newman":
            adjacent = set(map(tuple, self.edges.tolist()))
        for s, t in zip(nodes[:-1], nodes[1:]):
            if adjacent is not None and s != t and (min(s, t), max(s, t)) not in adjacent:
                return math.inf
            if kind == "voronoi":
                costs.append(1.0)
            elif kind == "voronoi_weighted":
                costs.append(float(self.field.marks[t]))
            elif kind == "howard_newman":
                costs.append(math.hypot(*(self.coords[t] - self.coords[s])) ** self.spec.beta)
            else:
                costs.append(1.0)
        return math.fsum(costs)

    def _grid_path_cost(self, u, inner, v) -> float:
        rs = self.spec.riemannian
        h = rs.grid_step
        idx = np.rint(inner / h).astype(np.int64)
        if not np.allclose(idx * h, inner, rtol=0, atol=1e-9):
            return math.inf
        allowed = set(self.stencil) | {(-a, -b) for a, b in self.stencil}
        costs = []
        ca_nodes, ca = self._grid_corners(u)
        cb_nodes, cb = self._grid_corners(v)
        first = (idx[0, 0] - self.i0) * self.nj + (idx[0, 1] - self.j0)
        last = (idx[-1, 0] - self.i0) * self.nj + (idx[-1, 1] - self.j0)
        if first not in ca_nodes or last not in cb_nodes:
            return math.inf
        costs.append(float(ca[list(ca_nodes).index(first)]))
        for p, q in zip(idx[:-1], idx[1:]):
            step = tuple((q - p).tolist())
            if step not in allowed:
                return math.inf
            mid = (p + q) * h / 2
            psi = float(rs.psi(smoothed_field_value(self.field, mid, rs.kernel)))
            costs.append(h * math.hypot(*step) * psi)
        costs.append(float(cb[list(cb_nodes).index(last)]))
        return math.fsum(costs)

    # -- resampling --------------------------------------------------------

    def resampled(self, region: RegionSelector, seed: int) -> "ModelInstance":
        """The same model on the field with ``region`` redrawn from ``seed``.
        The parent is left untouched."""
        new_field = resample_region(self.field, region, seed)
        if self.spec.kind != "riemannian":
            return ModelInstance(self.spec, new_field, self.safety_margin)
        # patch Phi by the contribution of changed sources only
        rs = self.spec.riemannian
        h = rs.grid_step
        shape = self.phi_half.shape
        delta = (_phi_of_changes(new_field, self.field, 2 * self.i0, 2 * self.j0, shape, h / 2,
                                 rs.kernel))
        phi = self.phi_half + delta
        inst = ModelInstance(self.spec, new_field, self.safety_margin, _psi_half=rs.psi(phi))
        inst.phi_half = phi
        return inst

    def with_margin(self, margin: float) -> "ModelInstance":
        out = object.__new__(ModelInstance)
        out.__dict__.update(self.__dict__)
        out.safety_margin = margin
        return out


def _phi_of_changes(new: FieldRealization, old: FieldRealization, i0, j0, shape, step, kernel):
    if new.noise is not None:
        diff = replace(new, noise=new.noise - old.noise)
        diff.__dict__.pop("noise_nodes", None)
        return smoothed_field_on_lattice(diff, i0, j0, shape, step, kernel)
    old_keys = {tuple(p) for p in old.xy.tolist()}
    new_keys = {tuple(p) for p in new.xy.tolist()}
    added = np.array([p for p in new.xy.tolist() if tuple(p) not in old_keys]).reshape(-1, 2)
    removed = np.array([p for p in old.xy.tolist() if tuple(p) not in new_keys]).reshape(-1, 2)
    plus = FieldRealization(new.spec, added, np.zeros(len(added)), np.zeros(len(added)))
    minus = FieldRealization(new.spec, removed, np.zeros(len(removed)), np.zeros(len(removed)))
    return (smoothed_field_on_lattice(plus, i0, j0, shape, step, kernel)
            - smoothed_field_on_lattice(minus, i0, j0, shape, step, kernel))


def build_model(spec: ModelSpec, field: FieldRealization, safety_margin: float = 0.0
                ) -> ModelInstance:
    return ModelInstance(spec, field, safety_margin)


def passage_time_resampled(m: ModelInstance, u, v, region: RegionSelector, seed: int
                           ) -> Geodesic:
    """Geodesic from u to v in the environment with ``region`` resampled."""
    return m.resampled(region, seed).geodesic(u, v)
