import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpplab import (FieldSpec, ModelSpec, Rect, RegionSelector, RiemannianSpec, build_model,
                    sample_field)
from fpplab.field import FieldRealization
from fpplab.models import (ModelError, SubcriticalWindow, WindowViolation, delaunay_edges,
                           voronoi_window_edges)

import oracles
from conftest import micro_field

WIN = (0.0, 4.0, 0.0, 4.0)


def _pair(rng):
    return tuple(rng.uniform(0, 4, 2)), tuple(rng.uniform(0, 4, 2))


def test_beta_must_exceed_one():
    with pytest.raises(ValueError, match="beta must exceed 1"):
        ModelSpec("howard_newman", beta=0.5)


@pytest.mark.parametrize("kind", ["voronoi", "voronoi_weighted"])
def test_voronoi_matches_cell_enumeration(rng, kind):
    for _ in range(40):
        f = micro_field(rng, int(rng.integers(1, 8)))
        m = build_model(ModelSpec(kind), f)
        u, v = _pair(rng)
        marks = f.marks if kind == "voronoi_weighted" else None
        assert m.passage_time(u, v) == oracles.voronoi_passage(f.xy, f.tiebreak, WIN, u, v,
                                                               marks)


@pytest.mark.parametrize("beta", [1.5, 2.0, 3.0])
def test_howard_newman_matches_permutations(rng, beta):
    for _ in range(30):
        f = micro_field(rng, int(rng.integers(1, 7)))
        m = build_model(ModelSpec("howard_newman", beta=beta), f)
        u, v = _pair(rng)
        assert math.isclose(m.passage_time(u, v), oracles.hn_passage(f.xy, f.tiebreak, u, v, beta),
                            rel_tol=1e-12, abs_tol=1e-12)


def test_rgg_matches_bfs(rng):
    checked = 0
    for _ in range(60):
        f = micro_field(rng, int(rng.integers(2, 8)), window=(0, 3, 0, 3))
        u, v = tuple(rng.uniform(0, 3, 2)), tuple(rng.uniform(0, 3, 2))
        want, frac = oracles.rgg_passage(f.xy, f.tiebreak, u, v, 1.5)
        if frac < 0.25:
            with pytest.raises(SubcriticalWindow):
                build_model(ModelSpec("rgg"), f)
            continue
        assert build_model(ModelSpec("rgg"), f).passage_time(u, v) == want
        checked += 1
    assert checked > 30


@pytest.mark.parametrize("conn", [8, 16])
def test_riemannian_matches_floyd_warshall(rng, conn):
    spec = ModelSpec("riemannian", riemannian=RiemannianSpec(connectivity=conn))
    for _ in range(5):
        f = micro_field(rng, int(rng.integers(0, 8)))
        u, v = _pair(rng)
        want = oracles.riemannian_passage(f.xy, WIN, 0.25, 0.5, 1.5, u, v, conn)
        assert math.isclose(build_model(spec, f).passage_time(u, v), want, rel_tol=1e-12)


@given(st.integers(0, 2 ** 32))
def test_window_edges_match_bisector_oracle(seed):
    r = np.random.default_rng(seed)
    k = int(r.integers(3, 9))
    xy = r.uniform(0, 4, (k, 2))
    got = {tuple(e) for e in voronoi_window_edges(xy, Rect(*WIN)).tolist()}
    adj = oracles.voronoi_adjacency(xy, WIN)
    want = {(i, j) for i in adj for j in adj[i] if i < j}
    assert got == want


def test_delaunay_collinear_fallback():
    xy = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.0]])
    assert delaunay_edges(xy).tolist() == [[0, 2], [1, 2]]


@pytest.mark.parametrize("kind", ["voronoi", "voronoi_weighted", "howard_newman", "rgg",
                                  "riemannian"])
def test_metric_basics_and_path_cost(kind):
    f = sample_field(FieldSpec(Rect(0, 12, 0, 12), master_seed=8))
    m = build_model(ModelSpec(kind), f)
    u, v, w = (2.2, 3.1), (9.7, 8.4), (6.3, 2.2)
    assert m.passage_time(u, u) == 0.0
    assert m.passage_time(u, v) == m.passage_time(v, u) or kind == "riemannian"
    assert math.isclose(m.passage_time(u, v), m.passage_time(v, u), rel_tol=1e-12)
    assert m.passage_time(u, v) <= m.passage_time(u, w) + m.passage_time(w, v) + 1e-9
    g = m.geodesic(u, v)
    assert math.isclose(m.path_cost(g.vertices), g.passage_time, rel_tol=1e-12)
    if kind in ("voronoi", "rgg"):
        assert g.passage_time == round(g.passage_time)
    d = m.sweep([u])
    assert math.isclose(m.arrival(d, v), g.passage_time, rel_tol=1e-12)


def test_path_cost_rejects_non_paths():
    f = sample_field(FieldSpec(Rect(0, 12, 0, 12), master_seed=8))
    m = build_model(ModelSpec("voronoi"), f)
    g = m.geodesic((1.0, 1.0), (11.0, 11.0))
    skip = np.vstack([g.vertices[:2], g.vertices[-2:]])
    assert m.path_cost(skip) == math.inf or len(g.vertices) <= 4


def test_sweep_is_min_over_sources():
    f = sample_field(FieldSpec(Rect(0, 12, 0, 12), master_seed=9))
    m = build_model(ModelSpec("howard_newman"), f)
    a, b, v = (2.0, 2.0), (10.0, 3.0), (6.0, 9.0)
    both = m.arrival(m.sweep([a, b]), v)
    assert both == min(m.passage_time(a, v), m.passage_time(b, v))


def test_window_violation():
    f = sample_field(FieldSpec(Rect(0, 10, 0, 10), master_seed=1))
    m = build_model(ModelSpec("howard_newman"), f, safety_margin=2.0)
    with pytest.raises(WindowViolation):
        m.passage_time((1.0, 5.0), (5.0, 5.0))


def test_rgg_subcritical():
    f = sample_field(FieldSpec(Rect(0, 20, 0, 20), master_seed=1))
    with pytest.raises(SubcriticalWindow):
        build_model(ModelSpec("rgg", rgg_threshold=0.3), f)


def test_point_model_needs_points():
    f = sample_field(FieldSpec(Rect(0, 3, 0, 3), kind="white_noise_grid"))
    with pytest.raises(ModelError):
        build_model(ModelSpec("voronoi"), f)


def _empty(window=(0, 10, 0, 10)):
    return FieldRealization(FieldSpec(Rect(*window)), np.zeros((0, 2)), np.zeros(0),
                            np.zeros(0))


@pytest.mark.parametrize("conn,tol", [(8, 0.09), (16, 0.03)])
def test_homogeneous_riemannian_metrication(rng, conn, tol):
    rs = RiemannianSpec(connectivity=conn)
    m = build_model(ModelSpec("riemannian", riemannian=rs), _empty())
    c = float(rs.psi(0.0))
    for _ in range(20):
        u, v = (tuple(rng.integers(4, 37, 2) * 0.25) for _ in range(2))
        if u != v:
            e = c * math.dist(u, v)
            assert abs(m.passage_time(u, v) - e) / e <= tol


def test_homogeneous_riemannian_off_lattice(rng):
    rs = RiemannianSpec()
    m = build_model(ModelSpec("riemannian", riemannian=rs), _empty())
    c = float(rs.psi(0.0))
    connector = 2 * rs.d2 * rs.grid_step / math.sqrt(2)
    for _ in range(20):
        u, v = tuple(rng.uniform(1, 9, 2)), tuple(rng.uniform(1, 9, 2))
        e = c * math.dist(u, v)
        assert e * (1 - 1e-12) <= m.passage_time(u, v) <= 1.09 * e + connector


def test_riemannian_speed_bounds(rng):
    rs = RiemannianSpec()
    f = sample_field(FieldSpec(Rect(0, 10, 0, 10), ppp_rate=2.0, master_seed=5))
    m = build_model(ModelSpec("riemannian", riemannian=rs), f)
    for _ in range(10):
        u, v = tuple(rng.uniform(1, 9, 2)), tuple(rng.uniform(1, 9, 2))
        g = m.geodesic(u, v)
        assert rs.d1 * math.dist(u, v) <= g.passage_time * (1 + 1e-12)
        assert g.passage_time <= rs.d2 * g.length() * (1 + 1e-12)


@pytest.mark.parametrize("kind", ["voronoi_weighted", "riemannian"])
def test_resampled_equals_rebuild(kind):
    f = sample_field(FieldSpec(Rect(0, 10, 0, 10), master_seed=2))
    m = build_model(ModelSpec(kind), f)
    region = RegionSelector("rect", Rect(3, 6, 3, 6))
    r = m.resampled(region, 77)
    fresh = build_model(ModelSpec(kind), r.field)
    u, v = (1.0, 5.0), (9.0, 5.0)
    assert math.isclose(r.passage_time(u, v), fresh.passage_time(u, v), rel_tol=1e-12)
    assert m.passage_time(u, v) == build_model(ModelSpec(kind), f).passage_time(u, v)
