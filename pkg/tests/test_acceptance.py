"""Acceptance criteria AC1 to AC12. Each test records one verdict line in
``LINES``; the terminal summary prints them in order."""
import io
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats as sstats

from fpplab import (FieldSpec, ModelSpec, Rect, RegionSelector, RiemannianSpec, VStrip,
                    build_model, sample_field)
from fpplab.config import config_from_dict
from fpplab.experiments import (ExperimentPlan, Task, analyze_assumptions,
                                analyze_concentration, analyze_kpz, analyze_lowertail,
                                analyze_nonrandom, compute_records, run_var_decomp,
                                toy_variances)
from fpplab.field import FieldRealization, resample_region
from fpplab.runner import EXIT_INTERRUPTED, EXIT_OK, LOG, execute
from fpplab.stats import (SampleSet, ScalingRow, ScalingTable, build_q_and_w,
                          fit_tail_exponent, record_points)

import oracles
from conftest import micro_field

LINES: dict[str, str] = {}
POINT_MODELS = ("voronoi", "voronoi_weighted", "howard_newman", "rgg")
ALL_MODELS = (*POINT_MODELS, "riemannian")


def verdict(key, ok, detail, t0):
    LINES[key] = f"{key} {'PASS' if ok else 'FAIL'} {detail} ({time.perf_counter() - t0:.1f} s)"
    assert ok, LINES[key]


# -- AC1 ----------------------------------------------------------------------

def _oracle_value(kind, f, u, v, win):
    if kind == "voronoi":
        return oracles.voronoi_passage(f.xy, f.tiebreak, win, u, v)
    if kind == "voronoi_weighted":
        return oracles.voronoi_passage(f.xy, f.tiebreak, win, u, v, f.marks)
    if kind == "howard_newman":
        return oracles.hn_passage(f.xy, f.tiebreak, u, v, 2.0)
    return oracles.rgg_passage(f.xy, f.tiebreak, u, v, 1.5)[0]


def test_ac1_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, counts = 0.0, {}
    for kind in ALL_MODELS:
        done = 0
        while done < 200:
            win = (0.0, 3.0, 0.0, 3.0) if kind == "rgg" else (0.0, 4.0, 0.0, 4.0)
            f = micro_field(rng, int(rng.integers(2 if kind == "rgg" else 1, 8)), window=win)
            u = tuple(rng.uniform(win[0], win[1], 2))
            v = tuple(rng.uniform(win[0], win[1], 2))
            if kind == "rgg" and oracles.rgg_passage(f.xy, f.tiebreak, u, v, 1.5)[1] < 0.25:
                continue
            if kind == "riemannian":
                want = oracles.riemannian_passage(f.xy, win, 0.25, 0.5, 1.5, u, v, 8)
            else:
                want = _oracle_value(kind, f, u, v, win)
            got = build_model(ModelSpec(kind), f).passage_time(u, v)
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
            done += 1
        counts[kind] = done
    verdict("AC1", worst <= 1e-12,
            f"max relative error {worst:.2e} over {sum(counts.values())} micro-instances "
            f"(200 per model, Riemannian lattice 17x17)", t0)


# -- AC2 ----------------------------------------------------------------------

def test_ac2_metric_properties():
    t0 = time.perf_counter()
    details, ok = [], True
    for kind in ALL_MODELS:
        plan = ExperimentPlan("assumptions", ModelSpec(kind), audit_n=32.0,
                              audit_instances=100, triples_per_instance=10,
                              pad_const=4.0 if kind == "riemannian" else 10.0)
        recs = compute_records(plan, [Task("metric", 32.0, 0.0, i) for i in range(100)])
        gate = analyze_assumptions(plan, recs).gate("AC2")
        ok &= gate.passed
        details.append(f"{kind}: {gate.detail}")
    verdict("AC2", ok, "; ".join(details), t0)


# -- AC3 ----------------------------------------------------------------------

REGIONS = {"rect": RegionSelector("rect", Rect(3, 9, 2, 8)),
           "vstrip": RegionSelector("vstrip", VStrip(4, 7)),
           "complement": RegionSelector("complement", Rect(2, 10, 2, 10))}


def test_ac3_resampling_exactness():
    t0 = time.perf_counter()
    bad = []
    for name, region in REGIONS.items():
        redrawn = 0
        for i in range(100):
            f = sample_field(FieldSpec(Rect(0, 12, 0, 10), master_seed=i))
            g = resample_region(f, region, 10_000 + i)
            out_f = ~region.contains(f.xy[:, 0], f.xy[:, 1])
            out_g = ~region.contains(g.xy[:, 0], g.xy[:, 1])
            same = (f.xy[out_f].tobytes() == g.xy[out_g].tobytes()
                    and f.marks[out_f].tobytes() == g.marks[out_g].tobytes()
                    and f.tiebreak[out_f].tobytes() == g.tiebreak[out_g].tobytes())
            if not same:
                bad.append((name, i))
            redrawn += not np.array_equal(f.xy[~out_f], g.xy[~out_g])
        if redrawn < 100:
            bad.append((name, "inside not redrawn"))
    wn = sample_field(FieldSpec(Rect(0, 6, 0, 6), kind="white_noise_grid", master_seed=4))
    h = wn.spec.grid_step
    a, b = wn.noise.shape
    ii, jj = np.meshgrid(np.arange(a) + wn.noise_i0, np.arange(b) + wn.noise_j0, indexing="ij")
    region = REGIONS["rect"]
    inside = region.contains(ii * h, jj * h)
    g = resample_region(wn, region, 5)
    if not (np.array_equal(wn.noise[~inside], g.noise[~inside])
            and not np.any(wn.noise[inside] == g.noise[inside])):
        bad.append(("white_noise", 0))
    loc = []
    for kind in ("voronoi", "howard_newman"):
        plan = ExperimentPlan("assumptions", ModelSpec(kind), audit_n=64.0, audit_instances=100)
        recs = compute_records(plan, [Task("locality", 64.0, 0.0, i) for i in range(100)])
        gate = analyze_assumptions(plan, recs).gate("AC3")
        loc.append((kind, gate))
    ok = not bad and all(g.passed for _, g in loc)
    verdict("AC3", ok, f"outside preserved on 3 x 100 instances ({len(bad)} failures); "
            + "; ".join(f"locality {k}: {g.detail}" for k, g in loc), t0)


# -- AC4 ----------------------------------------------------------------------

def test_ac4_homogeneous_metrication():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    empty = FieldRealization(FieldSpec(Rect(0, 10, 0, 10)), np.zeros((0, 2)), np.zeros(0),
                             np.zeros(0))
    worst = {}
    for conn in (8, 16):
        rs = RiemannianSpec(connectivity=conn)
        m = build_model(ModelSpec("riemannian", riemannian=rs), empty)
        c = float(rs.psi(0.0))
        errs = []
        while len(errs) < 100:
            u, v = (tuple(rng.integers(4, 37, 2) * rs.grid_step) for _ in range(2))
            if u != v:
                e = c * math.dist(u, v)
                errs.append(abs(m.passage_time(u, v) - e) / e)
        worst[conn] = max(errs)
    ok = worst[8] <= 0.09 and worst[16] <= 0.03
    verdict("AC4", ok, f"max relative error 8-conn {worst[8]:.4f} (<= 0.09), 16-conn "
            f"{worst[16]:.4f} (<= 0.03), 100 lattice-node pairs each", t0)


# -- AC5 ----------------------------------------------------------------------

def test_ac5_doob_decomposition():
    t0 = time.perf_counter()
    toy = ExperimentPlan("var_decomp", ModelSpec("voronoi_weighted"), vd_window=(8.0, 4.0),
                         vd_blocks=(2, 2), vd_outer=400, vd_inner=32)
    parts = []
    ok = True
    for fn in ("single_block", "block_sum"):
        rep = run_var_decomp(toy, functional=fn).data["report"]
        var, _ = toy_variances(replace(toy, vd_functional=fn))
        s, se = rep.increment_sum
        good = abs(s - var) <= 3 * se
        ok &= good
        parts.append(f"{fn}: sum {s:.4f} vs analytic {var:.4f} (SE {se:.4f})")
    plan = ExperimentPlan("var_decomp", ModelSpec("voronoi_weighted"))
    res = run_var_decomp(plan)
    gate = res.gate("AC5")
    ok &= gate.passed
    parts.append(f"weighted Voronoi 32x8, 4x4 blocks, 256x64: {gate.detail}")
    verdict("AC5", ok, "; ".join(parts), t0)


# -- AC6, AC7, AC8, AC10: one Howard-Newman run ---------------------------------

HN_PLAN = ExperimentPlan("nonrandom", ModelSpec("howard_newman", beta=2.0),
                         n_grid=(64.0, 128.0, 256.0), samples_per_n=2000,
                         mu_scales=(1024.0,), mu_samples=200, lower_levels=(0.0, 0.5, 1.0, 2.0))


@pytest.fixture(scope="session")
def hn_run():
    t0 = time.perf_counter()
    recs = compute_records(HN_PLAN)
    return recs, time.perf_counter() - t0


def _grid_only(recs):
    return [r for r in recs if r["n"] in HN_PLAN.n_grid]


def test_ac6_concentration(hn_run):
    t0 = time.perf_counter()
    recs, secs = hn_run
    res = analyze_concentration(replace(HN_PLAN, experiment="concentration"), _grid_only(recs))
    a, b = res.gate("AC6a"), res.gate("AC6b")
    verdict("AC6", a.passed and b.passed, f"{a.detail}; {b.detail}; shared run {secs:.0f} s", t0)


def test_ac7_kpz(hn_run):
    t0 = time.perf_counter()
    recs, _ = hn_run
    res = analyze_kpz(replace(HN_PLAN, experiment="kpz"), _grid_only(recs))
    a, b = res.gate("AC7a"), res.gate("AC7b")
    verdict("AC7", a.passed and b.passed, f"{a.detail}; {b.detail}", t0)


def test_ac8_nonrandom(hn_run):
    t0 = time.perf_counter()
    recs, _ = hn_run
    res = analyze_nonrandom(HN_PLAN, recs)
    gates = [res.gate(k) for k in ("AC8a", "AC8b", "AC8c")]
    verdict("AC8", all(g.passed for g in gates), "; ".join(g.detail for g in gates), t0)


def test_ac10_lowertail(hn_run):
    t0 = time.perf_counter()
    recs, _ = hn_run
    res = analyze_lowertail(replace(HN_PLAN, experiment="lowertail"), recs)
    g, m = res.gate("AC10"), res.gate("lowertail-monotone")
    verdict("AC10", g.passed and m.passed, f"{g.detail}; {m.detail}", t0)


# -- AC9 ----------------------------------------------------------------------

def test_ac9_rotational_invariance(hn_run):
    t0 = time.perf_counter()
    parts, ok = [], True
    second = math.pi / 6
    for kind in ("voronoi", "howard_newman"):
        plan = replace(HN_PLAN, model=ModelSpec(kind))
        if kind == "howard_newman":
            a0 = [r["x"] for r in hn_run[0] if r["n"] == 128.0 and r["angle"] == 0.0]
        else:
            a0 = [r["x"] for r in compute_records(
                plan, [Task("p2p", 128.0, 0.0, i) for i in range(2000)])]
        a1 = [r["x"] for r in compute_records(
            plan, [Task("p2p", 128.0, second, i) for i in range(2000)])]
        p = sstats.ks_2samp(a0, a1).pvalue
        ok &= p > 0.01 and len(a0) == len(a1) == 2000
        parts.append(f"{kind}: KS p = {p:.4f}")
    verdict("AC9", ok, "; ".join(parts) + " (0 vs 30 deg, n=128, 2000 each, need p > 0.01)", t0)


# -- AC11 ---------------------------------------------------------------------

def _table(n, q):
    return ScalingTable(tuple(ScalingRow(n=float(a), count=100, mean=1.0, se_mean=0.1, sd=1.0,
                                         se_sd=0.1, qhat=float(b)) for a, b in zip(n, q)))


def test_ac11_statistics_gates():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1111)
    mism = 0
    for _ in range(100):
        k = int(rng.integers(1, 12))
        n = np.cumsum(rng.uniform(0.5, 3.0, k)) + 1.0
        q = rng.uniform(0.1, 5.0, k)
        alpha = float(rng.uniform(0.01, 0.49))
        got = [bool(x) for x in record_points(_table(n, q), alpha).column("is_record")]
        mism += got != oracles.record_flags(list(n), list(q), alpha)
    hand = build_q_and_w(_table([1, 16], [1, 1]), 0.25).column("q").tolist()
    g = fit_tail_exponent(SampleSet(1.0, rng.standard_normal(100_000))).theta
    e = fit_tail_exponent(SampleSet(1.0, rng.exponential(size=100_000))).theta
    ok = mism == 0 and hand == [1.0, 2.0] and 1.6 <= g <= 2.4 and 0.8 <= e <= 1.2
    verdict("AC11", ok, f"record mismatches {mism}/100; hand example Q = {hand}; "
            f"theta Gaussian {g:.3f}, exponential {e:.3f}", t0)


# -- AC12 ---------------------------------------------------------------------

def _artifacts(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())
            if p.suffix in (".csv", ".jsonl") and p.name != "timings.jsonl"}


def test_ac12_reproducibility(tmp_path):
    t0 = time.perf_counter()

    def cfg(out, **kw):
        return config_from_dict({"experiment": "kpz", "seed": 12, "output_dir": str(out),
                                 "plan": {"n_grid": [16, 32, 64], "samples_per_n": 100},
                                 **kw})

    sink = io.StringIO()
    assert execute(cfg(tmp_path / "w1", workers=1), out=sink) == EXIT_OK
    assert execute(cfg(tmp_path / "w2", workers=2), out=sink) == EXIT_OK
    assert execute(cfg(tmp_path / "cut", workers=2), stop_after=130, out=sink) == EXIT_INTERRUPTED
    with open(tmp_path / "cut" / LOG, "a") as fh:
        fh.write('{"kind": "p2p", "n": 3')
    assert execute(cfg(tmp_path / "cut", workers=1, resume=True), out=sink) == EXIT_OK
    ref = _artifacts(tmp_path / "w1")
    same_w = ref == _artifacts(tmp_path / "w2")
    same_r = ref == _artifacts(tmp_path / "cut")
    verdict("AC12", same_w and same_r and len(ref) >= 3,
            f"{len(ref)} artifacts byte-identical across workers 1/2: {same_w}; "
            f"across interrupt/resume: {same_r}", t0)
