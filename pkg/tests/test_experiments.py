import math
from dataclasses import replace

import numpy as np
import pytest

from fpplab import ModelSpec
from fpplab.experiments import (ExperimentPlan, Task, analyze, analyze_concentration,
                                analyze_kpz, analyze_lowertail, analyze_nonrandom,
                                compute_records, run_task, run_var_decomp, task_seed, tasks,
                                tau1_from_heights, toy_variances, var_decomp_report)
from fpplab.geodesics import crossing_profile
from fpplab.models import Geodesic

HN = ModelSpec("howard_newman")


def rec(n, i, x, tf=1.0, kind="p2p", angle=0.0, values=None, status="ok"):
    return {"kind": kind, "n": float(n), "angle": angle, "index": i, "seed": i, "status": status,
            "x": x, "tf": tf, "values": values or {}}


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan("nope", HN)
    with pytest.raises(ValueError):
        ExperimentPlan("kpz", HN, n_grid=(8.0, 16.0))
    with pytest.raises(ValueError):
        ExperimentPlan("var_decomp", HN, vd_inner=2)
    with pytest.raises(ValueError):
        ExperimentPlan("sample", HN, n_grid=(16.0, 8.0))


def test_seeds_shared_across_experiments():
    a = ExperimentPlan("concentration", HN, n_grid=(8.0,), samples_per_n=3)
    b = ExperimentPlan("kpz", HN, n_grid=(8.0, 16.0, 32.0), samples_per_n=3)
    assert [task_seed(a, t) for t in tasks(a)] == [task_seed(b, t) for t in tasks(b)][:3]


def test_records_deterministic_and_worker_independent():
    p = ExperimentPlan("sample", HN, n_grid=(8.0, 16.0), samples_per_n=6, self_check_fraction=0.5)
    one = compute_records(p)
    assert one == compute_records(p)
    assert one == compute_records(p, workers=2)
    assert any(r["values"].get("self_checked") for r in one)


def test_failed_seeds_are_counted():
    p = ExperimentPlan("sample", ModelSpec("rgg", rgg_threshold=0.3), n_grid=(8.0,),
                       samples_per_n=4)
    recs = compute_records(p)
    assert all(r["status"] == "failed:SubcriticalWindow" for r in recs)
    res = analyze(p, recs)
    assert not res.gate("failures").passed and res.failed == 4


def test_degenerate_model_flagged():
    p = ExperimentPlan("concentration", HN, n_grid=(8.0, 16.0), samples_per_n=3)
    recs = [rec(n, i, 5.0) for n in (8, 16) for i in range(3)]
    res = analyze_concentration(p, recs)
    assert res.data["degenerate"] == [8.0, 16.0]
    assert not res.gate("degenerate").passed


def test_concentration_histograms_bit_identical():
    p = ExperimentPlan("concentration", HN, n_grid=(8.0, 16.0), samples_per_n=30)
    recs = compute_records(p)
    assert analyze(p, recs).tables == analyze(p, list(reversed(recs))).tables


def test_kpz_exact_scaling_injected():
    p = ExperimentPlan("kpz", HN, n_grid=(64.0, 128.0, 256.0), samples_per_n=200)
    z = np.random.default_rng(0).standard_normal(200)
    recs = []
    for n in (64, 128, 256):
        sd = n ** (1 / 3)
        recs += [rec(n, i, n + sd * z[i], tf=3 * n ** (2 / 3)) for i in range(200)]
    res = analyze_kpz(p, recs)
    assert math.isclose(res.data["kpz"].spread, 1.0, rel_tol=1e-9)
    assert res.gate("AC7b").passed
    for n, zz, f, lo, hi in res.data["tf_freq"]:
        assert 0 <= lo <= f <= hi <= 1


def _nonrandom_records(scale=1.0):
    z = np.random.default_rng(1).standard_normal(300)
    z = (z - z.mean()) / z.std(ddof=1)
    recs = []
    for n in (16, 32, 64, 128):
        sd = n ** (1 / 3)
        recs += [rec(n, i, scale * (n + sd + sd * z[i])) for i in range(300)]
    return recs


def test_nonrandom_ratio_invariant_under_cost_scaling():
    p = ExperimentPlan("nonrandom", HN, n_grid=(16.0, 32.0, 64.0, 128.0), samples_per_n=300)
    a = analyze_nonrandom(p, _nonrandom_records())
    b = analyze_nonrandom(p, _nonrandom_records(7.5))
    assert np.allclose(a.data["ratios"], b.data["ratios"], rtol=1e-9)


def test_lowertail_monotone_and_bounded():
    p = ExperimentPlan("lowertail", HN, n_grid=(16.0, 32.0, 64.0, 128.0), samples_per_n=300,
                       lower_levels=(0.0, 0.5, 1.0, 2.0))
    res = analyze_lowertail(p, _nonrandom_records())
    assert res.gate("lowertail-monotone").passed
    for n, L, k, N, f, lo, hi in res.data["rows"]:
        assert 0 <= lo <= f <= hi <= 1
    assert 0 < [r for r in res.data["rows"] if r[1] == 0.0][0][4] < 1


def test_tau1_from_heights_matches_crossing_profile():
    v = np.array([(0, 0), (10, 7.2), (20, -4.1), (30, 13.0), (40, 0)], float)
    g = Geodesic(v, 0.0, np.zeros(4))
    W = 3.0
    prof = crossing_profile(g, 10.0, 4, W)
    assert tau1_from_heights(prof.first_hit_heights, W) == prof.tau1()
    assert tau1_from_heights([0.5, 0.5, 0.5], 3.0) == 0


def test_meso_tasks_run():
    p = ExperimentPlan("tf_tail", HN, n_grid=(8.0,), samples_per_n=120, meso_samples=3,
                       columns=3)
    recs = compute_records(p)
    meso = [r for r in recs if r["kind"] == "meso"]
    assert len(meso) == 3 and all(len(r["values"]["heights"]) == 2 for r in meso)
    res = analyze(p, recs)
    assert res.data["meso"][0][1] == 3


VD = ExperimentPlan("var_decomp", ModelSpec("voronoi_weighted"), vd_window=(8.0, 4.0),
                    vd_blocks=(2, 2), vd_outer=200, vd_inner=16)


def test_toy_single_block_collapse():
    res = run_var_decomp(VD, functional="single_block")
    rep = res.data["report"]
    var, inc = toy_variances(replace(VD, vd_functional="single_block"))
    assert all(v == 0.0 and s == 0.0 for v, s in rep.increments[1:])
    assert abs(rep.increment_sum[0] - var) <= 3 * rep.increment_sum[1]


def test_toy_block_sum_matches_analytic():
    plan = replace(VD, vd_functional="block_sum")
    rep = var_decomp_report(plan, compute_records(plan))
    var, inc = toy_variances(plan)
    for (v, s), want in zip(rep.increments, inc):
        assert abs(v - want) <= 3.5 * s
    assert abs(rep.increment_sum[0] - var) <= 3 * rep.increment_sum[1]


def test_var_decomp_passage_time_small():
    plan = replace(VD, vd_outer=6, vd_inner=8)
    rep = var_decomp_report(plan, compute_records(plan))
    assert len(rep.increments) == 4 and rep.outer == 6
    assert 0 <= rep.coverage_fraction <= 1


def test_run_task_self_check_window():
    p = ExperimentPlan("sample", HN, self_check_fraction=1.0)
    r = run_task(p, Task("p2p", 16.0, 0.0, 0))
    assert r["status"] == "ok" and r["values"]["self_checked"]
