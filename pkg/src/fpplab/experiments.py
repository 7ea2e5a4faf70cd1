"""Scenario runners that turn model samples into summary tables and gate
verdicts.

An experiment is split into independent *tasks* (one environment each).
``run_task`` maps (plan, task) to a plain-dict record and is a pure function
of its arguments, so tasks can be farmed out to any number of workers and
replayed from a log. ``analyze`` turns the records of a plan into CSV tables
and gate verdicts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sstats

from . import rng
from .field import FieldError, FieldRealization, FieldSpec, RegionSelector, sample_field
from .geodesics import (CorridorQuery, corridor_passage, first_crossing_height, gamma_defect,
                        local_tf_audit, local_tf_excess, transversal_fluctuation)
from .geometry import GeometryError, Rect, VStrip
from .models import ModelError, ModelSpec, build_model
from .stats import (SCHEMA_VERSION, SampleSet, ScalingTable, StatsError, bootstrap_ci, build_q_and_w,
                    estimate_mu, fit_tail_exponent, format_value, kpz_ratio, qhat_empirical,
                    record_points, summarize, wilson_interval)

EXPERIMENTS = ("sample", "concentration", "kpz", "nonrandom", "corridor", "lowertail", "tf_tail",
               "assumptions", "var_decomp")
TASK_KINDS = ("p2p", "meso", "corridor", "metric", "local", "defect", "ltf", "resamp1",
              "locality", "vd")
HIST_EDGES = np.linspace(-5.0, 5.0, 41)


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything that determines an experiment's output.

    Lengths are in model units and angles in radians. ``field`` is a
    template whose window and seed are replaced per task.
    """
    experiment: str
    model: ModelSpec
    field: FieldSpec = field(default_factory=lambda: FieldSpec(Rect(0.0, 1.0, 0.0, 1.0)))
    n_grid: tuple[float, ...] = (64.0, 128.0, 256.0, 512.0)
    samples_per_n: int = 2000
    direction_angles: tuple[float, ...] = (0.0,)
    seed_base: int = 0
    # window sizing and self-check
    pad_factor: float = 1.0
    pad_const: float = 10.0
    self_check_fraction: float = 0.05
    self_check_scale: float = 1.5
    max_failure_fraction: float = 0.02
    # statistics
    alpha: float = 1.0 / 30.0
    theta: float | None = None
    quasi_c: float = 2.0
    quasi_alpha: float = 1.0 / 60.0
    mu_scales: tuple[float, ...] = ()
    mu_samples: int = 200
    # corridor
    corridor_aspect: float = 1.0
    side_step_fraction: float = 1.0 / 64.0
    max_side_samples: int = 16
    # lower tail
    lower_levels: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    # transversal fluctuation tails and crossings
    tf_levels: tuple[float, ...] = (1.0, 2.0, 4.0)
    columns: int = 4
    meso_n: tuple[float, ...] = ()
    meso_samples: int = 200
    # assumption audit
    audit_n: float = 64.0
    audit_instances: int = 100
    triples_per_instance: int = 10
    # variance decomposition
    vd_window: tuple[float, float] = (32.0, 8.0)
    vd_blocks: tuple[int, int] = (4, 4)
    vd_outer: int = 256
    vd_inner: int = 64
    vd_min_inner: int = 8
    vd_functional: str = "passage_time"
    # acceptance gates whose failure makes the run fail
    gates: tuple[str, ...] = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if not self.n_grid or self.n_grid[0] <= 0:
            raise ValueError("n_grid must hold positive lengths")
        if self.samples_per_n < 2:
            raise ValueError("samples_per_n must be at least 2")
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 1/2)")
        if not 0 <= self.self_check_fraction <= 1:
            raise ValueError("self_check_fraction must lie in [0, 1]")
        if self.self_check_scale <= 1:
            raise ValueError("self_check_scale must exceed 1")
        if self.columns < 2:
            raise ValueError("columns must be at least 2")
        if self.vd_functional not in ("passage_time", "single_block", "block_sum"):
            raise ValueError(f"unknown var_decomp functional {self.vd_functional!r}")
        if self.experiment == "var_decomp" and self.vd_inner < self.vd_min_inner:
            raise ValueError(f"vd_inner must be at least {self.vd_min_inner}")
        if self.experiment == "kpz" and len(self.n_grid) < 3:
            raise ValueError("kpz needs at least three n values")
        if any(L < 0 for L in self.lower_levels):
            raise ValueError("lower tail levels must be nonnegative")


@dataclass(frozen=True, order=True)
class Task:
    kind: str
    n: float
    angle: float
    index: int

    @property
    def key(self) -> tuple:
        return (self.kind, float(self.n), float(self.angle), int(self.index))


def task_seed(plan: ExperimentPlan, t: Task) -> int:
    """Environment seed of a task; independent of the experiment name so
    that different analyses of the same model share samples."""
    return rng.derive_seed(plan.seed_base, TASK_KINDS.index(t.kind), round(t.n * 1000),
                           round(t.angle * 1e9), t.index)


def tasks(plan: ExperimentPlan) -> list[Task]:
    """All tasks of a plan in canonical order."""
    e = plan.experiment
    out: list[Task] = []

    def p2p(ns, count, angles=(0.0,)):
        for n in ns:
            for a in angles:
                out.extend(Task("p2p", float(n), float(a), i) for i in range(count))

    if e in ("sample", "concentration", "kpz", "nonrandom", "lowertail", "tf_tail"):
        p2p(plan.n_grid, plan.samples_per_n, plan.direction_angles)
        if e in ("nonrandom", "lowertail"):
            p2p([n for n in plan.mu_scales if n not in plan.n_grid], plan.mu_samples)
        if e == "tf_tail":
            for n in plan.meso_n or plan.n_grid[:1]:
                out.extend(Task("meso", float(n), 0.0, i) for i in range(plan.meso_samples))
    elif e == "corridor":
        for n in plan.n_grid:
            out.extend(Task("corridor", float(n), 0.0, i) for i in range(plan.samples_per_n))
    elif e == "assumptions":
        p2p(plan.n_grid, plan.samples_per_n)
        second = plan.direction_angles[1] if len(plan.direction_angles) > 1 else math.pi / 6
        p2p([plan.audit_n], plan.samples_per_n, (second,))
        for kind in ("metric", "local", "defect", "ltf", "resamp1", "locality"):
            out.extend(Task(kind, float(plan.audit_n), 0.0, i)
                       for i in range(plan.audit_instances))
    else:
        out.extend(Task("vd", 0.0, 0.0, i) for i in range(plan.vd_outer))
    return out


# -- per-task computations ----------------------------------------------------

def pad_for(plan: ExperimentPlan, n: float) -> float:
    extra = 1.0 if plan.model.is_grid else 0.0
    return plan.pad_factor * n ** (2.0 / 3.0) + plan.pad_const + extra


def _instance(plan: ExperimentPlan, window: Rect, seed: int, margin: float = 0.0):
    f = sample_field(replace(plan.field, window=window, master_seed=seed))
    return build_model(plan.model, f, safety_margin=margin)


def _self_checked(plan: ExperimentPlan, seed: int) -> bool:
    if plan.self_check_fraction <= 0:
        return False
    return int(rng.hash_words(seed, 0x5E1F)) / 2.0 ** 64 < plan.self_check_fraction


def _same(plan: ExperimentPlan, a: float, b: float) -> bool:
    if plan.model.is_grid:
        return abs(a - b) <= 1e-12 * max(1.0, abs(a))
    return a == b


def _uniform_points(seed: int, stream: int, count: int, box: Rect) -> np.ndarray:
    i = np.arange(count)
    ux = rng.uniforms(seed, 100 + stream, i, 0)
    uy = rng.uniforms(seed, 100 + stream, i, 1)
    return np.column_stack([box.x0 + ux * box.width, box.y0 + uy * box.height])


def _p2p(plan, t, seed, scale=1.0):
    v = (t.n * math.cos(t.angle), t.n * math.sin(t.angle))
    pad = pad_for(plan, t.n)
    window = Rect.bounding([(0.0, 0.0), v], pad)
    if scale != 1.0:
        window = window.scaled(scale)
    m = _instance(plan, window, seed)
    g = m.geodesic((0.0, 0.0), v)
    chord_tf = transversal_fluctuation(g)
    return {"x": g.passage_time, "tf": chord_tf}


def _meso(plan, t, seed, scale=1.0):
    N = t.n * plan.columns
    pad = pad_for(plan, N)
    window = Rect.bounding([(0.0, 0.0), (N, 0.0)], pad)
    if scale != 1.0:
        window = window.scaled(scale)
    m = _instance(plan, window, seed)
    g = m.geodesic((0.0, 0.0), (N, 0.0))
    heights = [first_crossing_height(g.vertices, i * t.n) for i in range(1, plan.columns)]
    return {"x": g.passage_time, "tf": transversal_fluctuation(g), "heights": heights}


def corridor_width(plan: ExperimentPlan, n: float) -> float:
    return plan.corridor_aspect * n ** (2.0 / 3.0)


def _corridor(plan, t, seed, scale=1.0):
    n = t.n
    W = corridor_width(plan, n)
    rect = Rect(0.0, n, -W / 2, W / 2)
    window = rect.expanded(pad_for(plan, n))
    if scale != 1.0:
        window = window.scaled(scale)
    m = _instance(plan, window, seed)
    step = W * plan.side_step_fraction
    y_minus, (um, vm) = corridor_passage(m, CorridorQuery(rect, step, "min"))
    y_plus, _ = corridor_passage(m, CorridorQuery(rect, W / plan.max_side_samples, "max"))
    x = m.passage_time((0.0, 0.0), (n, 0.0))
    return {"x": x, "tf": None, "y_minus": y_minus, "y_plus": y_plus}


def _metric(plan, t, seed):
    S = t.n / 2
    pad = plan.pad_const + (1.0 if plan.model.is_grid else 0.0)
    box = Rect(0.0, S, 0.0, S)
    m = _instance(plan, box.expanded(pad + 0.25 * S), seed)
    pts = _uniform_points(seed, 0, 3 * plan.triples_per_instance, box)
    worst_tri, worst_sym, worst_zero = -math.inf, 0.0, 0.0
    for k in range(plan.triples_per_instance):
        u, v, w = (tuple(p) for p in pts[3 * k: 3 * k + 3])
        du, dv, dw = m.sweep([u]), m.sweep([v]), m.sweep([w])
        if plan.model.is_grid:
            xuv, xvu = m.arrival(du, v), m.arrival(dv, u)
        else:
            xuv, xvu = m.passage_time(u, v), m.passage_time(v, u)
        excess = xuv - (m.arrival(du, w) + m.arrival(dw, v))
        worst_tri = max(worst_tri, excess)
        worst_sym = max(worst_sym, abs(xuv - xvu))
        worst_zero = max(worst_zero, abs(m.passage_time(u, u)))
    return {"x": None, "tf": None, "tri_excess": worst_tri, "asym": worst_sym,
            "self": worst_zero}


def _ball_net() -> np.ndarray:
    ang = np.arange(8) * math.pi / 4
    ring = [np.column_stack([r * np.cos(ang), r * np.sin(ang)]) for r in (1.5, 3.0)]
    return np.vstack([[0.0, 0.0], *ring])


def _local(plan, t, seed):
    net = _ball_net()
    pad = plan.pad_const + (1.0 if plan.model.is_grid else 0.0)
    m = _instance(plan, Rect(-3.0, 3.0, -3.0, 3.0).expanded(pad), seed)
    best = 0.0
    for i, u in enumerate(net):
        d = m.sweep([tuple(u)])
        for v in net[i + 1:]:
            best = max(best, m.arrival(d, tuple(v)))
    return {"x": best, "tf": None}


def _defect(plan, t, seed):
    n = t.n
    m = _instance(plan, Rect.bounding([(0.0, 0.0), (n, 0.0)], pad_for(plan, n)), seed)
    g = m.geodesic((0.0, 0.0), (n, 0.0))
    return {"x": g.passage_time, "tf": None, "defect": gamma_defect(m, g, (0.25, 0.5, 0.75))}


def _ltf(plan, t, seed):
    n = t.n / 2
    M = 2.0
    W = n ** (2.0 / 3.0)
    y1, y2 = (2 * rng.uniforms(seed, 120, np.arange(2)) - 1) * W
    y1, y2 = float(y1), float(y2)
    pad = pad_for(plan, M * n)
    m = _instance(plan, Rect.bounding([(0.0, y1), (M * n, y2)], pad), seed)
    H = local_tf_audit(m, n, M, y1, y2)
    return {"x": None, "tf": None, "H": H, "excess": local_tf_excess(H, M, y1, y2),
            "scale": n ** 0.8}


def _resamp1(plan, t, seed):
    n = t.n / 4
    pad = plan.pad_const + (1.0 if plan.model.is_grid else 0.0)
    m = _instance(plan, Rect(0.0, n, 0.0, n).expanded(pad), seed)
    m2 = m.resampled(RegionSelector("complement", VStrip(0.0, n)), rng.derive_seed(seed, 7))
    left = [(0.0, y) for y in np.linspace(0.0, n, 5)]
    right = [(n, y) for y in np.linspace(0.0, n, 5)]
    worst = 0.0
    for u in left:
        d1, d2 = m.sweep([u]), m2.sweep([u])
        for v in right:
            worst = max(worst, abs(m.arrival(d1, v) - m2.arrival(d2, v)))
    return {"x": None, "tf": None, "max_change": worst, "log_n": math.log(n)}


def locality_geometry(n: float) -> tuple[Rect, Rect, tuple, tuple]:
    """(Lambda, Lambda^-, u, v) for the resampling-locality check: Lambda is
    the n x n rectangle around the axis, shrunk by log^2 n for Lambda^-."""
    lam = Rect(0.0, n, -n / 2, n / 2)
    s = math.log(n) ** 2
    inner = Rect(s, n - s, -n / 2 + s, n / 2 - s)
    return lam, inner, (s + 2.0, 0.0), (n - s - 2.0, 0.0)


def _locality(plan, t, seed):
    lam, inner, u, v = locality_geometry(t.n)
    m = _instance(plan, lam.expanded(plan.pad_const + 1.0), seed)
    g = m.geodesic(u, v)
    confined = bool(np.all(inner.contains(g.vertices[:, 0], g.vertices[:, 1])))
    m2 = m.resampled(RegionSelector("complement", lam), rng.derive_seed(seed, 11))
    after = m2.path_cost(g.vertices)
    return {"x": g.passage_time, "tf": None, "confined": confined,
            "unchanged": bool(_same(plan, after, g.passage_time)), "after": after}


def _vd_blocks(plan):
    Lx, Ly = plan.vd_window
    bx, by = plan.vd_blocks
    return Rect(0.0, Lx, 0.0, Ly), Lx / bx, Ly / by


def _block_ids(plan, xy: np.ndarray) -> np.ndarray:
    """Reveal position of the block holding each point (row-major over
    columns i, then rows j)."""
    _, w, h = _vd_blocks(plan)
    bx, by = plan.vd_blocks
    i = np.clip(np.floor(xy[:, 0] / w).astype(np.int64), 0, bx - 1)
    j = np.clip(np.floor(xy[:, 1] / h).astype(np.int64), 0, by - 1)
    return i * by + j


def _compose(base: FieldRealization, fresh: FieldRealization, level: int, plan) -> FieldRealization:
    """Field equal to ``base`` on the first ``level`` blocks and to ``fresh``
    on the rest."""
    if base.noise is not None:
        raise ExperimentError("block composition needs a point field")
    kb = _block_ids(plan, base.xy) < level
    kf = _block_ids(plan, fresh.xy) >= level
    return FieldRealization(base.spec, np.concatenate([base.xy[kb], fresh.xy[kf]]),
                            np.concatenate([base.marks[kb], fresh.marks[kf]]),
                            np.concatenate([base.tiebreak[kb], fresh.tiebreak[kf]]))


def vd_endpoints(plan) -> tuple[tuple, tuple]:
    Lx, Ly = plan.vd_window
    return (2.0, Ly / 2), (Lx - 2.0, Ly / 2)


def vd_functional(plan, f: FieldRealization) -> float:
    """The functional decomposed by ``var_decomp``: the model passage time
    between the endpoints, or one of two analytic toy functionals of block
    point counts."""
    kind = plan.vd_functional
    if kind == "passage_time":
        u, v = vd_endpoints(plan)
        return build_model(plan.model, f).passage_time(u, v)
    counts = np.bincount(_block_ids(plan, f.xy), minlength=plan.vd_blocks[0] * plan.vd_blocks[1])
    if kind == "single_block":
        return float(counts[0])
    return float(np.sum(counts.astype(float) ** 2))


def toy_variances(plan) -> tuple[float, list[float]]:
    """Analytic (total variance, per-block increments) of the toy functionals
    for a Poisson field of the plan's rate."""
    _, w, h = _vd_blocks(plan)
    lam = plan.field.ppp_rate * w * h
    K = plan.vd_blocks[0] * plan.vd_blocks[1]
    if plan.vd_functional == "single_block":
        inc = [lam] + [0.0] * (K - 1)
    elif plan.vd_functional == "block_sum":
        # Var(N^2) for N ~ Poisson(lam)
        inc = [4 * lam ** 3 + 6 * lam ** 2 + lam] * K
    else:
        raise ExperimentError("no analytic variance for the passage-time functional")
    return math.fsum(inc), inc


def _vd(plan, t, seed):
    window, _, _ = _vd_blocks(plan)
    spec = replace(plan.field, window=window, master_seed=seed)
    base = sample_field(spec)
    K = plan.vd_blocks[0] * plan.vd_blocks[1]
    I = plan.vd_inner
    x_full = vd_functional(plan, base)
    covered = None
    if plan.vd_functional == "passage_time":
        u, v = vd_endpoints(plan)
        g = build_model(plan.model, base).geodesic(u, v)
        core = window.expanded(-1.0)
        covered = bool(np.all(core.contains(g.vertices[:, 0], g.vertices[:, 1])))
    # X[k, j]: blocks < k from the base field, the rest from inner copy j
    X = np.empty((K + 1, I))
    X[K, :] = x_full
    for j in range(I):
        fresh = sample_field(replace(spec, master_seed=rng.derive_seed(seed, 0xF5, j)))
        for k in range(K):
            X[k, j] = vd_functional(plan, _compose(base, fresh, k, plan))
    D = np.diff(X, axis=0)
    dbar = D.mean(axis=1)
    s2 = D.var(axis=1, ddof=1)
    inc = dbar ** 2 - s2 / I
    return {"x": x_full, "tf": None, "inc": inc.tolist(), "covered": covered}


_WORKERS = {"p2p": _p2p, "meso": _meso, "corridor": _corridor, "metric": _metric,
            "local": _local, "defect": _defect, "ltf": _ltf, "resamp1": _resamp1,
            "locality": _locality, "vd": _vd}
_CHECKED = {"p2p": ("x",), "meso": ("x",), "corridor": ("y_minus", "y_plus", "x")}


def run_task(plan: ExperimentPlan, t: Task) -> dict:
    """Compute one task. Model and geometry failures become a failed record
    instead of an exception; window violations found by the enlarge-and-
    compare self-check are failures too."""
    seed = task_seed(plan, t)
    rec = {"kind": t.kind, "n": float(t.n), "angle": float(t.angle), "index": int(t.index),
           "seed": seed, "status": "ok", "x": None, "tf": None, "values": {}}
    worker = _WORKERS[t.kind]
    try:
        out = worker(plan, t, seed)
        if t.kind in _CHECKED and _self_checked(plan, seed):
            big = worker(plan, t, seed, plan.self_check_scale)
            for key in _CHECKED[t.kind]:
                if not _same(plan, out[key], big[key]):
                    rec["status"] = "failed:window_self_check"
            out["self_checked"] = True
    except (ModelError, FieldError, GeometryError) as exc:
        rec["status"] = f"failed:{type(exc).__name__}"
        return rec
    rec["x"] = out.pop("x")
    rec["tf"] = out.pop("tf")
    rec["values"] = out
    if rec["status"] != "ok":
        rec["x"] = rec["tf"] = None
        rec["values"] = {}
    return rec


def compute_records(plan: ExperimentPlan, task_list=None, workers: int = 1) -> list[dict]:
    """Run tasks (default: all of the plan) and return records in task
    order. With ``workers > 1`` a process pool is used; the output does not
    depend on the worker count."""
    task_list = tasks(plan) if task_list is None else list(task_list)
    if workers <= 1 or len(task_list) < 2:
        return [run_task(plan, t) for t in task_list]
    import multiprocessing as mp
    with mp.get_context("fork").Pool(workers) as pool:
        return list(pool.imap(_pool_task, [(plan, t) for t in task_list], chunksize=4))


def _pool_task(args):
    return run_task(*args)


# -- analysis -----------------------------------------------------------------

@dataclass(frozen=True)
class Gate:
    id: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{self.id} {'PASS' if self.passed else 'FAIL'} {self.detail}"


@dataclass
class ExperimentResult:
    experiment: str
    tables: dict[str, str] = field(default_factory=dict)
    gates: list[Gate] = field(default_factory=list)
    data: dict = field(default_factory=dict)
    failed: int = 0
    total: int = 0

    def gate(self, gid: str) -> Gate:
        for g in self.gates:
            if g.id == gid:
                return g
        raise KeyError(gid)

    @property
    def ok(self) -> bool:
        return all(g.passed for g in self.gates)


def csv_text(header, rows) -> str:
    """CSV with 17-significant-digit floats and a trailing schema_version
    column, LF line endings."""
    lines = [",".join((*header, "schema_version"))]
    lines += [",".join((*(format_value(v) if not isinstance(v, str) else v for v in r),
                        str(SCHEMA_VERSION))) for r in rows]
    return "\n".join(lines) + "\n"


def _ok(records, kind=None, angle=None):
    out = [r for r in records if r["status"] == "ok" and (kind is None or r["kind"] == kind)]
    if angle is not None:
        out = [r for r in out if r["angle"] == angle]
    return out


def _by_n(records) -> dict[float, list[dict]]:
    groups: dict[float, list[dict]] = {}
    for r in sorted(records, key=lambda r: (r["n"], r["angle"], r["index"])):
        groups.setdefault(r["n"], []).append(r)
    return groups


def sample_sets(records, kind="p2p", angle=0.0, key="x") -> list[SampleSet]:
    out = []
    for n, rs in _by_n(_ok(records, kind, angle)).items():
        vals = [r[key] if key in ("x", "tf") else r["values"][key] for r in rs]
        if len(vals) >= 2:
            out.append(SampleSet(n, np.array(vals, dtype=float), tuple(r["seed"] for r in rs)))
    return out


def failure_gate(plan, records) -> Gate:
    failed = sum(r["status"] != "ok" for r in records)
    frac = failed / max(len(records), 1)
    return Gate("failures", frac <= plan.max_failure_fraction,
                f"failed seeds {failed}/{len(records)} ({frac:.2%}, limit "
                f"{plan.max_failure_fraction:.0%})")


def _standardised(s: SampleSet) -> np.ndarray | None:
    sd = float(np.std(s.values, ddof=1))
    if sd <= 1e-12 * max(1.0, abs(float(np.mean(s.values)))):
        return None
    return (s.values - np.mean(s.values)) / sd


def pooled_theta(plan, sets) -> float:
    """theta for Qhat: the plan's value, else the tail fit of all scales'
    standardised samples pooled, else 1."""
    if plan.theta is not None:
        return plan.theta
    zs = [z for z in (_standardised(s) for s in sets) if z is not None]
    if zs and sum(len(z) for z in zs) >= 1000:
        try:
            return fit_tail_exponent(SampleSet(0.0, np.concatenate(zs))).theta
        except StatsError:
            pass
    return 1.0


def scaling_table(plan, sets) -> ScalingTable:
    """Summary rows with tail fits, Qhat, Q, W and record flags."""
    table = summarize(sets)
    theta = pooled_theta(plan, sets)
    rows = []
    for row, s in zip(table.rows, sorted(sets, key=lambda s: s.n)):
        th, r2 = math.nan, math.nan
        if len(s.values) >= 1000 and row.sd > 0:
            fit = fit_tail_exponent(s)
            th, r2 = fit.theta, fit.r2
        q = qhat_empirical(s, theta) if len(s.values) >= 100 else math.nan
        rows.append(replace(row, theta_hat=th, r2=r2, qhat=q))
    table = ScalingTable(tuple(rows))
    if not np.isnan(table.column("qhat")).any() and np.all(table.column("qhat") > 0):
        table = build_q_and_w(table, plan.alpha)
        table = record_points(table, plan.alpha, (plan.quasi_c, plan.quasi_alpha))
    return table


def _histograms(sets) -> str:
    rows = []
    for s in sets:
        z = _standardised(s)
        if z is None:
            continue
        counts, _ = np.histogram(z, bins=HIST_EDGES)
        rows += [(s.n, lo, hi, int(c)) for lo, hi, c in zip(HIST_EDGES[:-1], HIST_EDGES[1:], counts)]
    return csv_text(("n", "bin_lo", "bin_hi", "count"), rows)


def analyze_concentration(plan, records) -> ExperimentResult:
    res = ExperimentResult("concentration")
    sets = sample_sets(records)
    table = scaling_table(plan, sets)
    res.tables["scaling.csv"] = table.to_csv()
    res.tables["histograms.csv"] = _histograms(sets)
    ks_rows = []
    zs = {s.n: _standardised(s) for s in sets}
    degenerate = [n for n, z in zs.items() if z is None]
    ns = sorted(zs)
    for a, b in zip(ns, ns[1:]):
        if zs[a] is None or zs[b] is None:
            continue
        ks = sstats.ks_2samp(zs[a], zs[b])
        ks_rows.append((a, b, ks.statistic, ks.pvalue))
    res.tables["ks.csv"] = csv_text(("n", "n_next", "ks_distance", "p_value"), ks_rows)
    res.data.update(table=table, ks=ks_rows, degenerate=degenerate, sets=sets)
    thetas = table.column("theta_hat")
    if degenerate:
        res.gates.append(Gate("degenerate", False, f"SD ~ 0 at n={degenerate}; "
                              "normalisation skipped"))
    fitted = thetas[~np.isnan(thetas)]
    res.gates.append(Gate("AC6a", len(fitted) == len(ns) and bool(np.all(fitted > 0.2)),
                          "theta_hat > 0.2 at every n: "
                          + ", ".join(f"n={n:g}:{t:.3f}" for n, t in zip(table.n, thetas))))
    dyadic = [r for r in ks_rows if abs(r[1] - 2 * r[0]) < 1e-9]
    res.gates.append(Gate("AC6b", bool(dyadic) and all(r[2] <= 0.15 for r in dyadic),
                          "KS(n, 2n) <= 0.15: "
                          + ", ".join(f"{a:g}->{b:g}:{d:.4f}" for a, b, d, _ in dyadic)))
    return res


def run_concentration(plan, records=None, workers=1) -> ExperimentResult:
    records = compute_records(plan, workers=workers) if records is None else records
    res = analyze_concentration(plan, records)
    res.gates.append(failure_gate(plan, records))
    return res


def tf_tail_frequencies(tf_sets, W: dict, levels) -> list[tuple]:
    rows = []
    for s in tf_sets:
        for z in levels:
            k = int(np.sum(s.values >= z * W[s.n]))
            lo, hi = wilson_interval(k, len(s.values))
            rows.append((s.n, z, k / len(s.values), lo, hi))
    return rows


def _w_by_n(plan, table: ScalingTable) -> dict[float, float]:
    w = table.column("w")
    if np.isnan(w).any():
        raise ExperimentError("W_n unavailable (Qhat needs >= 100 samples per n)")
    return dict(zip(table.n.tolist(), w.tolist()))


def analyze_kpz(plan, records) -> ExperimentResult:
    res = ExperimentResult("kpz")
    sets = sample_sets(records)
    tf_sets = sample_sets(records, key="tf")
    table = scaling_table(plan, sets)
    means = np.array([s.values.mean() for s in tf_sets])
    se = np.array([s.values.std(ddof=1) / math.sqrt(len(s.values)) for s in tf_sets])
    med = np.array([np.median(s.values) for s in tf_sets])
    kr = kpz_ratio(table, means, se, med)
    res.tables["scaling.csv"] = table.to_csv()
    res.tables["kpz.csv"] = csv_text(
        ("n", "tf_mean", "tf_se", "tf_median", "sd", "r", "r_se", "r_median"),
        zip(table.n, means, se, med, table.column("sd"), kr.ratio, kr.se, kr.median_ratio))
    freq = tf_tail_frequencies(tf_sets, _w_by_n(plan, table), plan.tf_levels)
    res.tables["tf_tail.csv"] = csv_text(("n", "z", "frequency", "ci_lo", "ci_hi"), freq)
    res.data.update(table=table, kpz=kr, tf_freq=freq)
    res.gates.append(Gate("AC7a", kr.spread <= 4.0,
                          f"max/min r_n = {kr.spread:.3f} <= 4; r = "
                          + ", ".join(f"{r:.4f}" for r in kr.ratio)))
    mono = all(freq[i][2] >= freq[i + 1][2] for i in range(len(freq) - 1)
               if freq[i][0] == freq[i + 1][0])
    res.gates.append(Gate("AC7b", mono, "TF tail frequencies nonincreasing in z per n"))
    return res


def run_kpz(plan, records=None, workers=1) -> ExperimentResult:
    records = compute_records(plan, workers=workers) if records is None else records
    res = analyze_kpz(plan, records)
    res.gates.append(failure_gate(plan, records))
    return res


def _mu_from(plan, records):
    """Speed estimate from the summary over the n grid and any auxiliary
    scales."""
    table = summarize(sample_sets(records))
    try:
        return estimate_mu(table), table
    except StatsError:
        n = table.n[-1]
        row = table.rows[-1]
        mu = row.mean / n
        half = 1.96 * row.se_mean / n
        from .stats import MuEstimate
        return MuEstimate(mu, (mu - half, mu + half), math.nan, math.nan, math.nan, True,
                          "plug-in mean(n_max)/n_max (too few scales for the fit)"), table


def analyze_nonrandom(plan, records) -> ExperimentResult:
    res = ExperimentResult("nonrandom")
    est, full = _mu_from(plan, records)
    mu = est.mu
    mu_se = (est.ci[1] - est.ci[0]) / (2 * 1.96)
    grid = [r for r in full.rows if r.n in plan.n_grid]
    sets = {s.n: s for s in sample_sets(records)}
    rows, ratios, a_ok = [], [], True
    for i, r in enumerate(grid):
        a = r.mean - mu * r.n
        se = math.hypot(r.se_mean, r.n * mu_se)
        ratio = a / r.sd
        lo, hi = bootstrap_ci(sets[r.n].values,
                              lambda v, n=r.n: (v.mean() - mu * n) / v.std(ddof=1),
                              n_boot=400, seed=i)
        flag = a < -3 * se
        a_ok &= not flag
        ratios.append(ratio)
        rows.append((r.n, r.mean, a, se, r.sd, ratio, lo, hi, "true" if flag else "false"))
    res.tables["nonrandom.csv"] = csv_text(
        ("n", "mean", "a_hat", "a_se", "sd", "ratio", "ci_lo", "ci_hi", "violation"), rows)
    res.tables["scaling.csv"] = full.to_csv()
    sub_rows = []
    by_n = {r.n: r for r in full.rows}
    for n in sorted(by_n):
        if 2 * n in by_n:
            a, b = by_n[n], by_n[2 * n]
            se = math.hypot(b.se_mean, 2 * a.se_mean)
            sub_rows.append((n, b.mean, 2 * a.mean, se, b.mean <= 2 * a.mean + 3 * se))
    res.tables["subadditivity.csv"] = csv_text(
        ("n", "mean_2n", "twice_mean_n", "se", "holds"),
        [(*r[:4], "true" if r[4] else "false") for r in sub_rows])
    res.data.update(mu=est, ratios=ratios, rows=rows, subadditivity=sub_rows)
    res.gates.append(Gate("AC8a", a_ok, f"mean(n) >= mu_hat n - 3 SE at every n "
                          f"(mu_hat = {mu:.6f}, {est.note})"))
    res.gates.append(Gate("AC8b", bool(sub_rows) and all(r[4] for r in sub_rows),
                          "mean(2n) <= 2 mean(n) + 3 SE"))
    ratios_arr = np.array(ratios)
    band = (ratios_arr.max() / ratios_arr.min()) if np.all(ratios_arr > 0) else math.inf
    res.gates.append(Gate("AC8c", band <= 4.0, f"(mean - mu_hat n)/SD band max/min = {band:.3f}"
                          " <= 4; ratios = " + ", ".join(f"{x:.4f}" for x in ratios)))
    return res


def run_nonrandom(plan, records=None, workers=1) -> ExperimentResult:
    records = compute_records(plan, workers=workers) if records is None else records
    res = analyze_nonrandom(plan, records)
    res.gates.append(failure_gate(plan, records))
    return res


def analyze_lowertail(plan, records) -> ExperimentResult:
    res = ExperimentResult("lowertail")
    est, _ = _mu_from(plan, records)
    rows = []
    for s in sample_sets(records):
        if s.n not in plan.n_grid:
            continue
        sd = float(np.std(s.values, ddof=1))
        for L in sorted(plan.lower_levels):
            k = int(np.sum(s.values < est.mu * s.n - L * sd))
            lo, hi = wilson_interval(k, len(s.values))
            rows.append((s.n, L, k, len(s.values), k / len(s.values), lo, hi))
    res.tables["lowertail.csv"] = csv_text(
        ("n", "level", "hits", "count", "frequency", "ci_lo", "ci_hi"), rows)
    res.data.update(mu=est, rows=rows)
    mono = all(rows[i][4] >= rows[i + 1][4] for i in range(len(rows) - 1)
               if rows[i][0] == rows[i + 1][0])
    res.gates.append(Gate("lowertail-monotone", mono, "frequency nonincreasing in L"))
    n_max = max(plan.n_grid)
    hit = [r for r in rows if r[0] == n_max and r[1] == 1.0]
    if hit:
        k = hit[0][2]
        res.gates.append(Gate("AC10", k >= 5, f"P[X_n < mu_hat n - SD] at n={n_max:g}: "
                              f"{k}/{hit[0][3]} hits (need >= 5)"))
    return res


def run_lowertail(plan, records=None, workers=1) -> ExperimentResult:
    records = compute_records(plan, workers=workers) if records is None else records
    res = analyze_lowertail(plan, records)
    res.gates.append(failure_gate(plan, records))
    return res


def tau1_from_heights(heights, W: float) -> int:
    k = [0, *(math.floor(h / W) for h in heights), 0]
    return int(sum(abs(b - a) for a, b in zip(k[:-1], k[1:])))


def analyze_meso(plan, records, W: dict) -> list[tuple]:
    rows = []
    for n, rs in _by_n(_ok(records, "meso")).items():
        Wn = W.get(n)
        if Wn is None:
            continue
        t = np.array([tau1_from_heights(r["values"]["heights"], Wn) for r in rs], dtype=float)
        per_m = t / plan.columns
        se = per_m.std(ddof=1) / math.sqrt(len(per_m)) if len(per_m) > 1 else math.nan
        jumps = np.concatenate([np.abs(np.diff([0, *(math.floor(h / Wn) for h in
                                                     r["values"]["heights"]), 0]))
                                for r in rs])
        hist = np.bincount(jumps.astype(int))
        rows.append((n, len(t), per_m.mean(), se, per_m.mean() - 1.96 * se,
                     per_m.mean() + 1.96 * se, " ".join(str(int(c)) for c in hist)))
    return rows


def run_meso_crossings(plan, records=None, workers=1) -> ExperimentResult:
    records = compute_records(plan, workers=workers) if records is None else records
    res = ExperimentResult("meso_crossings")
    table = scaling_table(plan, sample_sets(records))
    rows = analyze_meso(plan, records, _w_by_n(plan, table))
    res.tables["meso.csv"] = csv_text(("n", "count", "tau1_per_column", "se", "ci_lo", "ci_hi",
                                       "jump_histogram"), rows)
    res.data["meso"] = rows
    return res


def analyze_tf_tail(plan, records) -> ExperimentResult:
    res = ExperimentResult("tf_tail")
    table = scaling_table(plan, sample_sets(records))
    W = _w_by_n(plan, table)
    freq = tf_tail_frequencies(sample_sets(records, key="tf"), W, plan.tf_levels)
    res.tables["scaling.csv"] = table.to_csv()
    res.tables["tf_tail.csv"] = csv_text(("n", "z", "frequency", "ci_lo", "ci_hi"), freq)
    meso = analyze_meso(plan, records, W)
    res.tables["meso.csv"] = csv_text(("n", "count", "tau1_per_column", "se", "ci_lo", "ci_hi",
                                       "jump_histogram"), meso)
    res.data.update(table=table, tf_freq=freq, meso=meso)
    mono = all(freq[i][2] >= freq[i + 1][2] for i in range(len(freq) - 1)
               if freq[i][0] == freq[i + 1][0])
    res.gates.append(Gate("AC7b", mono, "TF tail frequencies nonincreasing in z per n"))
    return res


def analyze_corridor(plan, records) -> ExperimentResult:
    res = ExperimentResult("corridor")
    xs = sample_sets(records, "corridor")
    table = summarize(xs)
    try:
        mu = estimate_mu(table).mu
    except StatsError:
        mu = table.rows[-1].mean / table.rows[-1].n
    rows, envelope = [], True
    for s in xs:
        rs = [r for r in _ok(records, "corridor") if r["n"] == s.n]
        ym = np.array([r["values"]["y_minus"] for r in rs])
        yp = np.array([r["values"]["y_plus"] for r in rs])
        x = np.array([r["x"] for r in rs])
        envelope &= bool(np.all(ym <= x + 1e-9) and np.all(x <= yp + 1e-9))
        sd = float(np.std(x, ddof=1))
        for label, y in (("minus", ym), ("plus", yp)):
            z = (y - s.n * mu) / sd if sd > 0 else np.full(len(y), math.nan)
            th = math.nan
            if len(y) >= 1000 and np.std(y) > 0:
                th = fit_tail_exponent(SampleSet(s.n, y)).theta
            rows.append((s.n, label, corridor_width(plan, s.n), len(y), float(np.mean(z)),
                         float(np.std(z, ddof=1)), th))
    res.tables["corridor.csv"] = csv_text(("n", "sign", "width", "count", "z_mean", "z_sd",
                                           "theta_hat"), rows)
    res.tables["scaling.csv"] = table.to_csv()
    res.data.update(rows=rows, mu=mu)
    res.gates.append(Gate("corridor-envelope", envelope, "Y- <= X_n <= Y+ on every instance"))
    return res


def run_corridor(plan, records=None, workers=1) -> ExperimentResult:
    records = compute_records(plan, workers=workers) if records is None else records
    res = analyze_corridor(plan, records)
    res.gates.append(failure_gate(plan, records))
    return res


def analyze_assumptions(plan, records) -> ExperimentResult:
    res = ExperimentResult("assumptions")
    lines = []

    def add(num, passed, stat):
        lines.append((num, "pass" if passed else "fail", stat))

    second = plan.direction_angles[1] if len(plan.direction_angles) > 1 else math.pi / 6
    a0 = [r["x"] for r in _ok(records, "p2p", 0.0) if r["n"] == plan.audit_n]
    a1 = [r["x"] for r in _ok(records, "p2p", second) if r["n"] == plan.audit_n]
    ks = sstats.ks_2samp(a0, a1) if a0 and a1 else None
    add(1, ks is not None and ks.pvalue > 0.01,
        f"KS p = {ks.pvalue:.4f} (0 vs {math.degrees(second):g} deg, n={plan.audit_n:g})"
        if ks else "no samples")
    p2p = [r for r in records if r["kind"] == "p2p"]
    ok_frac = sum(r["status"] == "ok" for r in p2p) / max(len(p2p), 1)
    add(2, ok_frac >= 1 - plan.max_failure_fraction, f"solver success rate {ok_frac:.4f}")
    sets = sample_sets(records)
    table = summarize(sets)
    speed = table.column("mean") / table.n
    se = table.column("se_mean") / table.n
    mono = all(speed[i + 1] <= speed[i] + 3 * math.hypot(se[i], se[i + 1])
               for i in range(len(speed) - 1))
    add(3, bool(np.all(speed > 0)) and mono,
        "mean/n = " + ", ".join(f"{v:.5f}" for v in speed) + " (nonincreasing within 3 SE)")
    theta = pooled_theta(plan, sets)
    d = [(s.n, (math.sqrt(s.n) / qhat_empirical(s, theta)) ** theta) for s in sets
         if len(s.values) >= 100]
    add(4, bool(d) and d[-1][1] >= 0.5 * d[0][1],
        f"D_hat at kappa = theta_hat {theta:.3f}: "
        + ", ".join(f"n={n:g}:{v:.3f}" for n, v in d) if d else "needs >= 100 samples per n")
    try:
        est = estimate_mu(table)
        low = all(r.mean >= est.mu * r.n - 3 * math.hypot(r.se_mean, r.n * (est.ci[1] - est.mu)
                                                           / 1.96) for r in table.rows)
        add(5, low, f"A_n >= -3 SE with mu_hat = {est.mu:.6f}")
    except StatsError as exc:
        add(5, False, str(exc))
    loc = np.array([r["x"] for r in _ok(records, "local")])
    add(6, len(loc) > 0 and bool(np.all(np.isfinite(loc))),
        f"max X in B_3: median {np.median(loc):.3f}, q99 {np.quantile(loc, 0.99):.3f}"
        if len(loc) else "no samples")
    met = _ok(records, "metric")
    tri = [r["values"]["tri_excess"] for r in met]
    asym = [r["values"]["asym"] for r in met]
    selfd = [r["values"]["self"] for r in met]
    viol = sum(e > 1e-9 for e in tri)
    sym_tol = 1e-9 if plan.model.is_grid else 0.0
    sym_ok = all(a <= sym_tol for a in asym) and all(s == 0 for s in selfd)
    add(7, viol == 0 and sym_ok and len(met) > 0,
        f"{viol} triangle violations over {len(met) * plan.triples_per_instance} triples; "
        f"max asymmetry {max(asym, default=0):.3g}; max X_uu {max(selfd, default=0):.3g}")
    res.gates.append(Gate("AC2", viol == 0 and sym_ok and len(met) > 0, lines[-1][2]))
    dfc = np.array([r["values"]["defect"] for r in _ok(records, "defect")])
    add(8, len(dfc) > 0 and bool(np.all(dfc >= -1e-9)),
        f"gamma defect: min {dfc.min():.3g}, median {np.median(dfc):.3g}, max {dfc.max():.3g}"
        if len(dfc) else "no samples")
    sd = table.column("sd")
    sse = table.column("se_sd")
    grows = bool(np.all(sd > 0)) and all(sd[i + 1] >= sd[i] - 3 * math.hypot(sse[i], sse[i + 1])
                                         for i in range(len(sd) - 1))
    add(9, grows, "SD = " + ", ".join(f"{v:.4f}" for v in sd))
    ltf = _ok(records, "ltf")
    if ltf:
        big = sum(r["values"]["excess"] >= r["values"]["scale"] for r in ltf)
        add(10, big / len(ltf) <= 0.05,
            f"P[H - baseline >= n^(4/5)] = {big}/{len(ltf)}")
    else:
        add(10, False, "no samples")
    r1 = _ok(records, "resamp1")
    if r1:
        st = np.array([r["values"]["max_change"] / r["values"]["log_n"] for r in r1])
        add(11, float(np.quantile(st, 0.9)) <= 3.0,
            f"max |X - X^Lambda| / log n: median {np.median(st):.3f}, q90 "
            f"{np.quantile(st, 0.9):.3f}")
    else:
        add(11, False, "no samples")
    lc = _ok(records, "locality")
    conf = sum(r["values"]["confined"] for r in lc)
    good = sum((not r["values"]["confined"]) or r["values"]["unchanged"] for r in lc)
    need = math.ceil(0.99 * len(lc))
    add(12, len(lc) > 0 and good >= need,
        f"{good}/{len(lc)} instances pass ({conf} geodesics confined to Lambda^-)")
    res.gates.append(Gate("AC3", len(lc) > 0 and good >= need, lines[-1][2]))
    res.gates.append(Gate("AC9", lines[0][1] == "pass", lines[0][2]))
    res.tables["assumptions.csv"] = csv_text(("assumption", "outcome", "statistic"),
                                             [(str(a), b, '"' + c.replace('"', "'") + '"')
                                              for a, b, c in lines])
    res.data["ledger"] = lines
    return res


def run_assumption_audit(plan, records=None, workers=1) -> ExperimentResult:
    records = compute_records(plan, workers=workers) if records is None else records
    res = analyze_assumptions(plan, records)
    res.gates.append(failure_gate(plan, records))
    return res


@dataclass(frozen=True)
class VarDecompReport:
    total_variance: tuple[float, float]
    increments: tuple[tuple[float, float], ...]
    increment_sum: tuple[float, float]
    difference: tuple[float, float]
    coverage_fraction: float
    outer: int
    inner: int


def _jackknife(values: np.ndarray, stat) -> float:
    n = len(values)
    reps = np.array([stat(np.delete(values, i, axis=0)) for i in range(n)])
    return float(math.sqrt((n - 1) / n * np.sum((reps - reps.mean()) ** 2)))


def var_decomp_report(plan, records) -> VarDecompReport:
    rs = sorted(_ok(records, "vd"), key=lambda r: r["index"])
    if len(rs) < 2:
        raise ExperimentError("variance decomposition needs at least two outer samples")
    x = np.array([r["x"] for r in rs])
    inc = np.array([r["values"]["inc"] for r in rs])
    O = len(rs)
    data = np.column_stack([x, inc])

    def diff(d):
        return d[:, 1:].sum(axis=1).mean() - d[:, 0].var(ddof=1)

    var = float(x.var(ddof=1))
    var_se = _jackknife(x, lambda v: v.var(ddof=1))
    per = tuple((float(c.mean()), float(c.std(ddof=1) / math.sqrt(O))) for c in inc.T)
    tot = inc.sum(axis=1)
    cov = [r["values"]["covered"] for r in rs if r["values"].get("covered") is not None]
    return VarDecompReport(
        (var, var_se), per, (float(tot.mean()), float(tot.std(ddof=1) / math.sqrt(O))),
        (float(diff(data)), _jackknife(data, diff)),
        float(np.mean(cov)) if cov else math.nan, O, plan.vd_inner)


def analyze_var_decomp(plan, records) -> ExperimentResult:
    res = ExperimentResult("var_decomp")
    rep = var_decomp_report(plan, records)
    res.tables["var_decomp.csv"] = csv_text(
        ("block", "increment", "se"), [(k, v, s) for k, (v, s) in enumerate(rep.increments)])
    res.tables["var_total.csv"] = csv_text(
        ("quantity", "value", "se"),
        [("direct_variance", *rep.total_variance), ("increment_sum", *rep.increment_sum),
         ("difference", *rep.difference), ("coverage_fraction", rep.coverage_fraction, 0.0)])
    res.data["report"] = rep
    neg = all(v >= -3 * s for v, s in rep.increments)
    res.gates.append(Gate("vd-nonnegative", neg, "increments >= -3 SE"))
    d, se = rep.difference
    res.gates.append(Gate("AC5", abs(d) <= 3 * se,
                          f"|sum increments - Var| = {abs(d):.4g} <= 3 x {se:.4g}"))
    return res


def run_var_decomp(plan, records=None, workers=1, functional=None) -> ExperimentResult:
    if functional is not None:
        plan = replace(plan, vd_functional=functional)
    records = compute_records(plan, workers=workers) if records is None else records
    res = analyze_var_decomp(plan, records)
    res.gates.append(failure_gate(plan, records))
    return res


def analyze_sample(plan, records) -> ExperimentResult:
    res = ExperimentResult("sample")
    sets = []
    for a in plan.direction_angles:
        sets += sample_sets(records, angle=a)
    rows = []
    for a in plan.direction_angles:
        for s in sample_sets(records, angle=a):
            v = s.values
            rows.append((s.n, a, len(v), v.mean(), v.std(ddof=1), v.min(), v.max()))
    res.tables["samples.csv"] = csv_text(("n", "angle", "count", "mean", "sd", "min", "max"), rows)
    return res


ANALYZERS = {"sample": analyze_sample, "concentration": analyze_concentration,
             "kpz": analyze_kpz, "nonrandom": analyze_nonrandom, "lowertail": analyze_lowertail,
             "tf_tail": analyze_tf_tail, "corridor": analyze_corridor,
             "assumptions": analyze_assumptions, "var_decomp": analyze_var_decomp}


def analyze(plan: ExperimentPlan, records: list[dict]) -> ExperimentResult:
    """Tables and gates of a plan from its records (any order)."""
    records = sorted(records, key=lambda r: (TASK_KINDS.index(r["kind"]), r["n"], r["angle"],
                                             r["index"]))
    res = ANALYZERS[plan.experiment](plan, records)
    res.gates.append(failure_gate(plan, records))
    res.failed = sum(r["status"] != "ok" for r in records)
    res.total = len(records)
    return res
