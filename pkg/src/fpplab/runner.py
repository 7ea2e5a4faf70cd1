"""Run store: append-only JSONL sample log, CSV summaries, manifest and
reports.

Layout of an output directory::

    samples.jsonl    one RunRecord per completed task, in task order
    timings.jsonl    wall-clock time per task (not part of the deterministic output)
    manifest.json    config digest, version, seed range
    config.yaml      the config as run
    *.csv            summary tables (17 significant digits, LF, schema_version column)
    gates.txt        one verdict line per gate
"""
from __future__ import annotations

import json
import math
import subprocess
import sys
import time
from pathlib import Path

from . import __version__
from .config import RunConfig, config_digest, parse_config, serialize
from .experiments import ExperimentPlan, Task, analyze, run_task, tasks
from .stats import SCHEMA_VERSION, ScalingTable

LOG = "samples.jsonl"
TIMINGS = "timings.jsonl"
MANIFEST = "manifest.json"
GATES = "gates.txt"
EXIT_OK, EXIT_GATE, EXIT_USAGE, EXIT_INTERRUPTED = 0, 1, 2, 130


class RunError(RuntimeError):
    pass


def _enc(v) -> str:
    """JSON text with floats printed to 17 significant digits."""
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_enc(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_enc(x) for x in v) + "]"
    if hasattr(v, "item"):
        return _enc(v.item())
    raise TypeError(f"cannot encode {type(v).__name__}")


def record_line(cfg: RunConfig, digest: str, rec: dict) -> str:
    full = {"schema_version": SCHEMA_VERSION, "experiment": cfg.plan.experiment,
            "model_kind": cfg.plan.model.kind, "digest": digest, "kind": rec["kind"],
            "n": rec["n"], "angle": rec["angle"], "index": rec["index"], "seed": rec["seed"],
            "x": rec["x"], "tf": rec["tf"], "status": rec["status"], "values": rec["values"]}
    return _enc(full) + "\n"


def _key(rec: dict) -> tuple:
    return (rec["kind"], float(rec["n"]), float(rec["angle"]), int(rec["index"]))


def read_log(path: Path) -> list[dict]:
    """Complete records of a log. A trailing partial line (from a killed
    writer) is ignored."""
    if not path.exists():
        return []
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    return [json.loads(line) for line in lines[:-1] if line]


def _truncate_partial(path: Path):
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        cut = data.rfind(b"\n") + 1
        with open(path, "r+b") as fh:
            fh.truncate(cut)


def git_version() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _pool_task(args):
    plan, t = args
    t0 = time.perf_counter()
    rec = run_task(plan, t)
    return rec, (time.perf_counter() - t0) * 1000.0


def _stream(plan: ExperimentPlan, todo: list[Task], workers: int):
    if workers <= 1 or len(todo) < 2:
        for t in todo:
            yield _pool_task((plan, t))
        return
    import multiprocessing as mp
    with mp.get_context("fork").Pool(workers) as pool:
        yield from pool.imap(_pool_task, [(plan, t) for t in todo], chunksize=2)


def execute(cfg: RunConfig, stop_after: int | None = None, out=None) -> int:
    """Run (or resume) an experiment and write its artifacts.

    Returns 0 on success, 1 if a declared gate or the failed-seed limit
    fails, 2 on a usage problem and 130 when stopped early by ``stop_after``
    (a test hook emulating an interruption after that many new records).
    """
    out = out or sys.stdout
    plan = cfg.plan
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    log = outdir / LOG
    digest = config_digest(cfg)
    if log.exists() and log.stat().st_size > 0:
        if not cfg.resume:
            print(f"error: {log} exists; pass --resume to continue it", file=out)
            return EXIT_USAGE
        _truncate_partial(log)
        old = read_log(log)
        if old and old[0].get("digest") != digest:
            print("error: existing log was written with a different config", file=out)
            return EXIT_USAGE
    else:
        old = []
    (outdir / "config.yaml").write_text(serialize(cfg), encoding="utf-8", newline="\n")
    done = {_key(r) for r in old}
    all_tasks = tasks(plan)
    todo = [t for t in all_tasks if t.key not in done]
    print(f"{plan.experiment}: {len(all_tasks)} tasks, {len(done)} already logged, "
          f"{len(todo)} to run", file=out)
    written = 0
    with open(log, "a", encoding="utf-8", newline="\n") as fh, \
            open(outdir / TIMINGS, "a", encoding="utf-8", newline="\n") as th:
        for rec, ms in _stream(plan, todo, cfg.workers):
            if stop_after is not None and written >= stop_after:
                print(f"stopped after {written} new records", file=out)
                return EXIT_INTERRUPTED
            fh.write(record_line(cfg, digest, rec))
            fh.flush()
            th.write(_enc({"key": list(_key(rec)), "wall_ms": round(ms, 3)}) + "\n")
            written += 1
    records = read_log(log)
    # canonical order so the summaries do not depend on the resume pattern
    order = {t.key: i for i, t in enumerate(all_tasks)}
    records = sorted((r for r in records if _key(r) in order), key=lambda r: order[_key(r)])
    res = analyze(plan, records)
    for name, text in res.tables.items():
        (outdir / name).write_text(text, encoding="utf-8", newline="\n")
    lines = [g.line() for g in res.gates]
    (outdir / GATES).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    seeds = [r["seed"] for r in records]
    manifest = {"schema_version": SCHEMA_VERSION, "experiment": plan.experiment,
                "model_kind": plan.model.kind, "config_digest": digest,
                "version": git_version(), "seed_base": plan.seed_base,
                "tasks": len(all_tasks), "records": len(records), "failed": res.failed,
                "seed_min": min(seeds, default=None), "seed_max": max(seeds, default=None),
                "tables": sorted(res.tables)}
    (outdir / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8",
                                   newline="\n")
    for line in lines:
        print(line, file=out)
    declared = set(plan.gates) | {"failures"}
    failed = [g.id for g in res.gates if g.id in declared and not g.passed]
    if failed:
        print(f"failed gates: {', '.join(failed)}", file=out)
        return EXIT_GATE
    return EXIT_OK


def find_runs(root: Path) -> list[Path]:
    root = Path(root)
    if (root / MANIFEST).exists():
        return [root]
    if not root.is_dir():
        return []
    return sorted(p.parent for p in root.glob(f"*/{MANIFEST}"))


def report(output_dir, plots: bool = False, out=None) -> int:
    """Print the scaling table and gate verdicts of every run below
    ``output_dir``; with ``plots`` also write PNG figures next to them."""
    out = out or sys.stdout
    runs = find_runs(Path(output_dir))
    if not runs:
        print(f"no runs found in {output_dir}", file=out)
        return EXIT_USAGE
    for run in runs:
        manifest = json.loads((run / MANIFEST).read_text())
        print(f"== {run} ({manifest['experiment']}, {manifest['model_kind']}, "
              f"{manifest['records']} records, {manifest['failed']} failed)", file=out)
        scaling = run / "scaling.csv"
        if scaling.exists():
            table = ScalingTable.from_csv(scaling.read_text())
            cols = ("n", "count", "mean", "sd", "qhat", "w", "theta_hat")
            print("  " + " ".join(f"{c:>12}" for c in cols), file=out)
            for r in table.rows:
                print("  " + " ".join(f"{getattr(r, c):>12.6g}" for c in cols), file=out)
        if (run / GATES).exists():
            for line in (run / GATES).read_text().splitlines():
                print(f"  {line}", file=out)
        if plots:
            for p in make_plots(run):
                print(f"  wrote {p}", file=out)
    return EXIT_OK


def _read_csv(path: Path) -> list[dict]:
    import csv
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def make_plots(run: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    if (run / "histograms.csv").exists():
        rows = _read_csv(run / "histograms.csv")
        for n in sorted({float(r["n"]) for r in rows}):
            rs = [r for r in rows if float(r["n"]) == n]
            lo = [float(r["bin_lo"]) for r in rs]
            width = [float(r["bin_hi"]) - float(r["bin_lo"]) for r in rs]
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.bar(lo, [int(r["count"]) for r in rs], width=width, align="edge")
            ax.set_xlabel("(X_n - mean) / SD")
            ax.set_ylabel("count")
            ax.set_title(f"n = {n:g}")
            path = run / f"hist_n{n:g}.png"
            fig.savefig(path, dpi=100)
            plt.close(fig)
            written.append(path)
    if (run / "kpz.csv").exists():
        rows = _read_csv(run / "kpz.csv")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.semilogx([float(r["n"]) for r in rows], [float(r["r"]) for r in rows], "o-")
        ax.set_xlabel("n")
        ax.set_ylabel("r_n")
        path = run / "r_n.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    if (run / "tf_tail.csv").exists():
        rows = _read_csv(run / "tf_tail.csv")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for n in sorted({float(r["n"]) for r in rows}):
            rs = [r for r in rows if float(r["n"]) == n]
            ax.semilogy([float(r["z"]) for r in rs],
                        [max(float(r["frequency"]), 1e-6) for r in rs], "o-", label=f"n={n:g}")
        ax.set_xlabel("z")
        ax.set_ylabel("P[TF >= z W_n]")
        ax.legend()
        path = run / "tf_tail.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))

