import io
from dataclasses import replace

from fpplab.cli import main
from fpplab.config import config_from_dict
from fpplab.runner import EXIT_GATE, EXIT_INTERRUPTED, EXIT_OK, EXIT_USAGE, LOG, execute

BASE = ["--n", "8", "16", "--samples", "6"]


def artifacts(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())
            if p.suffix in (".csv", ".jsonl", ".txt") and p.name != "timings.jsonl"}


def cfg(out, **kw):
    data = {"experiment": "concentration", "output_dir": str(out),
            "plan": {"n_grid": [8, 16], "samples_per_n": 6}}
    data.update(kw)
    return config_from_dict(data)


def test_small_run_writes_artifacts(tmp_path):
    assert main(["concentration", *BASE, "--out", str(tmp_path)]) == EXIT_OK
    names = {p.name for p in tmp_path.iterdir()}
    assert {"samples.jsonl", "manifest.json", "config.yaml", "gates.txt", "scaling.csv",
            "histograms.csv"} <= names
    lines = (tmp_path / LOG).read_text().splitlines()
    assert len(lines) == 12
    assert (tmp_path / "scaling.csv").read_text().splitlines()[0].endswith("schema_version")


def test_existing_log_needs_resume(tmp_path):
    assert main(["concentration", *BASE, "--out", str(tmp_path)]) == EXIT_OK
    assert main(["concentration", *BASE, "--out", str(tmp_path)]) == EXIT_USAGE


def test_resume_complete_log_is_noop(tmp_path):
    assert execute(cfg(tmp_path), out=io.StringIO()) == EXIT_OK
    before = artifacts(tmp_path)
    buf = io.StringIO()
    assert execute(cfg(tmp_path, resume=True), out=buf) == EXIT_OK
    assert "0 to run" in buf.getvalue()
    assert artifacts(tmp_path) == before


def test_interrupt_then_resume_matches_clean_run(tmp_path):
    clean, broken = tmp_path / "clean", tmp_path / "broken"
    assert execute(cfg(clean), out=io.StringIO()) == EXIT_OK
    assert execute(cfg(broken), stop_after=5, out=io.StringIO()) == EXIT_INTERRUPTED
    with open(broken / LOG, "a") as fh:
        fh.write('{"partial": ')
    assert execute(cfg(broken, resume=True), out=io.StringIO()) == EXIT_OK
    assert artifacts(clean) == artifacts(broken)


def test_resume_rejects_changed_config(tmp_path):
    assert execute(cfg(tmp_path), out=io.StringIO()) == EXIT_OK
    assert execute(cfg(tmp_path, resume=True, seed=5), out=io.StringIO()) == EXIT_USAGE


def test_worker_count_does_not_change_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert execute(cfg(a, workers=1), out=io.StringIO()) == EXIT_OK
    assert execute(cfg(b, workers=2), out=io.StringIO()) == EXIT_OK
    assert artifacts(a) == artifacts(b)


def test_report(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == EXIT_USAGE
    assert "no runs found" in capsys.readouterr().out
    assert main(["concentration", *BASE, "--out", str(tmp_path / "run")]) == EXIT_OK
    capsys.readouterr()
    assert main(["report", str(tmp_path), "--plots"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "concentration" in out and "qhat" in out
    assert (tmp_path / "run" / "hist_n8.png").exists()
    assert (tmp_path / "run" / "hist_n16.png").exists()


def test_declared_gate_failure_exits_one(tmp_path):
    c = cfg(tmp_path)
    c = replace(c, plan=replace(c.plan, gates=("degenerate",)))
    plan = replace(c.plan, model=replace(c.plan.model, kind="rgg", rgg_threshold=0.3))
    assert execute(replace(c, plan=plan), out=io.StringIO()) == EXIT_GATE


def test_bad_config_is_usage_error(tmp_path, capsys):
    assert main(["kpz", "--set", "model.beta=0.5", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "model.beta" in capsys.readouterr().err


def test_set_and_workers_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FPP_LAB_WORKERS", "2")
    assert main(["sample", *BASE, "--set", "plan.self_check_fraction=0.0",
                 "--out", str(tmp_path)]) == EXIT_OK
    assert "workers: 2" in (tmp_path / "config.yaml").read_text()
