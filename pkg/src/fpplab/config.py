"""Run configuration: a YAML key tree mapped onto the dataclass specs.

Grammar (every key optional except ``experiment``; unknown keys are
rejected)::

    experiment: concentration        # one of experiments.EXPERIMENTS
    seed: 0                          # plan.seed_base
    workers: 1
    output_dir: runs/concentration
    resume: false
    model:  {kind: howard_newman, beta: 2.0, rgg_threshold: 1.5, r_cut: 4.0,
             max_doublings: 3,
             riemannian: {d1: 0.5, d2: 1.5, grid_step: 0.25, connectivity: 8,
                          kernel: {name: bump4}}}
    field:  {kind: poisson_marked, ppp_rate: 1.0, grid_step: 0.25,
             marks: {name: exponential, scale: 1.0, low: 0.0, high: 1.0, value: 1.0}}
    plan:   {n_grid: [64, 128, 256], samples_per_n: 2000, ...}  # ExperimentPlan fields

``model.kind`` defaults to ``howard_newman``. Angles are in radians.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import types
import typing
from dataclasses import dataclass

import yaml

from .experiments import EXPERIMENTS, ExperimentPlan
from .field import FieldSpec
from .geometry import Rect
from .models import ModelSpec

TOP_KEYS = ("experiment", "seed", "workers", "output_dir", "resume", "model", "field", "plan")
_PLAN_SKIP = ("experiment", "model", "field", "seed_base")
_FIELD_SKIP = ("window", "master_seed")
_DUMMY_WINDOW = Rect(0.0, 1.0, 0.0, 1.0)


class ConfigError(ValueError):
    """Invalid configuration. ``path`` is the offending key path, ``line`` and
    ``column`` (1-based) locate syntax errors."""

    def __init__(self, message: str, path: str = "", line: int | None = None,
                 column: int | None = None):
        self.path, self.line, self.column = path, line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        where += f"{path}: " if path else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class RunConfig:
    plan: ExperimentPlan
    workers: int = 1
    output_dir: str = "runs"
    resume: bool = False

    @property
    def model(self) -> ModelSpec:
        return self.plan.model

    @property
    def field(self) -> FieldSpec:
        return self.plan.field

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("must be at least 1", "workers")


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError("expected a mapping", path)
        return _build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError("expected a list", path)
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"expected {len(args)} entries", path)
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", path)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", path)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", path)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", path)
        return value
    raise ConfigError(f"unsupported type {tp}", path)


def _build(cls, data: dict, path: str, skip=(), extra=None):
    hints = _hints(cls)
    names = [f.name for f in dataclasses.fields(cls) if f.name not in skip]
    for key in data:
        if key not in names:
            raise ConfigError("unknown key", f"{path}.{key}" if path else str(key))
    kwargs = dict(extra or {})
    for key, value in data.items():
        kwargs[key] = _convert(hints[key], value, f"{path}.{key}" if path else key)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        key = next((n for n in names if msg.startswith(n + " ") or f" {n} " in f" {msg} "), None)
        where = f"{path}.{key}" if path and key else (path or key or cls.__name__)
        raise ConfigError(msg, where) from None


def config_from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    for key in data:
        if key not in TOP_KEYS:
            raise ConfigError("unknown key", str(key))
    if "experiment" not in data:
        raise ConfigError("missing required key", "experiment")
    exp = _convert(str, data["experiment"], "experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"must be one of {', '.join(EXPERIMENTS)}", "experiment")
    model_data = dict(data.get("model") or {})
    model_data.setdefault("kind", "howard_newman")
    model = _build(ModelSpec, model_data, "model")
    fs = _build(FieldSpec, dict(data.get("field") or {}), "field", skip=_FIELD_SKIP,
                extra={"window": _DUMMY_WINDOW})
    plan = _build(ExperimentPlan, dict(data.get("plan") or {}), "plan", skip=_PLAN_SKIP,
                  extra={"experiment": exp, "model": model, "field": fs,
                         "seed_base": _convert(int, data.get("seed", 0), "seed")})
    return RunConfig(plan, _convert(int, data.get("workers", default_workers()), "workers"),
                     _convert(str, data.get("output_dir", f"runs/{exp}"), "output_dir"),
                     _convert(bool, data.get("resume", False), "resume"))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("FPP_LAB_WORKERS", "1")))
    except ValueError:
        return 1


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML config, filling defaults."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        msg = getattr(exc, "problem", None) or str(exc)
        if mark is not None:
            raise ConfigError(msg, line=mark.line + 1, column=mark.column + 1) from None
        raise ConfigError(msg) from None
    return config_from_dict(data if data is not None else {})


def _plain(obj, skip=()):
    out = {}
    for f in dataclasses.fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = _plain(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def config_to_dict(cfg: RunConfig) -> dict:
    p = cfg.plan
    return {"experiment": p.experiment, "seed": p.seed_base, "workers": cfg.workers,
            "output_dir": cfg.output_dir, "resume": cfg.resume,
            "model": _plain(p.model), "field": _plain(p.field, _FIELD_SKIP),
            "plan": _plain(p, _PLAN_SKIP)}


def serialize(cfg: RunConfig) -> str:
    """YAML text that parses back to an equal config."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_digest(cfg: RunConfig) -> str:
    """SHA-256 over every setting that affects results (not workers, output
    location or the resume flag)."""
    d = config_to_dict(cfg)
    for key in ("workers", "output_dir", "resume"):
        d.pop(key)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
