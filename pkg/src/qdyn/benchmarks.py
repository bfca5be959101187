"""Standard test objectives and seeded experiment plans.

A plan is the cross product functions x modes x schedules x seeds.  Every
cell runs :func:`qdyn.sampler.optimize` independently; the report
aggregates success rates and medians per (function, mode, schedule).
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .errors import BudgetExhausted, QdynError, UnknownFunctionError, ValidationError
from .sampler import MODES, AnnealingSchedule, Objective, OptimizerConfig, optimize


def _sphere(X):
    return np.sum(X**2, axis=-1)


def _rastrigin(X):
    d = X.shape[-1]
    return 10.0 * d + np.sum(X**2 - 10.0 * np.cos(2.0 * np.pi * X), axis=-1)


def _ackley(X):
    d = X.shape[-1]
    r = np.sqrt(np.sum(X**2, axis=-1) / d)
    c = np.sum(np.cos(2.0 * np.pi * X), axis=-1) / d
    return -20.0 * np.exp(-0.2 * r) - np.exp(c) + 20.0 + math.e


def _rosenbrock(X):
    return np.sum(100.0 * (X[..., 1:] - X[..., :-1] ** 2) ** 2 + (1.0 - X[..., :-1]) ** 2,
                  axis=-1)


def _styblinski_tang(X):
    return 0.5 * np.sum(X**4 - 16.0 * X**2 + 5.0 * X, axis=-1)


# root of 4x^3 - 32x + 5 = 0 nearest -2.9
_ST_X = -2.903534027771178

# name -> (vectorised form, (lower, upper), minimiser coordinate, minimum per dimension or None)
_FUNCTIONS: dict[str, tuple] = {
    "sphere": (_sphere, (-5.12, 5.12), 0.0),
    "rastrigin": (_rastrigin, (-5.12, 5.12), 0.0),
    "ackley": (_ackley, (-32.768, 32.768), 0.0),
    "rosenbrock": (_rosenbrock, (-5.0, 10.0), 1.0),
    "styblinski_tang": (_styblinski_tang, (-5.0, 5.0), _ST_X),
}

FUNCTION_NAMES = tuple(_FUNCTIONS)

DEFAULT_THRESHOLDS = {"sphere": 1e-2, "rastrigin": 1e-2, "ackley": 1e-2,
                      "rosenbrock": 1.0, "styblinski_tang": 1e-2}


@dataclass
class BenchmarkFunction(Objective):
    known_minimum_position: Optional[np.ndarray] = None
    known_minimum_value: float = 0.0


def builtin_function(name: str, dimension: int) -> BenchmarkFunction:
    """Standard-form benchmark with its canonical box bounds."""
    if name not in _FUNCTIONS:
        raise UnknownFunctionError(
            f"unknown function {name!r}; choose from {', '.join(FUNCTION_NAMES)}")
    if int(dimension) != dimension or dimension < 1:
        raise ValidationError(f"dimension must be a positive integer, got {dimension!r}")
    if name == "rosenbrock" and dimension < 2:
        raise ValidationError("rosenbrock needs dimension >= 2")
    vec, (lo, hi), xstar = _FUNCTIONS[name]
    x_min = np.full(dimension, xstar)
    f_min = float(vec(x_min))
    return BenchmarkFunction(
        func=lambda x, _f=vec: float(_f(np.asarray(x, dtype=float))),
        lower=np.full(dimension, lo), upper=np.full(dimension, hi),
        batch=vec, name=name, known_minimum_position=x_min, known_minimum_value=f_min)


@dataclass(frozen=True)
class ScheduleSpec:
    """Plan-level schedule description, resolved per function.

    ``kind == "annealed"`` uses the default schedule for the function's
    bounds (any of ``d_initial``, ``decay``, ``d_min``, ``inner_steps``
    overriding it).  ``kind == "fixed"`` holds D at the annealed schedule's
    ``d_min`` for the same total number of inner steps.
    """
    id: str
    kind: str = "annealed"
    d_initial: Optional[float] = None
    decay: Optional[float] = None
    d_min: Optional[float] = None
    inner_steps: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("annealed", "fixed"):
            raise ValidationError(f"schedule kind must be 'annealed' or 'fixed', got {self.kind!r}")

    def resolve(self, obj: Objective) -> AnnealingSchedule:
        overrides = {k: v for k, v in (("d_initial", self.d_initial), ("decay", self.decay),
                                       ("d_min", self.d_min), ("inner_steps", self.inner_steps))
                     if v is not None}
        annealed = AnnealingSchedule.default_for(obj, **overrides)
        if self.kind == "annealed":
            return annealed
        return AnnealingSchedule.fixed(annealed.d_min, annealed.total_steps)


@dataclass
class ExperimentPlan:
    functions: list[tuple[str, int]]
    modes: list[str]
    schedules: list[ScheduleSpec]
    seeds: list[int]
    budget: int = 200_000
    thresholds: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.functions and self.modes and self.schedules and self.seeds):
            raise ValidationError("plan lists must all be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("plan seeds must be distinct")
        ids = [s.id for s in self.schedules]
        if len(set(ids)) != len(ids):
            raise ValidationError("schedule ids must be distinct")
        for name, dim in self.functions:
            builtin_function(name, dim)
        for mode in self.modes:
            self.base_config(mode)

    def threshold(self, name: str) -> float:
        return self.thresholds.get(name, DEFAULT_THRESHOLDS[name])

    def base_config(self, mode: str) -> OptimizerConfig:
        """Config for one mode: per-mode defaults, then ``config[mode]``, then shared keys."""
        shared = {k: v for k, v in self.config.items() if k not in MODES}
        params = {**shared, **self.config.get(mode, {}), "max_evaluations": self.budget}
        try:
            return OptimizerConfig.for_mode(mode, **params)
        except TypeError as exc:
            raise ValidationError(f"bad optimizer config for mode {mode!r}: {exc}") from exc

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        known = {"functions", "modes", "schedules", "seeds", "budget", "thresholds", "config"}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown plan field(s): {', '.join(sorted(extra))}")
        try:
            functions = [(f["name"], int(f["dim"])) for f in data["functions"]]
            schedules = [ScheduleSpec(**s) for s in data["schedules"]]
            return cls(functions=functions, modes=list(data["modes"]), schedules=schedules,
                       seeds=[int(s) for s in data["seeds"]],
                       budget=int(data.get("budget", 200_000)),
                       thresholds=dict(data.get("thresholds", {})),
                       config=dict(data.get("config", {})))
        except KeyError as exc:
            raise ValidationError(f"plan is missing field {exc}") from exc
        except TypeError as exc:
            raise ValidationError(f"malformed plan entry: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def default_plan() -> ExperimentPlan:
    text = resources.files("qdyn").joinpath("data/default_plan.json").read_text()
    return ExperimentPlan.from_dict(json.loads(text))


@dataclass(frozen=True)
class RunRow:
    function: str
    dim: int
    mode: str
    schedule_id: str
    seed: int
    best_value: float
    evaluations: int
    evaluations_to_threshold: Optional[int]
    success: bool
    budget_exhausted: bool
    error: Optional[str] = None


@dataclass
class CellSummary:
    function: str
    dim: int
    mode: str
    schedule_id: str
    success_rate: float
    median_best_value: float
    median_evaluations_to_threshold: Optional[float]
    rows: list[RunRow]


@dataclass
class ExperimentReport:
    cells: list[CellSummary]

    def cell(self, function: str, mode: str, schedule_id: str) -> CellSummary:
        for c in self.cells:
            if (c.function, c.mode, c.schedule_id) == (function, mode, schedule_id):
                return c
        raise KeyError((function, mode, schedule_id))

    def to_dict(self) -> dict:
        return {"cells": [
            {"function": c.function, "dim": c.dim, "mode": c.mode,
             "schedule_id": c.schedule_id, "success_rate": c.success_rate,
             "median_best_value": _finite_or_none(c.median_best_value),
             "median_evaluations_to_threshold": c.median_evaluations_to_threshold,
             "rows": [
                 {"seed": r.seed, "best_value": _finite_or_none(r.best_value), "evaluations": r.evaluations,
                  "evaluations_to_threshold": r.evaluations_to_threshold,
                  "success": r.success, "budget_exhausted": r.budget_exhausted,
                  "error": r.error}
                 for r in c.rows]}
            for c in self.cells]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["function", "dim", "mode", "schedule_id", "seed", "best_value",
                    "evaluations", "success"])
        for c in self.cells:
            for r in c.rows:
                w.writerow([r.function, r.dim, r.mode, r.schedule_id, r.seed,
                            repr(float(r.best_value)), r.evaluations, int(r.success)])
        return buf.getvalue()


def _finite_or_none(v):
    # JSON has no infinity; failed runs report null
    return float(v) if math.isfinite(v) else None


def run_cell(name: str, dim: int, mode: str, spec: ScheduleSpec, seed: int,
             plan: ExperimentPlan) -> RunRow:
    fn = builtin_function(name, dim)
    threshold = plan.threshold(name)
    try:
        cfg = dataclasses.replace(plan.base_config(mode), seed=seed)
        result = optimize(fn, spec.resolve(fn), cfg)
    except QdynError as exc:
        # a failed cell still yields a row so the report stays complete
        return RunRow(name, dim, mode, spec.id, seed, math.inf, 0, None, False,
                      isinstance(exc, BudgetExhausted), f"{type(exc).__name__}: {exc}")
    gap = result.best_value - fn.known_minimum_value
    return RunRow(name, dim, mode, spec.id, seed, result.best_value, result.evaluations_used,
                  result.evaluations_to(fn.known_minimum_value + threshold),
                  bool(gap < threshold), result.budget_exhausted)


def run_plan(plan: ExperimentPlan) -> ExperimentReport:
    """Run every (function, mode, schedule, seed) cell in a fixed order."""
    cells = []
    for name, dim in plan.functions:
        for mode in plan.modes:
            for spec in plan.schedules:
                rows = [run_cell(name, dim, mode, spec, seed, plan) for seed in plan.seeds]
                cells.append(_summarise(name, dim, mode, spec.id, rows))
    return ExperimentReport(cells)


def _summarise(name, dim, mode, schedule_id, rows: list[RunRow]) -> CellSummary:
    success = sum(r.success for r in rows) / len(rows)
    best = float(np.median([r.best_value for r in rows]))
    hits = [r.evaluations_to_threshold for r in rows if r.evaluations_to_threshold is not None]
    med_hits = float(np.median(hits)) if hits else None
    return CellSummary(name, dim, mode, schedule_id, success, best, med_hits, rows)
