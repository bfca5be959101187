"""Annealed Gaussian-diffusion population optimizer.

Walkers follow the classical (imaginary-time) picture of the dynamics:

* ``diffusion`` -- every walker takes a Gaussian step of per-coordinate
  standard deviation ``sqrt(2 D dtau)``;
* ``drift`` -- the same step plus a gradient-descent move ``-grad(f) dtau``
  with the gradient estimated from two probes per coordinate;
* ``dmc`` -- diffusion followed by birth/death branching with weight
  ``exp(-(f(x) - e_ref) dtau)``, which projects the population onto the
  ground state of ``-D lap + f``.

An outer loop lowers D geometrically; the inner loop runs a fixed number of
steps at each D.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import (BudgetExhausted, NumericalError, PopulationExtinctionError,
                     ValidationError)

MODES = ("diffusion", "drift", "dmc")

# stream purposes, folded into the counter-based generator key
_INIT, _NOISE, _BRANCH, _RESEED = range(4)


def default_threads() -> int:
    raw = os.environ.get("QDYN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class Objective:
    """Box-bounded black-box objective.

    ``func`` maps one position vector to a float.  ``batch``, when given,
    maps an ``(n, d)`` array to ``n`` values and must agree with ``func``
    row by row; it is only a faster path.
    """
    func: Callable[[np.ndarray], float]
    lower: np.ndarray
    upper: np.ndarray
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "objective"

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValidationError("lower and upper bounds must be 1-D and of equal length")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValidationError("bounds must be finite")
        if np.any(self.lower >= self.upper):
            raise ValidationError("lower bounds must be strictly below upper bounds")

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def evaluate(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=float)))

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        if self.batch is not None:
            return np.asarray(self.batch(X), dtype=float).reshape(len(X))
        return np.array([self.evaluate(row) for row in X], dtype=float)

    def clamp(self, X: np.ndarray) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)


class Evaluator:
    """Counts objective evaluations, enforces the budget and keeps the best point.

    A request that does not fit in the remaining budget raises
    :class:`BudgetExhausted` before anything is evaluated.
    """

    def __init__(self, objective: Objective, max_evaluations: Optional[int] = None,
                 threads: int = 1):
        self.objective = objective
        self.max_evaluations = max_evaluations
        self.threads = max(1, int(threads))
        self.used = 0
        self.best_value = math.inf
        self.best_position: Optional[np.ndarray] = None
        self.improvements: list[tuple[int, float]] = []

    @property
    def remaining(self) -> float:
        if self.max_evaluations is None:
            return math.inf
        return self.max_evaluations - self.used

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        n = len(X)
        if n > self.remaining:
            raise BudgetExhausted(
                f"{n} evaluations requested, {self.remaining} left of {self.max_evaluations}")
        values = self._evaluate(X)
        if not np.all(np.isfinite(values)):
            bad = X[~np.isfinite(values)][0]
            raise NumericalError(f"objective returned a non-finite value at {bad.tolist()}")
        # fold in index order so the first of equal values wins
        i = int(np.argmin(values))
        if values[i] < self.best_value:
            self.best_value = float(values[i])
            self.best_position = X[i].copy()
            self.improvements.append((self.used + i + 1, self.best_value))
        self.used += n
        return values

    def _evaluate(self, X):
        obj = self.objective
        if self.threads == 1 or len(X) < 2 * self.threads:
            return obj.evaluate_many(X)
        with ThreadPoolExecutor(self.threads) as pool:
            if obj.batch is not None:
                chunks = np.array_split(X, self.threads)
                return np.concatenate(list(pool.map(obj.evaluate_many, chunks)))
            return np.fromiter(pool.map(obj.evaluate, X), dtype=float, count=len(X))


def _as_evaluator(obj: Union[Objective, Evaluator]) -> Evaluator:
    return obj if isinstance(obj, Evaluator) else Evaluator(obj)


def walker_stream(seed: int, generation: int, purpose: int) -> np.random.Generator:
    """Counter-based generator for one (seed, generation, purpose) triple.

    Row ``i`` of any array drawn from it belongs to walker ``i``, so the
    draws do not depend on how walker updates are scheduled.
    """
    key = np.random.SeedSequence([seed & (2**64 - 1), generation, purpose]).generate_state(
        2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class WalkerPopulation:
    positions: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    generation: int = 0
    best_position: Optional[np.ndarray] = None
    best_value: float = math.inf

    @property
    def size(self) -> int:
        return len(self.positions)

    def spread(self) -> float:
        """Root-mean-square distance of the walkers from their centroid."""
        centred = self.positions - self.positions.mean(axis=0)
        return float(np.sqrt(np.mean(np.sum(centred**2, axis=1))))

    def _advance(self, positions, values, ev: Evaluator, weights=None) -> "WalkerPopulation":
        if weights is None:
            weights = np.ones(len(positions))
        return WalkerPopulation(positions, values, weights, self.generation + 1,
                                None if ev.best_position is None else ev.best_position.copy(),
                                ev.best_value)


def initial_population(evaluator: Evaluator, n_walkers: int, seed: int) -> WalkerPopulation:
    """Walkers drawn uniformly over the bounds and evaluated."""
    obj = evaluator.objective
    u = walker_stream(seed, 0, _INIT).random((n_walkers, obj.dimension))
    positions = obj.lower + u * obj.widths
    values = evaluator(positions)
    return WalkerPopulation(positions, values, np.ones(n_walkers), 0,
                            evaluator.best_position.copy(), evaluator.best_value)


def step_sigma(D: float, dtau: float) -> float:
    return math.sqrt(2.0 * D * dtau)


def diffusion_step(pop: WalkerPopulation, obj: Union[Objective, Evaluator], D: float,
                   dtau: float, rng: np.random.Generator) -> WalkerPopulation:
    """Gaussian move of standard deviation ``sqrt(2 D dtau)`` per coordinate.

    Coordinates leaving the box are clamped to it.  ``D == 0`` is the
    identity and costs no evaluations.
    """
    if not D >= 0 or not dtau > 0:
        raise ValidationError("need D >= 0 and dtau > 0")
    ev = _as_evaluator(obj)
    if D == 0:
        return pop._advance(pop.positions.copy(), pop.values.copy(), ev, pop.weights.copy())
    noise = rng.standard_normal(pop.positions.shape) * step_sigma(D, dtau)
    positions = ev.objective.clamp(pop.positions + noise)
    return pop._advance(positions, ev(positions), ev)


def _probe_points(X: np.ndarray, lower, upper, h: float):
    n, d = X.shape
    eye = np.eye(d) * h
    plus = np.minimum(X[:, None, :] + eye, upper)
    minus = np.maximum(X[:, None, :] - eye, lower)
    step = np.diagonal(plus - minus, axis1=1, axis2=2)
    probes = np.stack([plus, minus], axis=2).reshape(n * d * 2, d)
    return probes, step


def estimate_gradients(obj: Union[Objective, Evaluator], X: np.ndarray, h: float) -> np.ndarray:
    """Two-probe gradient estimate at every row of ``X``.

    Central differences ``(f(x + h e_j) - f(x - h e_j)) / 2h``; a probe that
    would leave the box is pulled back onto it, which makes the difference
    one-sided.  Costs ``2 d`` evaluations per row.
    """
    if not h > 0:
        raise ValidationError("h must be positive")
    ev = _as_evaluator(obj)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    probes, step = _probe_points(X, ev.objective.lower, ev.objective.upper, h)
    f = ev(probes).reshape(n, d, 2)
    return (f[:, :, 0] - f[:, :, 1]) / step


def estimate_gradient(obj: Union[Objective, Evaluator], x, h: float) -> np.ndarray:
    return estimate_gradients(obj, np.atleast_1d(np.asarray(x, dtype=float))[None, :], h)[0]


def fd_offset(cfg: "OptimizerConfig", D: float, dtau: float) -> float:
    return max(cfg.fd_offset_factor * step_sigma(D, dtau), cfg.fd_offset_floor)


def drift_step(pop: WalkerPopulation, obj: Union[Objective, Evaluator], D: float, dtau: float,
               cfg: "OptimizerConfig", rng: np.random.Generator) -> WalkerPopulation:
    """Gradient move ``-grad(f) dtau`` plus the diffusion noise of :func:`diffusion_step`."""
    if not D >= 0 or not dtau > 0:
        raise ValidationError("need D >= 0 and dtau > 0")
    ev = _as_evaluator(obj)
    grads = estimate_gradients(ev, pop.positions, fd_offset(cfg, D, dtau))
    noise = rng.standard_normal(pop.positions.shape) * step_sigma(D, dtau)
    positions = ev.objective.clamp(pop.positions - grads * dtau + noise)
    return pop._advance(positions, ev(positions), ev)


def dmc_reweight(pop: WalkerPopulation, e_ref: float, dtau: float, cfg: "OptimizerConfig",
                 rng: np.random.Generator) -> tuple[WalkerPopulation, float]:
    """Birth/death branching on the cached objective values.

    Walker ``i`` leaves ``floor(w_i + u_i)`` copies, ``w_i = exp(-(f_i - e_ref) dtau)``.
    The population is capped at ``10 * target_walkers`` by uniform
    subsampling, and the reference energy is reset to
    ``mean(f) - eref_gain * ln(N / target_walkers) / dtau``.
    """
    if pop.size == 0:
        raise ValidationError("population is empty")
    cap = 10 * cfg.target_walkers
    log_w = np.minimum(-(pop.values - e_ref) * dtau, math.log(cap) + 1.0)
    copies = np.floor(np.exp(log_w) + rng.random(pop.size)).astype(np.int64)
    idx = np.repeat(np.arange(pop.size), copies)
    if idx.size == 0:
        raise PopulationExtinctionError(
            f"all {pop.size} walkers died at e_ref={e_ref!r}; lower dtau or check e_ref")
    if idx.size > cap:
        keep = np.sort(rng.choice(idx.size, size=cap, replace=False))
        idx = idx[keep]
    values = pop.values[idx]
    new_pop = WalkerPopulation(pop.positions[idx], values, np.ones(idx.size), pop.generation,
                               pop.best_position, pop.best_value)
    new_e_ref = float(values.mean() - cfg.eref_gain * math.log(idx.size / cfg.target_walkers) / dtau)
    return new_pop, new_e_ref


@dataclass(frozen=True)
class AnnealingSchedule:
    d_initial: float
    decay: float = 0.5
    d_min: Optional[float] = None
    inner_steps: int = 50

    def __post_init__(self):
        if self.d_min is None:
            object.__setattr__(self, "d_min", 1e-6 * self.d_initial)
        if not (self.d_initial > 0 and math.isfinite(self.d_initial)):
            raise ValidationError("d_initial must be positive and finite")
        if not 0 < self.d_min <= self.d_initial:
            raise ValidationError("need 0 < d_min <= d_initial")
        if not 0 < self.decay < 1:
            raise ValidationError("decay must lie in (0, 1)")
        if int(self.inner_steps) != self.inner_steps or self.inner_steps < 1:
            raise ValidationError("inner_steps must be a positive integer")

    @classmethod
    def default_for(cls, obj: Objective, **overrides) -> "AnnealingSchedule":
        d_initial = overrides.pop("d_initial", float(np.max(obj.widths)) ** 2 / 4.0)
        if "d_min" not in overrides:
            overrides["d_min"] = 1e-6 * d_initial
        return cls(d_initial=d_initial, **overrides)

    @classmethod
    def fixed(cls, D: float, inner_steps: int) -> "AnnealingSchedule":
        return cls(d_initial=D, decay=0.5, d_min=D, inner_steps=inner_steps)

    def values(self) -> list[float]:
        out = []
        k = 0
        while True:
            d = self.d_initial * self.decay**k
            if d < self.d_min:
                break
            out.append(d)
            k += 1
        return out

    @property
    def total_steps(self) -> int:
        return len(self.values()) * self.inner_steps


@dataclass(frozen=True)
class OptimizerConfig:
    mode: str = "drift"
    dtau: float = 0.01
    n_walkers: int = 16
    target_walkers: int = 100
    eref_gain: float = 1.0
    fd_offset_factor: float = 0.1
    fd_offset_floor: float = 1e-8
    seed: int = 0
    max_evaluations: int = 200_000
    reseed: bool = False
    threads: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("dtau", "eref_gain", "fd_offset_factor", "fd_offset_floor"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValidationError(f"{name} must be positive and finite, got {v!r}")
        for name in ("n_walkers", "target_walkers", "max_evaluations"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if self.n_walkers < 2:
            raise ValidationError("n_walkers must be at least 2")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ValidationError(f"seed must be an integer, got {self.seed!r}")
        if self.threads is not None and self.threads < 1:
            raise ValidationError("threads must be >= 1")

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "OptimizerConfig":
        """Config with the per-mode defaults of :data:`MODE_DEFAULTS` applied."""
        if mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
        return cls(mode=mode, **{**MODE_DEFAULTS[mode], **overrides})


# Departures from the OptimizerConfig defaults, fixed by benchmarks/pilot_runs.py.
# Diffusion costs one evaluation per walker per step against 2d + 1 for drift.
MODE_DEFAULTS: dict[str, dict] = {
    "diffusion": {"n_walkers": 100},
    "drift": {},
    "dmc": {},
}


@dataclass(frozen=True)
class HistoryRecord:
    outer_iter: int
    D: float
    best_value: float
    mean_value: float
    spread: float


@dataclass
class OptimizationResult:
    best_position: np.ndarray
    best_value: float
    evaluations_used: int
    history: list[HistoryRecord]
    eref_trace: list[float]
    seed: int
    mode: str
    budget_exhausted: bool = False
    improvements: list[tuple[int, float]] = field(default_factory=list)

    def evaluations_to(self, threshold: float) -> Optional[int]:
        """Evaluation count at which ``best_value`` first dropped below ``threshold``."""
        for evals, value in self.improvements:
            if value < threshold:
                return evals
        return None

    def to_dict(self) -> dict:
        return {
            "best_position": [float(v) for v in self.best_position],
            "best_value": float(self.best_value),
            "evaluations_used": int(self.evaluations_used),
            "seed": int(self.seed),
            "mode": self.mode,
            "budget_exhausted": bool(self.budget_exhausted),
            "history": [
                {"outer_iter": r.outer_iter, "D": r.D, "best_value": r.best_value,
                 "mean_value": r.mean_value, "spread": r.spread}
                for r in self.history
            ],
            "eref_trace": [float(e) for e in self.eref_trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write_history_csv(self, path) -> None:
        lines = ["outer_iter,D,best_value,mean_value,spread"]
        for r in self.history:
            lines.append(f"{r.outer_iter},{r.D!r},{r.best_value!r},{r.mean_value!r},{r.spread!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def optimize(obj: Objective, schedule: Optional[AnnealingSchedule] = None,
             cfg: Optional[OptimizerConfig] = None) -> OptimizationResult:
    """Minimise ``obj`` with the two-loop annealed walker dynamics.

    The outer loop walks through ``schedule.values()``; at each D the inner
    loop applies ``schedule.inner_steps`` steps of ``cfg.mode``.  Running
    out of evaluations ends the run early with ``budget_exhausted`` set.
    """
    cfg = cfg or OptimizerConfig()
    schedule = schedule or AnnealingSchedule.default_for(obj)
    threads = cfg.threads if cfg.threads is not None else default_threads()
    ev = Evaluator(obj, cfg.max_evaluations, threads)
    n0 = cfg.target_walkers if cfg.mode == "dmc" else cfg.n_walkers
    if n0 > cfg.max_evaluations:
        raise ValidationError("max_evaluations is smaller than the initial population")

    pop = initial_population(ev, n0, cfg.seed)
    history: list[HistoryRecord] = []
    eref_trace: list[float] = []
    e_ref = float(pop.values.mean())
    exhausted = False
    gen = 0

    def record(outer, D):
        history.append(HistoryRecord(outer, D, ev.best_value, float(pop.values.mean()),
                                     pop.spread()))

    for outer, D in enumerate(schedule.values()):
        try:
            if cfg.reseed and outer > 0:
                gen += 1
                noise = walker_stream(cfg.seed, gen, _RESEED).standard_normal(pop.positions.shape)
                positions = obj.clamp(ev.best_position + noise * step_sigma(D, cfg.dtau))
                pop = WalkerPopulation(positions, ev(positions), np.ones(pop.size), gen,
                                       ev.best_position.copy(), ev.best_value)
            for _ in range(schedule.inner_steps):
                gen += 1
                rng = walker_stream(cfg.seed, gen, _NOISE)
                if cfg.mode == "diffusion":
                    pop = diffusion_step(pop, ev, D, cfg.dtau, rng)
                elif cfg.mode == "drift":
                    pop = drift_step(pop, ev, D, cfg.dtau, cfg, rng)
                else:
                    pop = diffusion_step(pop, ev, D, cfg.dtau, rng)
                    pop, e_ref = dmc_reweight(pop, e_ref, cfg.dtau, cfg,
                                              walker_stream(cfg.seed, gen, _BRANCH))
                    eref_trace.append(e_ref)
        except BudgetExhausted:
            exhausted = True
            record(outer, D)
            break
        record(outer, D)

    return OptimizationResult(ev.best_position.copy(), ev.best_value, ev.used, history,
                              eref_trace, cfg.seed, cfg.mode, exhausted, list(ev.improvements))
