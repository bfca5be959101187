"""Pre-build pilot runs that fixed the optimizer defaults and success targets.

Run from the repository root::

    python3 benchmarks/pilot_runs.py            # writes benchmarks/pilot_results.json
    python3 benchmarks/pilot_runs.py --quick    # 5 seeds per cell, prints only

Each cell reports the number of successful seeds out of 20.  Sphere
success is ``best_value < 1e-2``; Rastrigin success is a final incumbent
inside the global basin, ``max|x_j| < 0.5``.
"""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from qdyn.benchmarks import builtin_function
from qdyn.errors import QdynError
from qdyn.sampler import AnnealingSchedule, Objective, OptimizerConfig, optimize

HERE = Path(__file__).resolve().parent


def sphere_box5(dim=5):
    return Objective(lambda x: float(np.sum(x**2)), np.full(dim, -5.0), np.full(dim, 5.0),
                     batch=lambda X: np.sum(X**2, axis=1), name="sphere")


def success(name, result):
    if name == "rastrigin":
        return bool(np.max(np.abs(result.best_position)) < 0.5)
    return bool(result.best_value < 1e-2)


def run_cell(name, dim, mode, seeds, fixed=False, **overrides):
    obj = sphere_box5(dim) if name == "sphere" else builtin_function(name, dim)
    schedule = AnnealingSchedule.default_for(obj)
    if fixed:
        schedule = AnnealingSchedule.fixed(schedule.d_min, schedule.total_steps)
    cfg_kw = {k: v for k, v in overrides.items()}
    wins, best, evals, errors = 0, [], [], 0
    t0 = time.perf_counter()
    for seed in seeds:
        try:
            r = optimize(obj, schedule, OptimizerConfig.for_mode(mode, seed=seed, **cfg_kw))
        except QdynError:
            errors += 1
            continue
        wins += success(name, r)
        best.append(r.best_value)
        evals.append(r.evaluations_used)
    return {"function": name, "dim": dim, "mode": mode,
            "schedule": "fixed_dmin" if fixed else "annealed", "overrides": overrides,
            "seeds": len(seeds), "successes": int(wins), "errors": errors,
            "median_best": float(np.median(best)) if best else None,
            "median_evaluations": float(np.median(evals)) if evals else None,
            "seconds": round(time.perf_counter() - t0, 1)}


def dmc_energy(D, seed=0, steps=4000, target=1000, dtau=0.01):
    obj = Objective(lambda x: float(x[0] ** 2), [-10.0], [10.0], batch=lambda X: X[:, 0] ** 2)
    cfg = OptimizerConfig(mode="dmc", dtau=dtau, target_walkers=target, seed=seed,
                          max_evaluations=10**8)
    r = optimize(obj, AnnealingSchedule.fixed(D, steps), cfg)
    # discard tau < 10 as burn-in
    tail = np.asarray(r.eref_trace[steps // 4:])
    return {"D": D, "exact": D**0.5, "eref_tail_mean": float(tail.mean()),
            "relative_error": float(abs(tail.mean() - D**0.5) / D**0.5)}


CELLS = [
    ("sphere", 5, "drift", {}),
    ("sphere", 5, "dmc", {}),
    ("sphere", 5, "diffusion", {}),
    ("rastrigin", 2, "drift", {}),
    ("rastrigin", 2, "dmc", {}),
    ("rastrigin", 2, "diffusion", {}),
    ("rastrigin", 2, "dmc", {"eref_gain": 0.1}),
    ("sphere", 5, "dmc", {"eref_gain": 0.1}),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args(argv)
    seeds = list(range(5 if args.quick else 20))
    out = {"seeds": seeds, "cells": [], "dmc_harmonic": []}
    for name, dim, mode, kw in CELLS:
        row = run_cell(name, dim, mode, seeds, **kw)
        out["cells"].append(row)
        print(json.dumps(row), flush=True)
        if name == "rastrigin" and not kw:
            row = run_cell(name, dim, mode, seeds, fixed=True)
            out["cells"].append(row)
            print(json.dumps(row), flush=True)
    for D in (0.25, 1.0):
        row = dmc_energy(D)
        out["dmc_harmonic"].append(row)
        print(json.dumps(row), flush=True)
    if not args.quick:
        (HERE / "pilot_results.json").write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
