"""Command-line driver: ``qdyn {evolve,spectrum,optimize,bench,wavepacket}``.

Parameter precedence is flag > ``--config`` JSON value > built-in default.
A config file is a flat JSON object keyed by the long flag names (dashes or
underscores), optionally with one section per subcommand, e.g.
``{"evolve": {"D": 0.5}, "quiet": true}``.

Exit codes: 0 success, 2 configuration/validation error, 3 numerical
failure, 4 evaluation budget exhausted (result still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import benchmarks, evolution, grid as gridmod, sampler, spectral
from .errors import NumericalError, QdynError, ValidationError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4


class ConfigError(ValidationError):
    pass


POTENTIAL_DEFAULTS = {
    "potential": "harmonic", "potential_csv": None, "strength": 1.0, "separation": 1.0,
    "D": 1.0, "x_min": -10.0, "x_max": 10.0, "n_points": 2001,
}

DEFAULTS = {
    "evolve": {**POTENTIAL_DEFAULTS, "mode": "imaginary", "dt": 1e-3, "steps": 1000,
               "renormalize": True, "sample_every": None, "x0": 0.5, "sigma": 0.7,
               "momentum": 0.0},
    "spectrum": {**POTENTIAL_DEFAULTS, "levels": spectral.DEFAULT_LEVELS, "states": False,
                 "softmax_trace": None, "trace_points": 101},
    "optimize": {"objective": "sphere", "dim": 5, "mode": "drift", "dtau": None,
                 "walkers": None, "target_walkers": None, "eref_gain": None,
                 "fd_offset_factor": None, "max_evaluations": None, "reseed": False,
                 "threads": None, "d_initial": None, "decay": None, "d_min": None,
                 "inner_steps": None, "fixed_d": None},
    "bench": {"plan": None},
    "wavepacket": {"sigma0": 1.0, "D": 1.0, "t_max": 5.0, "samples": 11, "dt": 0.01,
                   "x_min": -40.0, "x_max": 40.0, "n_points": 4001},
}
GLOBAL_DEFAULTS = {"out": ".", "seed": 0, "quiet": False}


def _add_potential_flags(p):
    p.add_argument("--potential", choices=["harmonic", "double_well", "free"],
                   help="builtin potential: harmonic strength*x^2, double_well "
                        "strength*(x^2-separation^2)^2, or free (default harmonic)")
    p.add_argument("--potential-csv", metavar="PATH",
                   help="tabulated potential with header x,value; overrides --potential")
    p.add_argument("--strength", type=float, help="potential scale (default 1)")
    p.add_argument("--separation", type=float, help="double-well minima at +-separation (default 1)")
    p.add_argument("--D", type=float, help="kinetic coefficient (default 1)")
    p.add_argument("--x-min", type=float, help="left wall (default -10)")
    p.add_argument("--x-max", type=float, help="right wall (default 10)")
    p.add_argument("--n-points", type=int, help="grid points incl. walls (default 2001)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--out", metavar="PATH", help="output directory (default .)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--quiet", action="store_true", default=None,
                        help="suppress progress output and warnings")

    parser = argparse.ArgumentParser(prog="qdyn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", parents=[common], help="real/imaginary-time grid evolution")
    _add_potential_flags(p)
    p.add_argument("--mode", choices=["real", "imaginary"], help="(default imaginary)")
    p.add_argument("--dt", type=float, help="time step (default 1e-3)")
    p.add_argument("--steps", type=int, help="number of steps (default 1000)")
    p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=None,
                   help="renormalize every imaginary-time step (default on)")
    p.add_argument("--sample-every", type=int, help="trajectory sampling stride (default steps/100)")
    p.add_argument("--x0", type=float, help="initial Gaussian centre (default 0.5)")
    p.add_argument("--sigma", type=float, help="initial density width (default 0.7)")
    p.add_argument("--momentum", type=float, help="initial wave number (default 0)")

    p = sub.add_parser("spectrum", parents=[common], help="eigenpairs and Softmax traces")
    _add_potential_flags(p)
    p.add_argument("--levels", type=int, help=f"number of levels (default {spectral.DEFAULT_LEVELS})")
    p.add_argument("--states", action="store_true", default=None,
                   help="also write states/phi_<n>.csv")
    p.add_argument("--softmax-trace", nargs=2, metavar=("TAU_MAX", "K"),
                   help="write softmax.csv over the lowest K levels for tau in [0, TAU_MAX]")
    p.add_argument("--trace-points", type=int, help="tau samples in the trace (default 101)")

    p = sub.add_parser("optimize", parents=[common], help="annealed walker optimizer")
    p.add_argument("--objective", help=f"one of {', '.join(benchmarks.FUNCTION_NAMES)}")
    p.add_argument("--dim", type=int, help="dimension (default 5)")
    p.add_argument("--mode", choices=list(sampler.MODES), help="(default drift)")
    p.add_argument("--dtau", type=float)
    p.add_argument("--walkers", type=int, help="walkers (diffusion/drift)")
    p.add_argument("--target-walkers", type=int, help="target population (dmc)")
    p.add_argument("--eref-gain", type=float)
    p.add_argument("--fd-offset-factor", type=float)
    p.add_argument("--max-evaluations", type=int)
    p.add_argument("--reseed", action="store_true", default=None,
                   help="restart walkers around the incumbent after each annealing stage")
    p.add_argument("--threads", type=int, help="evaluation threads (default $QDYN_THREADS or 1)")
    p.add_argument("--d-initial", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--d-min", type=float)
    p.add_argument("--inner-steps", type=int)
    p.add_argument("--fixed-d", type=float, help="hold D constant for the annealed step count")

    p = sub.add_parser("bench", parents=[common], help="run an experiment plan")
    p.add_argument("--plan", metavar="PATH", help="plan JSON (default: bundled plan)")

    p = sub.add_parser("wavepacket", parents=[common],
                       help="free-packet width: analytic vs real-time evolution")
    p.add_argument("--sigma0", type=float)
    p.add_argument("--D", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--x-min", type=float)
    p.add_argument("--x-max", type=float)
    p.add_argument("--n-points", type=int)
    return parser


def _load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags for one subcommand."""
    params = {**GLOBAL_DEFAULTS, **DEFAULTS[command]}
    if args.config:
        raw = _load_config(args.config)
        section = raw.pop(command, {}) if isinstance(raw.get(command), dict) else {}
        for name in DEFAULTS:
            if isinstance(raw.get(name), dict):
                raw.pop(name)
        for key, value in {**raw, **section}.items():
            field = key.replace("-", "_")
            if field not in params:
                raise ConfigError(f"{args.config}: unknown field {key!r} for {command}")
            params[field] = value
    for key, value in vars(args).items():
        if key in params and value is not None:
            params[key] = value
    return params


def _num(params, key, kind=float, positive=False, allow_none=False):
    v = params[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field {key!r} must be a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"field {key!r} must be an integer, got {v!r}")
    v = kind(v)
    if not math.isfinite(v) or (positive and v <= 0):
        raise ConfigError(f"field {key!r} must be {'positive and ' if positive else ''}finite, got {v!r}")
    return v


def _grid_and_potential(params):
    grid = gridmod.build_grid(_num(params, "x_min"), _num(params, "x_max"),
                              _num(params, "n_points", int))
    if params["potential_csv"]:
        return grid, _tabulated_potential(params["potential_csv"], grid)
    a = _num(params, "strength")
    b = _num(params, "separation")
    shapes = {
        "harmonic": lambda x: a * x**2,
        "double_well": lambda x: a * (x**2 - b**2) ** 2,
        "free": lambda x: np.zeros_like(x),
    }
    if params["potential"] not in shapes:
        raise ConfigError(f"unknown potential {params['potential']!r}")
    return grid, gridmod.discretize_potential(shapes[params["potential"]], grid)


def _tabulated_potential(path, grid):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        xs = np.array([float(r["x"]) for r in rows])
        vs = np.array([float(r["value"]) for r in rows])
    except OSError as exc:
        raise ConfigError(f"cannot read potential table {path}: {exc.strerror}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: expected numeric columns x,value ({exc})") from exc
    if xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ConfigError(f"{path}: x must be strictly increasing with at least two rows")
    if grid.x_min < xs[0] or grid.x_max > xs[-1]:
        raise ConfigError(f"{path}: table covers [{xs[0]}, {xs[-1]}], grid needs "
                          f"[{grid.x_min}, {grid.x_max}]")
    return gridmod.PotentialGrid(np.interp(grid.points, xs, vs), grid)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n")


def _say(params, *msg):
    if not params["quiet"]:
        print(*msg)


def cmd_evolve(params) -> int:
    grid, pot = _grid_and_potential(params)
    steps = _num(params, "steps", int)
    every = params["sample_every"]
    if every is None:
        every = max(1, steps // 100)
    cfg = evolution.EvolutionConfig(
        D=_num(params, "D", positive=True), dt=_num(params, "dt", positive=True),
        n_steps=steps, mode=params["mode"], renormalize_each_step=bool(params["renormalize"]),
        sample_every=_num({"sample_every": every}, "sample_every", int, positive=True))
    psi0 = gridmod.gaussian_packet(grid, _num(params, "x0"), _num(params, "sigma", positive=True),
                                   _num(params, "momentum"))
    out = _out_dir(params)

    states = evolution.evolve(psi0, pot, cfg)
    final = states[-1]
    split = spectral.energy_decomposition(final.normalize(), pot, cfg.D)
    summary = {
        "mode": cfg.mode, "D": cfg.D, "dt": cfg.dt, "steps": cfg.n_steps,
        "final_time": final.time, "final_norm": final.norm_squared(),
        "rayleigh_quotient": gridmod.rayleigh_quotient(final, pot, cfg.D),
        "kinetic_energy": split.kinetic, "potential_energy": split.potential,
        "samples": len(states),
    }
    out.mkdir(parents=True, exist_ok=True)
    evolution.write_trajectory_csv(states, out / "trajectory.csv")
    _write_json(out / "summary.json", summary)
    _say(params, f"final energy {summary['rayleigh_quotient']:.10g}, norm {summary['final_norm']:.12g}")
    return EXIT_OK


def cmd_spectrum(params) -> int:
    grid, pot = _grid_and_potential(params)
    levels = _num(params, "levels", int)
    m = grid.n_points - 2
    if not 1 <= levels <= m:
        raise ConfigError(f"field 'levels' must lie in [1, {m}], got {levels}")
    trace = params["softmax_trace"]
    if trace is not None:
        try:
            tau_max, k = float(trace[0]), int(trace[1])
        except (TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"softmax_trace expects TAU_MAX K, got {trace!r}") from exc
        if not (tau_max >= 0 and math.isfinite(tau_max)) or not 1 <= k <= levels:
            raise ConfigError(f"softmax_trace needs TAU_MAX >= 0 and 1 <= K <= levels, got {trace!r}")
        points = _num(params, "trace_points", int, positive=True)
    D = _num(params, "D", positive=True)
    out = _out_dir(params)

    spec = spectral.eigensolve(pot, D, levels)
    out.mkdir(parents=True, exist_ok=True)
    spectral.write_spectrum_csv(spec, out / "spectrum.csv")
    if params["states"]:
        spectral.write_state_csvs(spec, out / "states")
    if trace is not None:
        taus = np.linspace(0.0, tau_max, points)
        spectral.write_softmax_csv(spec.energies[:k], taus, out / "softmax.csv")
    _say(params, "energies:", " ".join(f"{e:.8g}" for e in spec.energies))
    return EXIT_OK


def _optimizer_setup(params):
    try:
        fn = benchmarks.builtin_function(params["objective"], _num(params, "dim", int))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    overrides = {"seed": _num(params, "seed", int)}
    for flag, field in (("dtau", "dtau"), ("walkers", "n_walkers"),
                        ("target_walkers", "target_walkers"), ("eref_gain", "eref_gain"),
                        ("fd_offset_factor", "fd_offset_factor"),
                        ("max_evaluations", "max_evaluations"), ("threads", "threads")):
        if params[flag] is not None:
            overrides[field] = _num(params, flag, int if field in
                                    ("n_walkers", "target_walkers", "max_evaluations", "threads")
                                    else float)
    overrides["reseed"] = bool(params["reseed"])
    cfg = sampler.OptimizerConfig.for_mode(params["mode"], **overrides)
    sched = {k: _num(params, k, int if k == "inner_steps" else float)
             for k in ("d_initial", "decay", "d_min", "inner_steps") if params[k] is not None}
    schedule = sampler.AnnealingSchedule.default_for(fn, **sched)
    if params["fixed_d"] is not None:
        schedule = sampler.AnnealingSchedule.fixed(_num(params, "fixed_d", positive=True),
                                                   schedule.total_steps)
    return fn, schedule, cfg


def cmd_optimize(params) -> int:
    fn, schedule, cfg = _optimizer_setup(params)
    out = _out_dir(params)

    result = sampler.optimize(fn, schedule, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(result.to_json())
    result.write_history_csv(out / "history.csv")
    _say(params, f"best {result.best_value!r} after {result.evaluations_used} evaluations")
    if result.budget_exhausted:
        print("evaluation budget exhausted; best-so-far written", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_bench(params) -> int:
    if params["plan"] is None:
        plan = benchmarks.default_plan()
    else:
        path = Path(params["plan"])
        if not path.is_file():
            raise ConfigError(f"plan file {path} does not exist")
        try:
            plan = benchmarks.ExperimentPlan.from_json(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    out = _out_dir(params)

    report = benchmarks.run_plan(plan)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    for c in report.cells:
        _say(params, f"{c.function:>16} d={c.dim} {c.mode:>9} {c.schedule_id:>12} "
                     f"success={c.success_rate:.2f} median_best={c.median_best_value:.4g}")
    return EXIT_OK


def cmd_wavepacket(params) -> int:
    grid = gridmod.build_grid(_num(params, "x_min"), _num(params, "x_max"),
                              _num(params, "n_points", int))
    sigma0 = _num(params, "sigma0", positive=True)
    D = _num(params, "D", positive=True)
    dt = _num(params, "dt", positive=True)
    t_max = _num(params, "t_max")
    samples = _num(params, "samples", int, positive=True)
    if t_max < 0:
        raise ConfigError("field 't_max' must be non-negative")
    steps = int(round(t_max / dt))
    every = max(1, steps // max(1, samples - 1))
    cfg = evolution.EvolutionConfig(D=D, dt=dt, n_steps=steps, mode="real", sample_every=every)
    centre = 0.5 * (grid.x_min + grid.x_max)
    psi0 = gridmod.gaussian_packet(grid, centre, sigma0)
    out = _out_dir(params)

    states = evolution.evolve_real(psi0, evolution.free_potential(grid), cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "wavepacket.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "width_analytic", "width_numeric"])
        for s in states:
            w.writerow([repr(float(s.time)),
                        repr(evolution.free_packet_width(sigma0, D, s.time)),
                        repr(evolution.packet_width(s))])
    _say(params, f"wrote {len(states)} samples to {out / 'wavepacket.csv'}")
    return EXIT_OK


def _out_dir(params) -> Path:
    out = Path(params["out"])
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    return out


COMMANDS = {"evolve": cmd_evolve, "spectrum": cmd_spectrum, "optimize": cmd_optimize,
            "bench": cmd_bench, "wavepacket": cmd_wavepacket}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        params = resolve(args.command, args)
        with warnings.catch_warnings():
            if params["quiet"]:
                warnings.simplefilter("ignore")
            return COMMANDS[args.command](params)
    except ValueError as exc:
        # ValidationError is a ValueError; so are argument errors from numpy/stdlib
        print(f"qdyn {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"qdyn {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except QdynError as exc:
        print(f"qdyn {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
