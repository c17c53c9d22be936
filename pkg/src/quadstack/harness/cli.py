"""Command-line experiment runner.

Subcommands::

    quadstack run --config exp.yaml [--seed N] [--out DIR] [--latency S] [--integrator rk4|euler|symplectic]
    quadstack sweep --config exp.yaml --latencies 0.035,0.04,0.075 [--out DIR] ...
    quadstack gen-traj (--config exp.yaml | --kind circle ...) --out traj.csv
    quadstack validate-traj traj.csv
    quadstack metrics --states states.csv (--reference traj.csv | --config exp.yaml) [--out DIR]

Exit codes: 0 success, 1 configuration or input error, 2 guard abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..core import QuadrotorModel
from ..errors import ConfigError, FlightStackError, TrajectoryFormatError, UsageError
from ..references.io import trajectory_load, trajectory_save
from .experiment import (
    ExperimentConfig,
    TrajectorySpec,
    compute_rmse,
    latency_sweep,
    load_experiment_config,
    run_experiment,
    sweep_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GUARD = 2

_INTEGRATORS = ("rk4", "euler", "symplectic")


def _add_common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="experiment YAML file")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (unsigned 64-bit)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--latency", type=float, default=None, help="command latency [s]")
    p.add_argument("--integrator", choices=_INTEGRATORS, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadstack", description="Quadrotor flight-stack experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one closed-loop experiment")
    _add_common(p)

    p = sub.add_parser("sweep", help="run an experiment once per latency")
    _add_common(p)
    p.add_argument("--latencies", required=True, help="comma-separated latencies [s]")

    p = sub.add_parser("gen-traj", help="generate a trajectory file")
    p.add_argument("--config", default=None, help="take the trajectory section of this experiment file")
    p.add_argument("--kind", choices=("hover", "circle", "lemniscate"), default="circle")
    p.add_argument("--radius", type=float, default=4.0)
    p.add_argument("--amplitude", type=float, default=5.0)
    p.add_argument("--speed", type=float, default=5.0)
    p.add_argument("--z", type=float, default=1.0)
    p.add_argument("--laps", type=float, default=1.0)
    p.add_argument("--ramp", type=float, default=0.0)
    p.add_argument("--out", required=True, help="destination CSV file")

    p = sub.add_parser("validate-traj", help="check a trajectory file")
    p.add_argument("path")
    p.add_argument("--config", default=None, help="check feasibility against this experiment's model")

    p = sub.add_parser("metrics", help="tracking metrics of a state log")
    p.add_argument("--states", required=True, help="state log CSV written by 'run'")
    p.add_argument("--reference", default=None, help="reference trajectory file")
    p.add_argument("--config", default=None, help="experiment file defining the reference")
    p.add_argument("--out", default=None, help="directory for metrics.csv")
    return parser


def _seed(value):
    if value is not None and not 0 <= value < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    return value


def _load(args) -> ExperimentConfig:
    overrides = {
        "seed": _seed(args.seed),
        "output_dir": args.out,
        "latency": args.latency,
        "integrator": args.integrator,
    }
    return load_experiment_config(args.config, overrides)


def _cmd_run(args, out) -> int:
    cfg = _load(args)
    result = run_experiment(cfg)
    out.write(result.summary(cfg))
    return EXIT_GUARD if result.aborted else EXIT_OK


def _cmd_sweep(args, out) -> int:
    try:
        latencies = [float(x) for x in args.latencies.split(",") if x.strip()]
    except ValueError:
        raise UsageError("--latencies must be a comma-separated list of numbers") from None
    cfg = _load(args)
    results = latency_sweep(cfg, latencies)
    out.write(sweep_csv(results))
    return EXIT_GUARD if any(m.guard_events for _, m in results) else EXIT_OK


def _cmd_gen_traj(args, out) -> int:
    if args.config:
        cfg = load_experiment_config(args.config)
        spec, model, base = cfg.trajectory, cfg.model, cfg.base_dir
    else:
        spec = TrajectorySpec(kind=args.kind, radius=args.radius, amplitude=args.amplitude, speed=args.speed,
                              z=args.z, laps=args.laps, ramp=args.ramp)
        model, base = QuadrotorModel(), None
    if spec.kind == "hover":
        raise UsageError("hover references are not sampled trajectories")
    traj = spec.build(model, base)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    trajectory_save(traj, args.out)
    out.write(f"wrote {len(traj.setpoints)} setpoints ({traj.t_end - traj.t_start:.3f} s) to {args.out}\n")
    return EXIT_OK


def _cmd_validate_traj(args, out) -> int:
    traj = trajectory_load(args.path)
    model = load_experiment_config(args.config).model if args.config else QuadrotorModel()
    fd = np.array([s.state.fd for s in traj.setpoints])
    infeasible = int(np.sum(np.any((fd < model.f_min - 1e-9) | (fd > model.f_max + 1e-9), axis=1)))
    out.write(f"{args.path}: {len(traj.setpoints)} setpoints, t in [{traj.t_start:.6f}, {traj.t_end:.6f}] s\n")
    if infeasible:
        out.write(f"{infeasible} setpoints exceed the rotor thrust limits [{model.f_min:g}, {model.f_max:g}] N\n")
        return EXIT_CONFIG
    out.write("ok\n")
    return EXIT_OK


def _read_state_log(path) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read state log {path}: {exc}") from None
    if data.shape[1] < 4:
        raise UsageError(f"state log {path} needs at least columns t,px,py,pz")
    return data


def _cmd_metrics(args, out) -> int:
    if (args.reference is None) == (args.config is None):
        raise UsageError("give exactly one of --reference or --config")
    if args.reference:
        reference = trajectory_load(args.reference)
    else:
        cfg = load_experiment_config(args.config)
        reference = cfg.trajectory.build(cfg.model, cfg.base_dir)
    report = compute_rmse(_read_state_log(args.states), reference)
    text = report.to_csv()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "metrics.csv", "w", newline="\n", encoding="ascii") as fh:
            fh.write(text)
    out.write(text)
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "gen-traj": _cmd_gen_traj,
    "validate-traj": _cmd_validate_traj,
    "metrics": _cmd_metrics,
}


def main(argv=None, out=None, err=None) -> int:
    """Entry point; returns the process exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args, out)
    except (ConfigError, TrajectoryFormatError, UsageError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except FlightStackError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
