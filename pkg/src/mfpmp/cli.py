"""Command line interface.

    mfpmp run <config.json> [--out DIR] [--threads K]
    mfpmp riccati <config.json> [--out DIR]
    mfpmp spike <config.json> [--out DIR] [--threads K]

Exit status: 0 converged, 2 sweep not converged, 1 error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import _kernels
from .config import RunConfig, load_config
from .dynamics import ControlField
from .errors import ConfigError, MfpmpError
from .io import (
    write_control_csv,
    write_costate_csv,
    write_report_json,
    write_residuals_csv,
    write_riccati_csv,
    write_spike_csv,
    write_trajectory_csv,
)
from .lqr import lqr_closed_loop
from .pmp import SweepReport, spike_variation_experiment, sweep_solve

log = logging.getLogger("mfpmp")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _threads(arg) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("MFPMP_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"MFPMP_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"MFPMP_THREADS must be a positive integer, got {env!r}")
        return n
    return 1


def _solve(cfg: RunConfig):
    problem = cfg.build_problem()
    x0 = cfg.initial_ensemble(problem.dim_x)
    u0 = cfg.initial_control(problem)
    report = sweep_solve(problem, x0, u0, damping=cfg.damping, tol=cfg.tol, max_iter=cfg.max_iter)
    log.info("sweep: converged=%s iterations=%d cost=%.12g gap=%.3e", report.converged,
             report.iterations, report.final_cost, report.final_residual)
    return problem, report


def _spikes(cfg: RunConfig, problem, report: SweepReport):
    grid = cfg.grid
    results = []
    for idx, exp in enumerate(cfg.experiments):
        u = report.control
        if exp.nu is not None:
            nu = np.broadcast_to(exp.nu, u.values[exp.s_index].shape)
        else:
            nu = u.values[exp.s_index] + exp.nu_offset
        hs = [k * grid.step for k in exp.h_steps]
        table = spike_variation_experiment(problem, report.trajectory, u, exp.s_index, nu, hs)
        results.append((idx, table))
    return results


def _write_riccati(cfg: RunConfig, out, extra: dict) -> None:
    spec = cfg.lqr_spec()
    problem_x0 = cfg.initial_ensemble(spec.dim_x)
    closed = lqr_closed_loop(spec, problem_x0, cfg.grid)
    write_riccati_csv(out / "riccati_p1.csv", closed.P1)
    write_riccati_csv(out / "riccati_p2.csv", closed.P2)
    extra["riccati"] = {"p1": "riccati_p1.csv", "p2": "riccati_p2.csv",
                        "closed_loop_cost": closed.cost}


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = cfg.output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    problem, report = _solve(cfg)
    files = {
        "trajectory": write_trajectory_csv(out / "trajectory.csv", report.trajectory).name,
        "costate": write_costate_csv(out / "costate.csv", report.costate).name,
        "control": write_control_csv(out / "control.csv", report.control).name,
        "residuals": write_residuals_csv(out / "residuals.csv", cfg.grid, report.residual.per_node_gaps).name,
    }
    extra = {"problem": problem.name}
    if cfg.is_lqr:
        _write_riccati(cfg, out, extra)
    if cfg.experiments:
        files["spike_ratios"] = write_spike_csv(out / "spike_ratios.csv", _spikes(cfg, problem, report)).name
    write_report_json(out / "report.json", report, files, extra)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_riccati(args) -> int:
    cfg = load_config(args.config)
    if not cfg.is_lqr:
        raise ConfigError("the riccati command needs an LQR problem", "problem.kind")
    out = cfg.output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    extra: dict = {}
    _write_riccati(cfg, out, extra)
    print(f"closed-loop cost: {extra['riccati']['closed_loop_cost']:.17g}")
    return EXIT_OK


def cmd_spike(args) -> int:
    cfg = load_config(args.config)
    if not cfg.experiments:
        raise ConfigError("no spike experiments configured", "experiments")
    out = cfg.output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    problem, report = _solve(cfg)
    write_spike_csv(out / "spike_ratios.csv", _spikes(cfg, problem, report))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfpmp", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, helptext in (
        ("run", cmd_run, "sweep solve plus diagnostics and configured experiments"),
        ("riccati", cmd_riccati, "Riccati benchmark for LQR configs"),
        ("spike", cmd_spike, "spike-variation experiments only"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=None,
                       help="kernel threads (default: $MFPMP_THREADS or 1)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigError("must be >= 1", "--threads")
        _kernels.set_num_threads(threads)
        return args.func(args)
    except MfpmpError as exc:
        print(f"mfpmp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"mfpmp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
