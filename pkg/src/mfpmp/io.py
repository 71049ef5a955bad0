"""CSV and JSON serialization.

Floats are written with 17 significant digits so doubles round-trip and
reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dynamics import ControlField, CostateTrajectory, Trajectory
from .errors import InvalidInputError
from .measures import Ensemble
from .lqr import RiccatiSolution


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_ensemble_csv(path, e: Ensemble) -> Path:
    header = [f"x{j}" for j in range(e.dim)]
    return _write_rows(path, header, ([fmt(v) for v in row] for row in e.states))


def read_ensemble_csv(path) -> Ensemble:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty ensemble file")
    header, body = rows[0], rows[1:]
    if header != [f"x{j}" for j in range(len(header))]:
        raise InvalidInputError(f"{path}: header must be x0,...,x{{d-1}}, got {header}")
    try:
        return Ensemble(np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header)))
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None


def _write_particle_series(path, grid, values, prefix) -> Path:
    t = grid.nodes
    d = values.shape[2]
    header = ["t", "particle"] + [f"{prefix}{j}" for j in range(d)]

    def rows():
        for k in range(values.shape[0]):
            tk = fmt(t[k])
            for i in range(values.shape[1]):
                yield [tk, str(i)] + [fmt(v) for v in values[k, i]]

    return _write_rows(path, header, rows())


def write_trajectory_csv(path, traj: Trajectory) -> Path:
    return _write_particle_series(path, traj.grid, traj.states, "x")


def write_costate_csv(path, costate: CostateTrajectory) -> Path:
    return _write_particle_series(path, costate.grid, costate.covectors, "psi")


def write_control_csv(path, u: ControlField) -> Path:
    return _write_particle_series(path, u.grid, u.values, "u")


def write_riccati_csv(path, sol: RiccatiSolution) -> Path:
    d = sol.matrices.shape[1]
    header = ["t"] + [f"p_{i}{j}" for i in range(d) for j in range(d)]
    rows = ([fmt(tk)] + [fmt(v) for v in P.ravel()] for tk, P in zip(sol.grid.nodes, sol.matrices))
    return _write_rows(path, header, rows)


def write_residuals_csv(path, grid, per_node_gaps) -> Path:
    rows = ([fmt(tk), fmt(g)] for tk, g in zip(grid.nodes, per_node_gaps))
    return _write_rows(path, ["t", "max_gap"], rows)


def write_spike_csv(path, results) -> Path:
    """``results`` is a list of ``(experiment_index, (h, ratio) array)``."""
    rows = ([str(e), fmt(h), fmt(r)] for e, table in results for h, r in table)
    return _write_rows(path, ["experiment", "h", "ratio"], rows)


def read_particle_series(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a trajectory/costate/control CSV back into ``(t, values[k, i, :])``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = np.unique(data[:, 0])
    n = int(data[:, 1].max()) + 1
    return t, data[:, 2:].reshape(t.size, n, -1)


def write_report_json(path, report, files: dict[str, str], extra: dict | None = None) -> Path:
    """SweepReport as JSON; arrays are referenced by sibling CSV file names."""
    doc = {
        "converged": bool(report.converged),
        "iterations": int(report.iterations),
        "final_cost": report.final_cost,
        "final_residual": report.final_residual,
        "cost_history": [float(c) for c in report.cost_history],
        "residual_history": [float(r) for r in report.residual_history],
        "pmp_residual": report.residual.to_dict(),
        "grid": {"t0": report.trajectory.grid.t0, "t1": report.trajectory.grid.t1,
                 "n_steps": report.trajectory.grid.n_steps},
        "n_particles": report.trajectory.n_particles,
        "files": files,
    }
    if extra:
        doc.update(extra)
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
