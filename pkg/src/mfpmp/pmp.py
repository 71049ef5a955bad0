"""Hamiltonian, cost functional, optimality residuals and the sweep solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ControlField,
    CostateTrajectory,
    Trajectory,
    _check_same_grid,
    costate_solve,
    forward_solve,
    transversality,
    variational_solve,
)
from .errors import HamiltonianAscentError, InvalidInputError
from .measures import Ensemble, as_ensemble
from .problem import MeanFieldProblem

log = logging.getLogger(__name__)

ASCENT_TOL = 1e-8
ASCENT_MAX_ITER = 500


def _rows(a, width: int) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=float)
    single = a.ndim <= 1
    return a.reshape(-1, width), single


def hamiltonian(p: MeanFieldProblem, t: float, x, m, psi, u):
    """``H = psi f(t, x, m, u) - f0(t, x, m, u)``.

    Accepts single vectors (returns a float) or stacks of rows (returns an
    array with one value per row).
    """
    m = as_ensemble(m)
    x, single = _rows(x, p.dim_x)
    psi, _ = _rows(psi, p.dim_x)
    u, _ = _rows(u, p.dim_u)
    val = np.einsum("ia,ia->i", psi, np.asarray(p.dynamics(t, x, m, u), dtype=float)) - np.asarray(
        p.running_cost(t, x, m, u), dtype=float
    )
    return float(val[0]) if single else val


def hamiltonian_gradient_u(p: MeanFieldProblem, t, x, m, psi, u) -> np.ndarray:
    """Central finite-difference gradient of ``H`` in ``u``, one row per particle.

    Step ``1e-6 * (1 + |u_i|)`` per row; ``u`` derivatives of ``f`` and ``f0``
    are not part of the problem data.
    """
    m = as_ensemble(m)
    x, single = _rows(x, p.dim_x)
    psi, _ = _rows(psi, p.dim_x)
    u, _ = _rows(u, p.dim_u)
    step = 1e-6 * (1.0 + np.linalg.norm(u, axis=1))
    grad = np.empty_like(u)
    for c in range(p.dim_u):
        e = np.zeros_like(u)
        e[:, c] = step
        hp = hamiltonian(p, t, x, m, psi, u + e)
        hm = hamiltonian(p, t, x, m, psi, u - e)
        grad[:, c] = (hp - hm) / (2.0 * step)
    return grad[0] if single else grad


def maximize_hamiltonian(p: MeanFieldProblem, t, x, m, psi, u_start=None):
    """Maximize ``u -> H(t, x, m, psi, u)`` over the control set.

    For LQR problems the maximizer ``R^{-1} B^T psi^T`` is projected onto the
    control set; the projection is the exact constrained maximizer when R is
    a multiple of the identity. Otherwise projected gradient ascent with
    Armijo backtracking runs from ``u_start`` (default: projection of 0).

    Raises
    ------
    HamiltonianAscentError
        If the projected-gradient norm stays above 1e-8 after 500 iterations.
    """
    m = as_ensemble(m)
    cs = p.control_set
    x, single = _rows(x, p.dim_x)
    psi, _ = _rows(psi, p.dim_x)
    if p.lqr is not None:
        B, R = p.lqr.B(t), p.lqr.R(t)
        u = np.linalg.solve(R, (psi @ B).T).T
        u = cs.project(u)
        return u[0] if single else u
    if u_start is None:
        u = cs.project(np.zeros((x.shape[0], p.dim_u)))
    else:
        u = cs.project(_rows(u_start, p.dim_u)[0])
    h_cur = hamiltonian(p, t, x, m, psi, u)
    active = np.ones(x.shape[0], dtype=bool)
    pg_norm = np.inf
    for _ in range(ASCENT_MAX_ITER):
        idx = np.flatnonzero(active)
        g = hamiltonian_gradient_u(p, t, x[idx], m, psi[idx], u[idx])
        pg = cs.project(u[idx] + g) - u[idx]
        pg_norm_rows = np.linalg.norm(pg, axis=1)
        done = pg_norm_rows <= ASCENT_TOL
        active[idx[done]] = False
        pg_norm = float(np.max(pg_norm_rows))
        if not active.any():
            break
        keep = ~done
        idx, g = idx[keep], g[keep]
        alpha = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        new_u = u[idx].copy()
        new_h = h_cur[idx].copy()
        while pending.any() and np.max(alpha[pending]) > 1e-14:
            sel = np.flatnonzero(pending)
            cand = cs.project(u[idx[sel]] + alpha[sel, None] * g[sel])
            hc = hamiltonian(p, t, x[idx[sel]], m, psi[idx[sel]], cand)
            gain = np.einsum("ia,ia->i", g[sel], cand - u[idx[sel]])
            ok = np.isfinite(hc) & (hc >= h_cur[idx[sel]] + 1e-4 * gain)
            new_u[sel[ok]] = cand[ok]
            new_h[sel[ok]] = hc[ok]
            pending[sel[ok]] = False
            alpha[sel[~ok]] *= 0.5
        u[idx] = new_u
        h_cur[idx] = new_h
        if pending.any():
            raise HamiltonianAscentError(u[0] if single else u, pg_norm)
    else:
        if active.any():
            raise HamiltonianAscentError(u[0] if single else u, pg_norm)
    return u[0] if single else u


def total_cost(p: MeanFieldProblem, traj: Trajectory, u: ControlField) -> float:
    """Particle average of ``sigma(X_i(T), m(T))`` plus the running cost.

    The running cost on step ``k`` is the trapezoid of ``f0`` at both ends
    of the step under the step's control ``u(t_k)``, matching the
    piecewise-constant control convention of :func:`forward_solve`.
    """
    grid = _check_same_grid(traj, u)
    h = grid.step
    t = grid.nodes
    x = traj.states
    ens = [Ensemble(xk) for xk in x]
    terminal = float(np.mean(p.terminal_cost(x[-1], ens[-1])))
    running = 0.0
    for k in range(grid.n_steps):
        uk = u.values[k]
        left = np.mean(p.running_cost(t[k], x[k], ens[k], uk))
        right = np.mean(p.running_cost(t[k + 1], x[k + 1], ens[k + 1], uk))
        running += 0.5 * h * (left + right)
    return terminal + float(running)


@dataclass(frozen=True, eq=False)
class PmpResidualReport:
    """How far a (state, control, costate) triple is from the optimality conditions."""

    max_hamiltonian_gap: float
    mean_gap: float
    transversality_residual: float
    per_node_gaps: np.ndarray
    maximizers: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "max_hamiltonian_gap": self.max_hamiltonian_gap,
            "mean_gap": self.mean_gap,
            "transversality_residual": self.transversality_residual,
        }


def pmp_residual(p: MeanFieldProblem, traj: Trajectory, u: ControlField, costate: CostateTrajectory) -> PmpResidualReport:
    """Hamiltonian-maximization gaps at every node and particle, plus the
    terminal mismatch against the transversality map."""
    grid = _check_same_grid(traj, u, costate)
    t = grid.nodes
    gaps = np.empty((grid.n_nodes, traj.n_particles))
    best = np.empty_like(u.values)
    for k in range(grid.n_nodes):
        x, psi, uk = traj.states[k], costate.covectors[k], u.values[k]
        m = Ensemble(x)
        uh = maximize_hamiltonian(p, t[k], x, m, psi, u_start=uk)
        best[k] = uh
        gaps[k] = hamiltonian(p, t[k], x, m, psi, uh) - hamiltonian(p, t[k], x, m, psi, uk)
    trans = transversality(p, traj.states[-1])
    return PmpResidualReport(
        max_hamiltonian_gap=float(np.max(gaps)),
        mean_gap=float(np.mean(gaps)),
        transversality_residual=float(np.max(np.abs(costate.covectors[-1] - trans))),
        per_node_gaps=np.max(gaps, axis=1),
        maximizers=best,
    )


def spike_variation_experiment(
    p: MeanFieldProblem, traj_opt: Trajectory, u_opt: ControlField, s_index: int, nu, h_list
) -> np.ndarray:
    """First-order spike-variation test.

    For each width ``h`` (a whole number of grid steps) the control is
    replaced by ``nu`` on ``[t_s, t_s + h)``, the perturbed flow ``Z^h`` is
    integrated and compared against ``X + h Y`` with ``Y`` from
    :func:`variational_solve`. ``traj_opt`` must be ``forward_solve`` of
    ``u_opt``.

    Returns
    -------
    ndarray, shape (len(h_list), 2)
        Rows ``(h, ratio)`` with ``ratio = max_{t_k >= t_s + h} |Z^h - X - h Y|_{L^2} / h``.
    """
    grid = _check_same_grid(traj_opt, u_opt)
    s = int(s_index)
    n = grid.n_steps
    if s != s_index or not 0 <= s < n:
        raise InvalidInputError(f"s_index must be a node in [0, {n - 1}], got {s_index}")
    nu = np.broadcast_to(np.asarray(nu, dtype=float), u_opt.values[s].shape)
    if not p.control_set.contains(nu):
        raise InvalidInputError("spike value nu must lie in the control set")
    y = variational_solve(p, traj_opt, u_opt, s, nu)
    x0 = traj_opt.ensemble(0)
    rows = []
    for h in h_list:
        steps = int(round(h / grid.step))
        if steps < 1 or abs(steps * grid.step - h) > 1e-9 * grid.step:
            raise InvalidInputError(f"spike width {h} is not a whole number of grid steps")
        if s + steps > n:
            raise InvalidInputError(f"spike [t_s, t_s + {h}) runs past the horizon")
        values = np.array(u_opt.values)
        values[s : s + steps] = nu
        z = forward_solve(p, x0, ControlField(grid, values))
        h_exact = steps * grid.step
        worst = 0.0
        for k in range(s + steps, n + 1):
            r = z.states[k] - traj_opt.states[k] - h_exact * y.at_node(k)
            worst = max(worst, float(np.sqrt(np.mean(np.sum(r * r, axis=1)))))
        rows.append((h_exact, worst / h_exact))
    return np.array(rows, dtype=float).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class SweepReport:
    """Outcome of :func:`sweep_solve`; state, costate and control are mutually consistent."""

    control: ControlField
    trajectory: Trajectory
    costate: CostateTrajectory
    cost_history: np.ndarray
    residual_history: np.ndarray
    converged: bool
    iterations: int
    residual: PmpResidualReport

    @property
    def final_cost(self) -> float:
        return float(self.cost_history[-1])

    @property
    def final_residual(self) -> float:
        return float(self.residual_history[-1])


def sweep_solve(
    p: MeanFieldProblem,
    x0,
    u_init: ControlField,
    damping: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 200,
    stall_window: int = 5,
) -> SweepReport:
    """Forward-backward sweep on the optimality system.

    Each iteration solves the state forward, the costate backward, maximizes
    the Hamiltonian at every node and particle, and moves the control a
    fraction ``damping`` toward the maximizer (a convex combination, so the
    control stays feasible). Stops when the largest Hamiltonian gap is at
    most ``tol`` (``converged=True``), when the relative cost decrease stays
    below 1e-12 for ``stall_window`` iterations, or after ``max_iter``.
    """
    if not 0 < damping <= 1:
        raise InvalidInputError(f"damping must lie in (0, 1], got {damping}")
    x0 = as_ensemble(x0)
    grid = u_init.grid
    u = ControlField(grid, u_init.values, p.control_set)
    costs: list[float] = []
    residuals: list[float] = []
    stalled = 0
    converged = False
    it = 0
    while True:
        it += 1
        traj = forward_solve(p, x0, u)
        costate = costate_solve(p, traj, u)
        cost = total_cost(p, traj, u)
        report = pmp_residual(p, traj, u, costate)
        if costs:
            prev = costs[-1]
            rel = (prev - cost) / max(abs(prev), 1e-300)
            stalled = stalled + 1 if rel < 1e-12 else 0
        costs.append(cost)
        residuals.append(report.max_hamiltonian_gap)
        log.debug("sweep %d: cost=%.12g gap=%.3e", it, cost, report.max_hamiltonian_gap)
        if report.max_hamiltonian_gap <= tol:
            converged = True
            break
        if stalled >= stall_window or it >= max_iter:
            break
        values = (1.0 - damping) * u.values + damping * report.maximizers
        u = ControlField(grid, values, p.control_set)
    return SweepReport(
        control=u,
        trajectory=traj,
        costate=costate,
        cost_history=np.array(costs),
        residual_history=np.array(residuals),
        converged=converged,
        iterations=it,
        residual=report,
    )
