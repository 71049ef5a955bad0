"""Riccati machinery for the mean-field linear-quadratic regulator.

The optimal feedback splits each particle's state into its deviation from
the ensemble mean, governed by ``P1`` (terminal value ``K_x + K_m``, state
weight ``Q_x + Q_m``), and the mean itself, governed by ``P2`` (terminal
value ``K_x``, state weight ``Q_x``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ControlField, Trajectory, _check_on_grid
from .errors import DivergenceError, GridMismatchError, InvalidInputError, RiccatiError
from .measures import TimeGrid, as_ensemble
from .problem import LqrSpec, _const_fn, build_lqr_problem


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Symmetric matrices ``P(t_k)`` and their time derivatives at the nodes."""

    grid: TimeGrid
    matrices: np.ndarray
    derivatives: np.ndarray

    def __post_init__(self):
        for name in ("matrices", "derivatives"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def at_midpoint(self, k: int) -> np.ndarray:
        """Cubic Hermite value of ``P`` at ``(t_k + t_{k+1}) / 2``."""
        h = self.grid.step
        P, dP = self.matrices, self.derivatives
        mid = 0.5 * (P[k] + P[k + 1]) + (h / 8.0) * (dP[k] - dP[k + 1])
        return 0.5 * (mid + mid.T)


def _riccati_rhs(A, B, R, Q, t, P):
    a, b, q = A(t), B(t), Q(t)
    pb = P @ b
    return -P @ a - a.T @ P + pb @ np.linalg.solve(R(t), pb.T) - q


def solve_riccati(A, B, R, Q, K_terminal, grid: TimeGrid) -> RiccatiSolution:
    """Integrate ``dP/dt = -PA - A^T P + P B R^{-1} B^T P - Q``, ``P(T) = K``.

    Classical RK4 backward from ``grid.t1``; each stored matrix is replaced by
    its symmetric part. Matrix arguments may be callables of time or
    constants.

    Raises
    ------
    RiccatiError
        If ``R`` is singular at a node or the solution blows up.
    """
    A, B, R, Q = (_const_fn(M) for M in (A, B, R, Q))
    K = np.atleast_2d(np.asarray(K_terminal, dtype=float))
    t = grid.nodes
    h = grid.step
    for k, tk in enumerate(t):
        r = R(tk)
        if not np.all(np.isfinite(r)) or np.linalg.cond(r) > 1e14:
            raise RiccatiError("R(t) is singular", node=k)
    n = grid.n_nodes
    Ps = np.empty((n,) + K.shape)
    dPs = np.empty_like(Ps)
    P = 0.5 * (K + K.T)
    Ps[-1] = P
    for k in range(grid.n_steps - 1, -1, -1):
        tb, tm = t[k + 1], t[k] + 0.5 * h
        k1 = _riccati_rhs(A, B, R, Q, tb, P)
        k2 = _riccati_rhs(A, B, R, Q, tm, P - 0.5 * h * k1)
        k3 = _riccati_rhs(A, B, R, Q, tm, P - 0.5 * h * k2)
        k4 = _riccati_rhs(A, B, R, Q, t[k], P - h * k3)
        P = P - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        P = 0.5 * (P + P.T)
        if not np.all(np.isfinite(P)):
            raise RiccatiError("Riccati solution blew up", node=k)
        Ps[k] = P
    for k in range(n):
        d = _riccati_rhs(A, B, R, Q, t[k], Ps[k])
        dPs[k] = 0.5 * (d + d.T)
    return RiccatiSolution(grid, Ps, dPs)


def _feedback(P1, P2, R, B, x, xbar):
    """Rows ``u_i = -R^{-1} B^T [P1 (x_i - xbar) + P2 xbar]``."""
    z = (x - xbar) @ P1.T + xbar @ P2.T
    return -np.linalg.solve(R, (z @ B).T).T


def lqr_feedback_control(P1: RiccatiSolution, P2: RiccatiSolution, R, B, x, xbar, t_k: int) -> np.ndarray:
    """Optimal mean-field LQR feedback at node ``t_k``.

    ``x`` is a state vector or a stack of rows, ``xbar`` the ensemble mean.
    """
    if P1.grid != P2.grid:
        raise GridMismatchError("P1 and P2 live on different grids")
    if int(t_k) != t_k or not 0 <= t_k < P1.grid.n_nodes:
        raise InvalidInputError(f"node index {t_k} out of range")
    R, B = _const_fn(R), _const_fn(B)
    t = P1.grid.time(int(t_k))
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    u = _feedback(P1.matrices[t_k], P2.matrices[t_k], R(t), B(t), np.atleast_2d(x), np.asarray(xbar, dtype=float))
    return u[0] if single else u


@dataclass(frozen=True, eq=False)
class ClosedLoopResult:
    trajectory: Trajectory
    control: ControlField
    cost: float
    P1: RiccatiSolution
    P2: RiccatiSolution

    def __iter__(self):
        # unpacks as (trajectory, control, cost)
        return iter((self.trajectory, self.control, self.cost))


def riccati_pair(spec: LqrSpec, grid: TimeGrid) -> tuple[RiccatiSolution, RiccatiSolution]:
    """``(P1, P2)``: deviation and mean Riccati solutions for ``spec``."""
    Qx, Qm = spec.Q_x, spec.Q_m
    P1 = solve_riccati(spec.A, spec.B, spec.R, lambda t: Qx(t) + Qm(t), spec.K_x + spec.K_m, grid)
    P2 = solve_riccati(spec.A, spec.B, spec.R, Qx, spec.K_x, grid)
    return P1, P2


def lqr_closed_loop(spec: LqrSpec, x0, grid: TimeGrid) -> ClosedLoopResult:
    """Simulate the ensemble under the optimal mean-field feedback.

    RK4 with the feedback recomputed at every stage from the stage ensemble
    mean; the Riccati matrices at half steps come from cubic Hermite
    interpolation. The returned control holds the feedback at the nodes and
    the cost is :func:`mfpmp.pmp.total_cost` of that node control.
    """
    from .pmp import total_cost

    x0 = as_ensemble(x0)
    problem = build_lqr_problem(spec)
    _check_on_grid(problem, grid)
    if x0.dim != spec.dim_x:
        raise InvalidInputError("initial ensemble dimension does not match the LQR spec")
    P1, P2 = riccati_pair(spec, grid)
    A, B, R = spec.A, spec.B, spec.R
    t = grid.nodes
    h = grid.step

    def rhs(tt, x, p1, p2):
        xbar = x.mean(axis=0)
        b = B(tt)
        u = _feedback(p1, p2, R(tt), b, x, xbar)
        return x @ A(tt).T + u @ b.T

    xs = np.empty((grid.n_nodes,) + x0.states.shape)
    us = np.empty((grid.n_nodes, x0.n_particles, spec.dim_u))
    x = np.array(x0.states)
    xs[0] = x
    for k in range(grid.n_steps):
        p1a, p2a = P1.matrices[k], P2.matrices[k]
        p1m, p2m = P1.at_midpoint(k), P2.at_midpoint(k)
        p1b, p2b = P1.matrices[k + 1], P2.matrices[k + 1]
        tm = t[k] + 0.5 * h
        k1 = rhs(t[k], x, p1a, p2a)
        k2 = rhs(tm, x + 0.5 * h * k1, p1m, p2m)
        k3 = rhs(tm, x + 0.5 * h * k2, p1m, p2m)
        k4 = rhs(t[k + 1], x + h * k3, p1b, p2b)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("non-finite state in closed-loop simulation", k)
        xs[k + 1] = x
    for k in range(grid.n_nodes):
        xk = xs[k]
        us[k] = _feedback(P1.matrices[k], P2.matrices[k], R(t[k]), B(t[k]), xk, xk.mean(axis=0))
    traj = Trajectory(grid, xs)
    control = ControlField(grid, us)
    return ClosedLoopResult(traj, control, total_cost(problem, traj, control), P1, P2)
