"""Time integration of the particle system and its adjoint.

Conventions shared by every solver here:

* controls live on grid nodes and the left node's value holds over the
  whole step (piecewise constant);
* at each Runge-Kutta stage the measure argument is the empirical ensemble
  of the stage state of *all* particles;
* backward and variational solves reuse the stored forward states, linearly
  interpolated at half steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DivergenceError,
    GridMismatchError,
    InvalidInputError,
    PicardConvergenceError,
)
from .measures import Ensemble, TimeGrid, as_ensemble
from .problem import ControlSet, MeanFieldProblem


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Particle states at every grid node, shape (n_steps + 1, N, d)."""

    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        x = _frozen(self.states)
        if x.ndim != 3 or x.shape[0] != self.grid.n_nodes:
            raise InvalidInputError(
                f"trajectory states must have shape ({self.grid.n_nodes}, N, d), got {x.shape}"
            )
        object.__setattr__(self, "states", x)

    @property
    def n_particles(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def ensemble(self, k: int) -> Ensemble:
        return Ensemble(self.states[k])

    @property
    def ensembles(self) -> list[Ensemble]:
        return [Ensemble(x) for x in self.states]


@dataclass(frozen=True, eq=False)
class ControlField:
    """Node values ``u(t_k, particle i)``, shape (n_steps + 1, N, d').

    When ``control_set`` is given, values outside it are projected onto it,
    or rejected if ``strict`` is set.
    """

    grid: TimeGrid
    values: np.ndarray
    control_set: ControlSet | None = None
    strict: bool = False

    def __post_init__(self):
        u = np.array(self.values, dtype=float)
        if u.ndim != 3 or u.shape[0] != self.grid.n_nodes:
            raise InvalidInputError(
                f"control values must have shape ({self.grid.n_nodes}, N, d'), got {u.shape}"
            )
        if not np.all(np.isfinite(u)):
            raise InvalidInputError("control values must be finite")
        if self.control_set is not None:
            if self.strict and not self.control_set.contains(u):
                raise InvalidInputError("control values leave the control set (strict mode)")
            u = self.control_set.project(u)
        u.setflags(write=False)
        object.__setattr__(self, "values", u)

    @classmethod
    def constant(cls, grid: TimeGrid, n_particles: int, value, control_set=None) -> "ControlField":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        u = np.broadcast_to(value, (grid.n_nodes, n_particles, value.size))
        return cls(grid, u, control_set)

    @property
    def n_particles(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class CostateTrajectory:
    """Row covectors ``Psi(t_k, particle i)``, shape (n_steps + 1, N, d)."""

    grid: TimeGrid
    covectors: np.ndarray

    def __post_init__(self):
        psi = _frozen(self.covectors)
        if psi.ndim != 3 or psi.shape[0] != self.grid.n_nodes:
            raise InvalidInputError(
                f"costate must have shape ({self.grid.n_nodes}, N, d), got {psi.shape}"
            )
        object.__setattr__(self, "covectors", psi)


@dataclass(frozen=True, eq=False)
class VariationField:
    """First-order response ``Y`` to a spike at node ``start_index``.

    ``values[k]`` holds ``Y(t_{start_index + k})``.
    """

    grid: TimeGrid
    start_index: int
    values: np.ndarray

    def at_node(self, k: int) -> np.ndarray:
        """``Y`` at global node ``k`` (must satisfy ``k >= start_index``)."""
        if k < self.start_index:
            raise InvalidInputError(f"node {k} precedes the spike start {self.start_index}")
        return self.values[k - self.start_index]


def _check_on_grid(p: MeanFieldProblem, grid: TimeGrid) -> None:
    tol = 1e-12 * max(1.0, abs(p.horizon))
    if abs(grid.t0) > tol or abs(grid.t1 - p.horizon) > tol:
        raise GridMismatchError(f"grid [{grid.t0}, {grid.t1}] does not span [0, {p.horizon}]")


def _check_same_grid(*objs) -> TimeGrid:
    grid = objs[0].grid
    for o in objs[1:]:
        if o.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {o.grid}")
    return grid


def _stage_ensemble(x: np.ndarray, step: int, what: str = "state") -> Ensemble:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite {what} during integration", step)
    return Ensemble(x)


def _field(p: MeanFieldProblem, t: float, x: np.ndarray, u: np.ndarray, step: int) -> np.ndarray:
    m = _stage_ensemble(x, step)
    return np.asarray(p.dynamics(t, x, m, u), dtype=float)


def forward_solve(p: MeanFieldProblem, x0, u: ControlField) -> Trajectory:
    """Integrate ``dX_i/dt = f(t, X_i, m(t), u_i)`` with classical RK4.

    Raises
    ------
    DivergenceError
        If a state becomes non-finite; ``step`` names the first bad step.
    """
    x0 = as_ensemble(x0)
    grid = u.grid
    _check_on_grid(p, grid)
    if x0.dim != p.dim_x or u.dim != p.dim_u or u.n_particles != x0.n_particles:
        raise InvalidInputError("initial ensemble / control dimensions do not match the problem")
    h = grid.step
    t = grid.nodes
    out = np.empty((grid.n_nodes, x0.n_particles, x0.dim))
    x = np.array(x0.states)
    out[0] = x
    for k in range(grid.n_steps):
        uk = u.values[k]
        tk, tm = t[k], t[k] + 0.5 * h
        k1 = _field(p, tk, x, uk, k)
        k2 = _field(p, tm, x + 0.5 * h * k1, uk, k)
        k3 = _field(p, tm, x + 0.5 * h * k2, uk, k)
        k4 = _field(p, t[k + 1], x + h * k3, uk, k)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("non-finite state during forward integration", k)
        out[k + 1] = x
    return Trajectory(grid, out)


def picard_forward_solve(
    p: MeanFieldProblem, x0, u: ControlField, max_iter: int = 50, tol: float = 1e-10
) -> Trajectory:
    """Fixed-point (Picard) iteration on whole trajectories.

    Starts from the constant trajectory ``x0``. Each sweep integrates the
    previous iterate's velocity with the trapezoid rule, using the left
    node's control on each step. Stops once the sup over nodes of the L^2
    label distance between successive sweeps is at most ``tol``.

    Raises
    ------
    PicardConvergenceError
        After ``max_iter`` sweeps without meeting ``tol``.
    """
    x0 = as_ensemble(x0)
    grid = u.grid
    _check_on_grid(p, grid)
    if x0.dim != p.dim_x or u.dim != p.dim_u or u.n_particles != x0.n_particles:
        raise InvalidInputError("initial ensemble / control dimensions do not match the problem")
    h = grid.step
    t = grid.nodes
    xk = np.broadcast_to(x0.states, (grid.n_nodes,) + x0.states.shape).copy()
    residual = np.inf
    for it in range(1, max_iter + 1):
        new = np.empty_like(xk)
        new[0] = x0.states
        acc = np.array(x0.states)
        for k in range(grid.n_steps):
            uk = u.values[k]
            left = _field(p, t[k], xk[k], uk, k)
            right = _field(p, t[k + 1], xk[k + 1], uk, k)
            acc = acc + 0.5 * h * (left + right)
            new[k + 1] = acc
        if not np.all(np.isfinite(new)):
            raise DivergenceError("non-finite Picard iterate", int(np.argmin(np.all(np.isfinite(new), axis=(1, 2)))))
        diff = np.sqrt(np.mean(np.sum((new - xk) ** 2, axis=2), axis=1))
        residual = float(np.max(diff))
        xk = new
        if residual <= tol:
            return Trajectory(grid, xk)
    raise PicardConvergenceError(residual, max_iter)


def transversality(p: MeanFieldProblem, x_terminal) -> np.ndarray:
    """Terminal costate ``-grad_x sigma(X_i) - (1/N) sum_j grad_m sigma(X_j, m, X_i)``."""
    m = as_ensemble(x_terminal)
    x = m.states
    n, d = x.shape
    xj = np.repeat(x, n, axis=0)
    yi = np.tile(x, (n, 1))
    gm = np.asarray(p.terminal_cost_dm(xj, m, yi), dtype=float).reshape(n, n, d)
    return -np.asarray(p.terminal_cost_dx(x, m), dtype=float) - _kernels.pair_average(gm)


def costate_rhs(p: MeanFieldProblem, t: float, x: np.ndarray, psi: np.ndarray, u: np.ndarray,
                m: Ensemble | None = None) -> np.ndarray:
    """Right-hand side of the costate equation for every particle at once.

    ``-Psi_i f_x + f0_x - (1/N) sum_j Psi_j f_m(X_j, m, X_i, u_j) + (1/N) sum_j f0_m(X_j, m, X_i, u_j)``
    """
    m = Ensemble(x) if m is None else m
    n, d = x.shape
    jx = np.asarray(p.dynamics_dx(t, x, m, u), dtype=float)
    out = -np.einsum("ia,iab->ib", psi, jx) + np.asarray(p.running_cost_dx(t, x, m, u), dtype=float)
    xj = np.repeat(x, n, axis=0)
    yi = np.tile(x, (n, 1))
    uj = np.repeat(u, n, axis=0)
    gf = np.asarray(p.dynamics_dm(t, xj, m, yi, uj), dtype=float).reshape(n, n, d, d)
    g0 = np.asarray(p.running_cost_dm(t, xj, m, yi, uj), dtype=float).reshape(n, n, d)
    return out - _kernels.covector_pair_average(psi, gf) + _kernels.pair_average(g0)


def costate_solve(p: MeanFieldProblem, traj: Trajectory, u: ControlField) -> CostateTrajectory:
    """Integrate the costate backward from the transversality condition (RK4)."""
    grid = _check_same_grid(traj, u)
    if traj.n_particles != u.n_particles:
        raise InvalidInputError("trajectory and control have different particle counts")
    h = grid.step
    t = grid.nodes
    x = traj.states
    out = np.empty_like(x)
    psi = transversality(p, x[-1])
    if not np.all(np.isfinite(psi)):
        raise DivergenceError("non-finite terminal costate", grid.n_steps)
    out[-1] = psi
    for k in range(grid.n_steps - 1, -1, -1):
        uk = u.values[k]
        xa, xb = x[k + 1], x[k]
        xm = 0.5 * (xa + xb)
        ma, mm, mb = Ensemble(xa), Ensemble(xm), Ensemble(xb)
        tm = t[k] + 0.5 * h
        k1 = costate_rhs(p, t[k + 1], xa, psi, uk, ma)
        k2 = costate_rhs(p, tm, xm, psi - 0.5 * h * k1, uk, mm)
        k3 = costate_rhs(p, tm, xm, psi - 0.5 * h * k2, uk, mm)
        k4 = costate_rhs(p, t[k], xb, psi - h * k3, uk, mb)
        psi = psi - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(psi)):
            raise DivergenceError("non-finite costate during backward integration", k)
        out[k] = psi
    return CostateTrajectory(grid, out)


def _variation_rhs(p, t, x, y, u, m):
    n, d = x.shape
    jx = np.asarray(p.dynamics_dx(t, x, m, u), dtype=float)
    out = np.einsum("iab,ib->ia", jx, y)
    xi = np.repeat(x, n, axis=0)
    yj = np.tile(x, (n, 1))
    ui = np.repeat(u, n, axis=0)
    gf = np.asarray(p.dynamics_dm(t, xi, m, yj, ui), dtype=float).reshape(n, n, d, d)
    return out + _kernels.vector_pair_average(gf, y)


def variational_solve(p: MeanFieldProblem, traj: Trajectory, u: ControlField, s_index: int, nu) -> VariationField:
    """Linearized response to replacing ``u(t_s)`` by ``nu`` on a short interval.

    ``Y_i(t_s) = f(t_s, X_i, m, nu_i) - f(t_s, X_i, m, u_i(t_s))``, then forward
    RK4 of ``dY_i/dt = f_x Y_i + (1/N) sum_j f_m(X_i, m, X_j, u_i) Y_j`` to T.
    """
    grid = _check_same_grid(traj, u)
    n = grid.n_steps
    if int(s_index) != s_index or not 0 <= s_index < n:
        raise InvalidInputError(f"s_index must be a node in [0, {n - 1}], got {s_index}")
    s = int(s_index)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), u.values[s].shape)
    h = grid.step
    t = grid.nodes
    x = traj.states
    m = Ensemble(x[s])
    y = np.asarray(p.dynamics(t[s], x[s], m, nu), dtype=float) - np.asarray(
        p.dynamics(t[s], x[s], m, u.values[s]), dtype=float
    )
    out = np.empty((n - s + 1,) + y.shape)
    out[0] = y
    for k in range(s, n):
        uk = u.values[k]
        xa, xb = x[k], x[k + 1]
        xm = 0.5 * (xa + xb)
        ma, mm, mb = Ensemble(xa), Ensemble(xm), Ensemble(xb)
        tm = t[k] + 0.5 * h
        k1 = _variation_rhs(p, t[k], xa, y, uk, ma)
        k2 = _variation_rhs(p, tm, xm, y + 0.5 * h * k1, uk, mm)
        k3 = _variation_rhs(p, tm, xm, y + 0.5 * h * k2, uk, mm)
        k4 = _variation_rhs(p, t[k + 1], xb, y + h * k3, uk, mb)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError("non-finite variation", k)
        out[k - s + 1] = y
    return VariationField(grid, s, _frozen(out))
