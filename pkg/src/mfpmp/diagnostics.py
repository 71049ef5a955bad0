"""Eulerian view of a particle solution: joint state-costate measures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import ControlField, CostateTrajectory, Trajectory, _check_same_grid, costate_rhs, transversality
from .errors import InvalidInputError, TransversalityMismatch
from .measures import Ensemble
from .problem import MeanFieldProblem


@dataclass(frozen=True, eq=False)
class JointSnapshot:
    """Atoms ``(X_i(t), Psi_i(t))`` of the joint state-costate measure, shape (N, 2d)."""

    t: float
    pairs: np.ndarray
    transversality_residual: float | None = None

    @property
    def dim(self) -> int:
        return self.pairs.shape[1] // 2

    @property
    def states(self) -> np.ndarray:
        return self.pairs[:, : self.dim]

    @property
    def costates(self) -> np.ndarray:
        return self.pairs[:, self.dim :]


def joint_snapshot(traj: Trajectory, costate: CostateTrajectory, k: int,
                   problem: MeanFieldProblem | None = None, tol: float = 1e-10) -> JointSnapshot:
    """Pair state and costate particlewise at node ``k``.

    At the terminal node, when ``problem`` is given, the costate marginal is
    checked atom by atom against the transversality map applied to the
    state marginal (relative tolerance ``tol``).

    Raises
    ------
    TransversalityMismatch
        If that terminal check fails.
    """
    grid = _check_same_grid(traj, costate)
    if int(k) != k or not 0 <= k <= grid.n_steps:
        raise InvalidInputError(f"node index {k} out of range [0, {grid.n_steps}]")
    k = int(k)
    pairs = np.hstack([traj.states[k], costate.covectors[k]])
    pairs.setflags(write=False)
    residual = None
    if k == grid.n_steps and problem is not None:
        expected = transversality(problem, traj.states[k])
        residual = float(np.max(np.abs(costate.covectors[k] - expected)))
        scale = 1.0 + float(np.max(np.abs(expected)))
        if residual > tol * scale:
            raise TransversalityMismatch(
                f"terminal costate differs from the transversality map by {residual:.3e}"
            )
    return JointSnapshot(grid.time(k), pairs, residual)


@dataclass(frozen=True)
class TestFunction:
    """Smooth compactly supported ``phi(t, x, psi)`` with analytic derivatives.

    All callables take ``(t, x, psi)`` with ``x`` and ``psi`` stacks of rows
    and return one value (or gradient row) per particle.
    """

    __test__ = False  # not a pytest class

    phi: Callable
    dphi_dt: Callable
    dphi_dx: Callable
    dphi_dpsi: Callable


def weak_continuity_residual(traj: Trajectory, costate: CostateTrajectory, u: ControlField,
                             p: MeanFieldProblem, testfn: TestFunction) -> float:
    """Weak-form residual of the joint state-costate continuity equation.

    Integrates ``mean_i [d_t phi + grad_x phi . f + j_psi . grad_psi phi]``
    along the particle paths by the trapezoid rule (step ``k`` uses control
    ``u(t_k)`` at both ends), where ``j_psi`` is the costate velocity.
    Returns its absolute value; it vanishes in the continuum limit.
    """
    grid = _check_same_grid(traj, costate, u)
    h = grid.step
    t = grid.nodes
    x, psi = traj.states, costate.covectors

    def integrand(k, uk):
        m = Ensemble(x[k])
        jx = np.asarray(p.dynamics(t[k], x[k], m, uk), dtype=float)
        jpsi = costate_rhs(p, t[k], x[k], psi[k], uk, m)
        val = (
            np.asarray(testfn.dphi_dt(t[k], x[k], psi[k]), dtype=float)
            + np.einsum("ia,ia->i", np.asarray(testfn.dphi_dx(t[k], x[k], psi[k]), dtype=float), jx)
            + np.einsum("ia,ia->i", jpsi, np.asarray(testfn.dphi_dpsi(t[k], x[k], psi[k]), dtype=float))
        )
        return float(np.mean(val))

    total = 0.0
    for k in range(grid.n_steps):
        uk = u.values[k]
        total += 0.5 * h * (integrand(k, uk) + integrand(k + 1, uk))
    return abs(total)


def polynomial_bump(t_lo: float, t_hi: float, x_center, psi_center, radius: float, power: int = 6) -> TestFunction:
    """``phi = b(t) c(|x - x_c|^2 + |psi - psi_c|^2)`` with polynomial bumps.

    ``b(t) = ((t - t_lo)(t_hi - t) / w^2)^power`` on ``[t_lo, t_hi]`` and
    ``c(r2) = (1 - r2 / radius^2)^power`` inside the ball; both vanish
    outside, so ``phi`` is ``C^(power-1)`` with compact support.
    """
    xc = np.asarray(x_center, dtype=float)
    pc = np.asarray(psi_center, dtype=float)
    w2 = (0.5 * (t_hi - t_lo)) ** 2
    r2max = radius * radius

    def b(t):
        if t <= t_lo or t >= t_hi:
            return 0.0, 0.0
        g = (t - t_lo) * (t_hi - t) / w2
        dg = (t_hi + t_lo - 2.0 * t) / w2
        return g**power, power * g ** (power - 1) * dg

    def c(x, psi):
        r2 = np.sum((x - xc) ** 2, axis=1) + np.sum((psi - pc) ** 2, axis=1)
        inside = r2 < r2max
        s = np.where(inside, 1.0 - r2 / r2max, 0.0)
        val = s**power
        # d/d(r2) of s^power
        dval = np.where(inside, -power * s ** (power - 1) / r2max, 0.0)
        return val, dval

    def phi(t, x, psi):
        return b(t)[0] * c(x, psi)[0]

    def dphi_dt(t, x, psi):
        return b(t)[1] * c(x, psi)[0]

    def dphi_dx(t, x, psi):
        return b(t)[0] * c(x, psi)[1][:, None] * 2.0 * (x - xc)

    def dphi_dpsi(t, x, psi):
        return b(t)[0] * c(x, psi)[1][:, None] * 2.0 * (psi - pc)

    return TestFunction(phi, dphi_dt, dphi_dx, dphi_dpsi)
