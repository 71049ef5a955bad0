"""Mean-field control problems: data, measure derivatives, control sets.

All problem callables are vectorized over a leading particle axis. With
``x`` of shape (n, d), ``u`` of shape (n, d') and ``m`` an
:class:`~mfpmp.measures.Ensemble`:

=====================  ==========================  ==============
callable               arguments                   returns
=====================  ==========================  ==============
``dynamics``           (t, x, m, u)                (n, d)
``dynamics_dx``        (t, x, m, u)                (n, d, d)
``dynamics_dm``        (t, x, m, y, u)             (n, d, d)
``running_cost``       (t, x, m, u)                (n,)
``running_cost_dx``    (t, x, m, u)                (n, d)
``running_cost_dm``    (t, x, m, y, u)             (n, d)
``terminal_cost``      (x, m)                      (n,)
``terminal_cost_dx``   (x, m)                      (n, d)
``terminal_cost_dm``   (x, m, y)                   (n, d)
=====================  ==========================  ==============

Rows of ``x``, ``y`` and ``u`` are aligned: row ``r`` of the result is the
derivative at ``(x[r], m, y[r], u[r])``. Measure derivatives are intrinsic
derivatives in the extra point ``y``; covectors are returned as rows.
Callables must be pure, since solvers may evaluate them from several threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .measures import Ensemble, as_ensemble

ArrayFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class ControlSet:
    """Closed convex control set: all of R^d', a box, or a Euclidean ball."""

    kind: str = "unconstrained"
    dim: int | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind == "unconstrained":
            return
        if self.kind == "box":
            lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
            hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
            if lo.shape != hi.shape or lo.ndim != 1:
                raise InvalidInputError("box bounds must be vectors of equal length")
            if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
                raise InvalidInputError("box bounds must satisfy lower <= upper")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
            object.__setattr__(self, "dim", lo.size)
        elif self.kind == "ball":
            c = np.atleast_1d(np.asarray(self.center, dtype=float))
            if not (self.radius is not None and np.isfinite(self.radius) and self.radius > 0):
                raise InvalidInputError("ball radius must be positive")
            if not np.all(np.isfinite(c)):
                raise InvalidInputError("ball center must be finite")
            object.__setattr__(self, "center", c)
            object.__setattr__(self, "radius", float(self.radius))
            object.__setattr__(self, "dim", c.size)
        else:
            raise InvalidInputError(f"unknown control set kind {self.kind!r}")

    @classmethod
    def unconstrained(cls, dim: int | None = None) -> "ControlSet":
        return cls("unconstrained", dim=dim)

    @classmethod
    def box(cls, lower, upper) -> "ControlSet":
        return cls("box", lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius: float) -> "ControlSet":
        return cls("ball", center=center, radius=radius)

    def project(self, u) -> np.ndarray:
        """Euclidean projection of a vector or a stack of row vectors."""
        u = np.asarray(u, dtype=float)
        if self.kind == "unconstrained":
            return u.copy()
        if self.kind == "box":
            return np.clip(u, self.lower, self.upper)
        off = u - self.center
        norm = np.linalg.norm(off, axis=-1, keepdims=True)
        scale = np.where(norm > self.radius, self.radius / np.where(norm > 0, norm, 1.0), 1.0)
        return self.center + off * scale

    def contains(self, u, tol: float = 1e-12) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(np.abs(self.project(u) - u) <= tol * (1.0 + np.abs(u))))

    def to_dict(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}
        if self.kind == "ball":
            return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}
        return {"kind": "unconstrained"}


def project_control(cs: ControlSet, u) -> np.ndarray:
    """Euclidean projection of ``u`` onto the control set."""
    return cs.project(u)


def _const_fn(value):
    if callable(value):
        return value
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    arr.setflags(write=False)
    return lambda t: arr


@dataclass(frozen=True)
class LqrSpec:
    """Data of the mean-field linear-quadratic regulator.

    ``A, B, R, Q_x, Q_m`` are callables of time returning matrices (constant
    arrays are accepted and wrapped); ``K_x, K_m`` are constant matrices.
    Dynamics ``dX/dt = A X + B u``; the running and terminal costs penalize
    the state, the control, and the ensemble variance weighted by ``Q_m`` and
    ``K_m``.
    """

    A: ArrayFn
    B: ArrayFn
    R: ArrayFn
    Q_x: ArrayFn
    Q_m: ArrayFn
    K_x: np.ndarray
    K_m: np.ndarray
    horizon: float = 1.0
    control_set: ControlSet = field(default_factory=ControlSet.unconstrained)

    def __post_init__(self):
        for name in ("A", "B", "R", "Q_x", "Q_m"):
            object.__setattr__(self, name, _const_fn(getattr(self, name)))
        for name in ("K_x", "K_m"):
            k = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            k.setflags(write=False)
            object.__setattr__(self, name, k)
        if not self.horizon > 0:
            raise InvalidInputError("horizon must be positive")
        d = self.K_x.shape[0]
        for t in (0.0, 0.5 * self.horizon, self.horizon):
            A, B, R = self.A(t), self.B(t), self.R(t)
            if A.shape != (d, d):
                raise InvalidInputError(f"A(t) must be {d}x{d}, got {A.shape}")
            if B.ndim != 2 or B.shape[0] != d:
                raise InvalidInputError(f"B(t) must have {d} rows, got {B.shape}")
            if R.shape != (B.shape[1], B.shape[1]):
                raise InvalidInputError(f"R(t) must be {B.shape[1]}x{B.shape[1]}, got {R.shape}")
            mats = {"R": R, "Q_x": self.Q_x(t), "Q_m": self.Q_m(t), "K_x": self.K_x, "K_m": self.K_m}
            for name, M in mats.items():
                if name != "R" and M.shape != (d, d):
                    raise InvalidInputError(f"{name} must be {d}x{d}, got {M.shape}")
                if not np.all(np.isfinite(M)) or np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
                    raise InvalidInputError(f"{name} must be finite and symmetric")
            try:
                np.linalg.cholesky(R)
            except np.linalg.LinAlgError:
                raise InvalidInputError(f"R(t) must be positive definite (t={t})") from None

    @property
    def dim_x(self) -> int:
        return self.K_x.shape[0]

    @property
    def dim_u(self) -> int:
        return self.B(0.0).shape[1]

    @classmethod
    def scalar_benchmark(cls, horizon: float = 1.0) -> "LqrSpec":
        """T=1, A=0, B=R=K_x=1, all other weights 0."""
        z, one = [[0.0]], [[1.0]]
        return cls(A=z, B=one, R=one, Q_x=z, Q_m=z, K_x=one, K_m=z, horizon=horizon)


@dataclass(frozen=True)
class MeanFieldProblem:
    """Dynamics, costs and their state/measure derivatives, plus the control set.

    If ``sample_states`` is given, every callable is evaluated once on it (with
    ``sample_controls``, default zero projected onto the control set) and the
    results are checked for shape and finiteness.
    """

    dim_x: int
    dim_u: int
    horizon: float
    dynamics: ArrayFn
    dynamics_dx: ArrayFn
    dynamics_dm: ArrayFn
    running_cost: ArrayFn
    running_cost_dx: ArrayFn
    running_cost_dm: ArrayFn
    terminal_cost: ArrayFn
    terminal_cost_dx: ArrayFn
    terminal_cost_dm: ArrayFn
    control_set: ControlSet = field(default_factory=ControlSet.unconstrained)
    lqr: LqrSpec | None = None
    name: str = "problem"
    sample_states: np.ndarray | None = field(default=None, repr=False, compare=False)
    sample_controls: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_u < 1 or not self.horizon > 0:
            raise InvalidInputError("dimensions must be positive and the horizon T > 0")
        if self.control_set.dim not in (None, self.dim_u):
            raise InvalidInputError("control set dimension does not match dim_u")
        if self.sample_states is not None:
            self.smoke_probe(self.sample_states, self.sample_controls)

    def smoke_probe(self, states, controls=None) -> None:
        """Evaluate every callable at the sample points; raise on bad output."""
        m = as_ensemble(states)
        x = m.states
        n, d, du = x.shape[0], self.dim_x, self.dim_u
        if m.dim != d:
            raise InvalidInputError(f"probe states have dim {m.dim}, expected {d}")
        u = np.zeros((n, du)) if controls is None else np.asarray(controls, dtype=float).reshape(n, du)
        u = self.control_set.project(u)
        t = 0.5 * self.horizon
        checks = {
            "dynamics": (self.dynamics(t, x, m, u), (n, d)),
            "dynamics_dx": (self.dynamics_dx(t, x, m, u), (n, d, d)),
            "dynamics_dm": (self.dynamics_dm(t, x, m, x[::-1], u), (n, d, d)),
            "running_cost": (self.running_cost(t, x, m, u), (n,)),
            "running_cost_dx": (self.running_cost_dx(t, x, m, u), (n, d)),
            "running_cost_dm": (self.running_cost_dm(t, x, m, x[::-1], u), (n, d)),
            "terminal_cost": (self.terminal_cost(x, m), (n,)),
            "terminal_cost_dx": (self.terminal_cost_dx(x, m), (n, d)),
            "terminal_cost_dm": (self.terminal_cost_dm(x, m, x[::-1]), (n, d)),
        }
        for name, (value, shape) in checks.items():
            value = np.asarray(value)
            if value.shape != shape:
                raise InvalidInputError(f"{name} returned shape {value.shape}, expected {shape}")
            if not np.all(np.isfinite(value)):
                raise InvalidInputError(f"{name} returned non-finite values at the probe points")


def grad_mean_functional(grad_phi: Callable[[np.ndarray], np.ndarray], m: Ensemble) -> np.ndarray:
    """Intrinsic derivative of ``m -> phi(mean(m))``.

    It equals ``grad_phi(mean(m))`` and does not depend on the evaluation
    point ``y``.
    """
    m = as_ensemble(m)
    g = np.asarray(grad_phi(np.array(m.mean)), dtype=float).reshape(m.dim)
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("grad_phi is not finite at the ensemble mean")
    return g


def grad_averaged_functional(dphi_dx, dphi_dm, m: Ensemble, y) -> np.ndarray:
    """Intrinsic derivative of ``m -> integral phi(x, m) m(dx)`` at ``y``.

    ``dphi_dx(x, m)`` and ``dphi_dm(x, m, y)`` take single points and return
    row covectors. The result is ``dphi_dx(y, m) + (1/N) sum_i dphi_dm(x_i, m, y)``.
    """
    m = as_ensemble(m)
    y = np.asarray(y, dtype=float).reshape(m.dim)
    acc = np.asarray(dphi_dx(y, m), dtype=float).reshape(m.dim).copy()
    avg = np.zeros(m.dim)
    for xi in m.states:
        avg += np.asarray(dphi_dm(xi, m, y), dtype=float).reshape(m.dim)
    out = acc + avg / m.n_particles
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("derivative callables returned non-finite values")
    return out


def build_lqr_problem(spec: LqrSpec) -> MeanFieldProblem:
    """Mean-field LQR as a :class:`MeanFieldProblem` with exact derivatives."""
    d, du = spec.dim_x, spec.dim_u
    A, B, R, Qx, Qm = spec.A, spec.B, spec.R, spec.Q_x, spec.Q_m
    Kx, Km = spec.K_x, spec.K_m
    Kt = Kx + Km

    def quad(x, M):
        return np.einsum("ni,ij,nj->n", x, M, x)

    def dynamics(t, x, m, u):
        return x @ A(t).T + u @ B(t).T

    def dynamics_dx(t, x, m, u):
        return np.broadcast_to(A(t), (x.shape[0], d, d)).copy()

    def dynamics_dm(t, x, m, y, u):
        return np.zeros((x.shape[0], d, d))

    def running_cost(t, x, m, u):
        q = Qm(t)
        mbar = m.mean
        return 0.5 * (quad(x, Qx(t) + q) + quad(u, R(t)) - mbar @ q @ mbar)

    def running_cost_dx(t, x, m, u):
        return x @ (Qx(t) + Qm(t))

    def running_cost_dm(t, x, m, y, u):
        return np.broadcast_to(-(m.mean @ Qm(t)), (x.shape[0], d)).copy()

    def terminal_cost(x, m):
        mbar = m.mean
        return 0.5 * (quad(x, Kt) - mbar @ Km @ mbar)

    def terminal_cost_dx(x, m):
        return x @ Kt

    def terminal_cost_dm(x, m, y):
        return np.broadcast_to(-(m.mean @ Km), (x.shape[0], d)).copy()

    probe = np.linspace(-1.0, 1.0, 3 * d).reshape(3, d)
    return MeanFieldProblem(
        dim_x=d,
        dim_u=du,
        horizon=spec.horizon,
        dynamics=dynamics,
        dynamics_dx=dynamics_dx,
        dynamics_dm=dynamics_dm,
        running_cost=running_cost,
        running_cost_dx=running_cost_dx,
        running_cost_dm=running_cost_dm,
        terminal_cost=terminal_cost,
        terminal_cost_dx=terminal_cost_dx,
        terminal_cost_dm=terminal_cost_dm,
        control_set=spec.control_set,
        lqr=spec,
        name="lqr",
        sample_states=probe,
    )
