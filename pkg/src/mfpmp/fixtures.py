"""Built-in named test problems, addressable from run configs."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .problem import ControlSet, MeanFieldProblem


def mean_reversion(
    dim: int = 1,
    kappa: float = 1.0,
    wobble: float = 0.0,
    q: float = 0.0,
    c: float = 1.0,
    s: float = 0.0,
    horizon: float = 1.0,
    control_set: ControlSet | None = None,
) -> MeanFieldProblem:
    """Particles pulled toward the ensemble mean with a sinusoidal perturbation.

    ``f = kappa (mean(m) - x) + wobble sin(x) + u``,
    ``f0 = |u|^2 / 2 + q |x - mean(m)|^2 / 2``,
    ``sigma = c |x|^2 / 2 + s |x - mean(m)|^2 / 2``.
    """
    eye = np.eye(dim)

    def dynamics(t, x, m, u):
        return kappa * (m.mean - x) + wobble * np.sin(x) + u

    def dynamics_dx(t, x, m, u):
        diag = -kappa + wobble * np.cos(x)
        return diag[:, :, None] * eye

    def dynamics_dm(t, x, m, y, u):
        return np.broadcast_to(kappa * eye, (x.shape[0], dim, dim)).copy()

    def running_cost(t, x, m, u):
        dev = x - m.mean
        return 0.5 * np.sum(u * u, axis=1) + 0.5 * q * np.sum(dev * dev, axis=1)

    def running_cost_dx(t, x, m, u):
        return q * (x - m.mean)

    def running_cost_dm(t, x, m, y, u):
        return -q * (x - m.mean)

    def terminal_cost(x, m):
        dev = x - m.mean
        return 0.5 * c * np.sum(x * x, axis=1) + 0.5 * s * np.sum(dev * dev, axis=1)

    def terminal_cost_dx(x, m):
        return c * x + s * (x - m.mean)

    def terminal_cost_dm(x, m, y):
        return -s * (x - m.mean)

    return MeanFieldProblem(
        dim_x=dim,
        dim_u=dim,
        horizon=horizon,
        dynamics=dynamics,
        dynamics_dx=dynamics_dx,
        dynamics_dm=dynamics_dm,
        running_cost=running_cost,
        running_cost_dx=running_cost_dx,
        running_cost_dm=running_cost_dm,
        terminal_cost=terminal_cost,
        terminal_cost_dx=terminal_cost_dx,
        terminal_cost_dm=terminal_cost_dm,
        control_set=control_set or ControlSet.unconstrained(dim),
        name="mean_reversion",
        sample_states=np.linspace(-1.0, 1.0, 3 * dim).reshape(3, dim),
    )


BUILTINS = {"mean_reversion": mean_reversion}


def builtin_problem(name: str, params: dict | None = None, horizon: float = 1.0,
                    control_set: ControlSet | None = None) -> MeanFieldProblem:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigError(f"unknown built-in problem {name!r} (known: {sorted(BUILTINS)})", "problem.name") from None
    try:
        return factory(horizon=horizon, control_set=control_set, **(params or {}))
    except TypeError as exc:
        raise ConfigError(str(exc), "problem.params") from None
