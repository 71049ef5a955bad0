"""Exception hierarchy shared by the solver modules."""

from __future__ import annotations


class MfpmpError(Exception):
    """Base class for all errors raised by :mod:`mfpmp`."""


class InvalidInputError(MfpmpError, ValueError):
    """Input violates a documented precondition (shape, finiteness, range)."""


class GridMismatchError(InvalidInputError):
    """Two time-indexed objects do not live on the same grid."""


class DivergenceError(MfpmpError, ArithmeticError):
    """A time integrator produced a non-finite value.

    Attributes
    ----------
    step : int
        Index of the first step whose result was not finite.
    """

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class PicardConvergenceError(MfpmpError):
    """Picard iteration did not reach the tolerance within ``max_iter`` sweeps."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"Picard iteration did not converge after {iterations} sweeps "
            f"(last residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


class HamiltonianAscentError(MfpmpError):
    """Projected gradient ascent on the Hamiltonian failed to converge."""

    def __init__(self, last_iterate, grad_norm: float):
        super().__init__(
            f"Hamiltonian maximization did not converge (projected gradient norm {grad_norm:.3e})"
        )
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm


class RiccatiError(MfpmpError):
    """Riccati integration failed, e.g. because R(t) is singular at a node."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message if node is None else f"{message} at node {node}")
        self.node = node


class TransversalityMismatch(MfpmpError):
    """Terminal costate does not match the transversality map."""


class ConfigError(MfpmpError):
    """Run configuration failed to parse or validate.

    ``field`` is the dotted path of the offending entry, e.g. ``grid.n_steps``.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
