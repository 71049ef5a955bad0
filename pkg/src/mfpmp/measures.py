"""Empirical measures on particle ensembles.

An :class:`Ensemble` is the uniform-weight empirical measure of ``N`` points
in R^d. Distances between ensembles are exact: sorting in one dimension,
minimum-cost assignment otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import InvalidInputError

#: Largest ensemble size accepted by :func:`wasserstein_p`.
EXACT_ASSIGNMENT_CAP = 512


@dataclass(frozen=True, eq=False)
class Ensemble:
    """N particle states in R^d with implicit weights 1/N.

    Parameters
    ----------
    states : array_like, shape (N, d)
        Particle positions. A 1-D array is read as N particles in d=1.
    """

    states: np.ndarray

    def __post_init__(self):
        x = np.array(self.states, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InvalidInputError(f"ensemble states must be an (N, d) array, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("ensemble states must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "states", x)

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @cached_property
    def mean(self) -> np.ndarray:
        m = self.states.mean(axis=0)
        m.setflags(write=False)
        return m

    def __len__(self) -> int:
        return self.n_particles

    def __repr__(self) -> str:
        return f"Ensemble(N={self.n_particles}, d={self.dim})"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t0 + k (t1 - t0) / n_steps``, k = 0..n_steps."""

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)) or not self.t0 < self.t1:
            raise InvalidInputError(f"time grid needs t0 < t1, got [{self.t0}, {self.t1}]")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidInputError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def step(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.t0 + np.arange(self.n_nodes) * self.step
        t[-1] = self.t1
        t.setflags(write=False)
        return t

    def time(self, k: int) -> float:
        return float(self.nodes[k])


def as_ensemble(e) -> Ensemble:
    return e if isinstance(e, Ensemble) else Ensemble(e)


def empirical_moment_p(e: Ensemble, p: float = 2.0) -> float:
    """Return ``((1/N) sum_i |x_i|^p)^(1/p)``."""
    e = as_ensemble(e)
    if not p >= 1:
        raise InvalidInputError(f"moment order must satisfy p >= 1, got {p}")
    norms = np.linalg.norm(e.states, axis=1)
    return float(np.mean(norms**p) ** (1.0 / p))


def ensemble_mean(e: Ensemble) -> np.ndarray:
    return np.array(as_ensemble(e).mean)


def l_p_distance(a, b, p: float = 2.0) -> float:
    """Label-matched distance ``((1/N) sum_i |a_i - b_i|^p)^(1/p)``.

    This is the L^p distance between two assignments of the same labels,
    an upper bound for :func:`wasserstein_p`.
    """
    a = np.asarray(getattr(a, "states", a), dtype=float)
    b = np.asarray(getattr(b, "states", b), dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch {a.shape} vs {b.shape}")
    norms = np.linalg.norm((a - b).reshape(a.shape[0], -1), axis=1)
    return float(np.mean(norms**p) ** (1.0 / p))


def _check_pair(a: Ensemble, b: Ensemble, p: float):
    if not p >= 1:
        raise InvalidInputError(f"Wasserstein order must satisfy p >= 1, got {p}")
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.n_particles != b.n_particles:
        raise InvalidInputError(
            f"ensembles must have equal size, got {a.n_particles} and {b.n_particles}"
        )


def wasserstein_sorted_1d(a: Ensemble, b: Ensemble, p: float = 2.0) -> float:
    """W_p for d=1 by monotone (sorted) matching."""
    a, b = as_ensemble(a), as_ensemble(b)
    _check_pair(a, b, p)
    if a.dim != 1:
        raise InvalidInputError("sorted matching applies to d=1 only")
    diff = np.abs(np.sort(a.states[:, 0]) - np.sort(b.states[:, 0]))
    return float(np.mean(diff**p) ** (1.0 / p))


def wasserstein_assignment(a: Ensemble, b: Ensemble, p: float = 2.0, cap: int = EXACT_ASSIGNMENT_CAP) -> float:
    """W_p by exact minimum-cost assignment, any dimension."""
    a, b = as_ensemble(a), as_ensemble(b)
    _check_pair(a, b, p)
    n = a.n_particles
    if n > cap:
        raise InvalidInputError(f"N={n} exceeds the exact-assignment cap {cap}")
    cost = np.linalg.norm(a.states[:, None, :] - b.states[None, :, :], axis=2) ** p
    perm = _kernels.linear_assignment(cost)
    return float(np.mean(cost[np.arange(n), perm]) ** (1.0 / p))


def wasserstein_p(a: Ensemble, b: Ensemble, p: float = 2.0, cap: int = EXACT_ASSIGNMENT_CAP) -> float:
    """Exact p-Wasserstein distance between equal-size empirical measures.

    Raises
    ------
    InvalidInputError
        On dimension or size mismatch, or when N exceeds ``cap``. There is
        no approximate fallback.
    """
    a, b = as_ensemble(a), as_ensemble(b)
    _check_pair(a, b, p)
    if a.n_particles > cap:
        raise InvalidInputError(f"N={a.n_particles} exceeds the exact-assignment cap {cap}")
    if a.dim == 1:
        return wasserstein_sorted_1d(a, b, p)
    return wasserstein_assignment(a, b, p, cap)
