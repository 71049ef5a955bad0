"""JSON run configuration: parsing, validation and object construction.

A config looks like::

    {
      "problem": {"kind": "lqr", "A": [[0]], "B": [[1]], "R": [[1]],
                  "Q_x": [[0]], "Q_m": [[0]], "K_x": [[1]], "K_m": [[0]]},
      "grid": {"T": 1.0, "n_steps": 200},
      "particles": {"N": 64, "initial": {"kind": "gaussian", "mean": [1.0],
                                         "std": [0.5], "seed": 7}},
      "solver": {"damping": 0.5, "tol": 1e-6, "max_iter": 100, "u_init": "zero"},
      "outputs": "out",
      "experiments": [{"spike": {"s_index": 40, "nu_offset": [1.0],
                                 "h_steps": [32, 16, 8, 4, 2]}}]
    }

Matrices are row-major: nested rows, a scalar (1x1), or a flat list for a
square matrix. Validation errors carry the dotted path of the bad field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import ControlField
from .errors import ConfigError, InvalidInputError
from .fixtures import builtin_problem
from .measures import Ensemble, TimeGrid
from .problem import ControlSet, LqrSpec, MeanFieldProblem, build_lqr_problem

LQR_KEYS = ("A", "B", "R", "Q_x", "Q_m", "K_x", "K_m")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError("missing required field", f"{where}.{key}" if where else key)
    return d[key]


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", where)
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown field(s) {extra}", where)


def _number(v, where, positive=False, integer=False, minimum=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"expected a finite number, got {v!r}", where)
    if integer and int(v) != v:
        raise ConfigError(f"expected an integer, got {v!r}", where)
    if positive and not v > 0:
        raise ConfigError(f"must be > 0, got {v!r}", where)
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}, got {v!r}", where)
    return int(v) if integer else float(v)


def _vector(v, where, size=None):
    try:
        a = np.atleast_1d(np.asarray(v, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(f"expected a numeric vector, got {v!r}", where) from None
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise ConfigError("expected a finite numeric vector", where)
    if size is not None and a.size != size:
        raise ConfigError(f"expected length {size}, got {a.size}", where)
    return a


def _matrix(v, where, rows=None):
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a numeric matrix, got {v!r}", where) from None
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        if rows is not None and a.size % rows == 0:
            a = a.reshape(rows, -1)
        else:
            n = int(round(math.sqrt(a.size)))
            if n * n != a.size:
                raise ConfigError("flat matrix must have a square number of entries", where)
            a = a.reshape(n, n)
    if a.ndim != 2 or not np.all(np.isfinite(a)):
        raise ConfigError("expected a finite 2-D matrix", where)
    return a


def _control_set(v, where, dim_u) -> ControlSet:
    if v is None:
        return ControlSet.unconstrained(dim_u)
    _check_keys(v, ("kind", "lower", "upper", "center", "radius"), where)
    kind = _require(v, "kind", where)
    try:
        if kind == "unconstrained":
            return ControlSet.unconstrained(dim_u)
        if kind == "box":
            return ControlSet.box(_vector(_require(v, "lower", where), f"{where}.lower", dim_u),
                                  _vector(_require(v, "upper", where), f"{where}.upper", dim_u))
        if kind == "ball":
            return ControlSet.ball(_vector(_require(v, "center", where), f"{where}.center", dim_u),
                                   _number(_require(v, "radius", where), f"{where}.radius", positive=True))
    except InvalidInputError as exc:
        raise ConfigError(str(exc), where) from None
    raise ConfigError(f"unknown control set kind {kind!r}", f"{where}.kind")


@dataclass
class SpikeExperiment:
    s_index: int
    h_steps: list[int]
    nu: np.ndarray | None = None
    nu_offset: np.ndarray | None = None


@dataclass
class RunConfig:
    problem: dict
    T: float
    n_steps: int
    n_particles: int
    initial: dict
    damping: float = 0.5
    tol: float = 1e-6
    max_iter: int = 200
    u_init: object = "zero"
    outputs: str = "out"
    experiments: list[SpikeExperiment] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.T, self.n_steps)

    @property
    def is_lqr(self) -> bool:
        return self.problem["kind"] == "lqr"

    def output_dir(self, override=None) -> Path:
        if override is not None:
            return Path(override)
        out = Path(self.outputs)
        return out if out.is_absolute() else self.base_dir / out

    def lqr_spec(self) -> LqrSpec:
        pr = self.problem
        A = _matrix(pr["A"], "problem.A")
        d = A.shape[0]
        mats = {"A": A}
        for key in LQR_KEYS[1:]:
            mats[key] = _matrix(pr[key], f"problem.{key}", rows=d)
        du = mats["B"].shape[1]
        cs = _control_set(pr.get("control_set"), "problem.control_set", du)
        try:
            return LqrSpec(horizon=self.T, control_set=cs, **mats)
        except InvalidInputError as exc:
            raise ConfigError(str(exc), "problem") from None

    def build_problem(self) -> MeanFieldProblem:
        if self.is_lqr:
            return build_lqr_problem(self.lqr_spec())
        pr = self.problem
        params = dict(pr.get("params") or {})
        dim = int(params.get("dim", 1))
        cs = _control_set(pr.get("control_set"), "problem.control_set", dim)
        return builtin_problem(pr["name"], params, horizon=self.T, control_set=cs)

    def initial_ensemble(self, dim: int) -> Ensemble:
        init = self.initial
        kind = init["kind"]
        n = self.n_particles
        if kind == "explicit":
            pts = np.asarray(init["points"], dtype=float).reshape(n, -1)
        elif kind == "constant":
            pts = np.broadcast_to(_vector(init["value"], "particles.initial.value", dim), (n, dim))
        elif kind == "gaussian":
            rng = np.random.default_rng(init["seed"])
            mean = _vector(init["mean"], "particles.initial.mean", dim)
            std = _vector(init["std"], "particles.initial.std", dim)
            pts = mean + std * rng.standard_normal((n, dim))
        else:
            from .io import read_ensemble_csv

            path = Path(init["path"])
            pts = read_ensemble_csv(path if path.is_absolute() else self.base_dir / path).states
        if pts.shape != (n, dim):
            raise ConfigError(f"initial ensemble has shape {pts.shape}, expected {(n, dim)}", "particles.initial")
        return Ensemble(pts)

    def initial_control(self, problem: MeanFieldProblem) -> ControlField:
        grid = self.grid
        shape = (grid.n_nodes, self.n_particles, problem.dim_u)
        if self.u_init == "zero":
            return ControlField(grid, np.zeros(shape), problem.control_set)
        try:
            vals = np.asarray(self.u_init["explicit"], dtype=float)
            vals = np.broadcast_to(vals, shape)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot broadcast to {shape}: {exc}", "solver.u_init") from None
        return ControlField(grid, vals, problem.control_set)


def parse_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a decoded JSON document and return a :class:`RunConfig`."""
    _check_keys(doc, ("problem", "grid", "particles", "solver", "outputs", "experiments"), "config")

    problem = _require(doc, "problem", "")
    if not isinstance(problem, dict):
        raise ConfigError("expected an object", "problem")
    kind = _require(problem, "kind", "problem")
    if kind == "lqr":
        _check_keys(problem, ("kind", "control_set") + LQR_KEYS, "problem")
        for key in LQR_KEYS:
            _require(problem, key, "problem")
    elif kind == "builtin":
        _check_keys(problem, ("kind", "name", "params", "control_set"), "problem")
        _require(problem, "name", "problem")
        if not isinstance(problem.get("params", {}), dict):
            raise ConfigError("expected an object", "problem.params")
    else:
        raise ConfigError(f"expected 'lqr' or 'builtin', got {kind!r}", "problem.kind")

    grid = _require(doc, "grid", "")
    _check_keys(grid, ("T", "n_steps"), "grid")
    T = _number(_require(grid, "T", "grid"), "grid.T", positive=True)
    n_steps = _number(_require(grid, "n_steps", "grid"), "grid.n_steps", integer=True, minimum=1)

    particles = _require(doc, "particles", "")
    _check_keys(particles, ("N", "initial"), "particles")
    N = _number(_require(particles, "N", "particles"), "particles.N", integer=True, minimum=1)
    initial = _require(particles, "initial", "particles")
    if not isinstance(initial, dict):
        raise ConfigError("expected an object", "particles.initial")
    ikind = _require(initial, "kind", "particles.initial")
    allowed = {
        "explicit": ("kind", "points"),
        "constant": ("kind", "value"),
        "gaussian": ("kind", "mean", "std", "seed"),
        "csv": ("kind", "path"),
    }
    if ikind not in allowed:
        raise ConfigError(f"unknown initial kind {ikind!r}", "particles.initial.kind")
    _check_keys(initial, allowed[ikind], "particles.initial")
    for key in allowed[ikind][1:]:
        _require(initial, key, "particles.initial")
    if ikind == "gaussian":
        _number(initial["seed"], "particles.initial.seed", integer=True, minimum=0)
    if ikind == "explicit":
        try:
            pts = np.asarray(initial["points"], dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("expected a numeric N x d array", "particles.initial.points") from None
        if pts.shape[:1] != (N,) or not np.all(np.isfinite(pts)):
            raise ConfigError(f"expected {N} finite points", "particles.initial.points")

    solver = doc.get("solver", {})
    _check_keys(solver, ("damping", "tol", "max_iter", "u_init"), "solver")
    damping = _number(solver.get("damping", 0.5), "solver.damping", positive=True)
    if damping > 1:
        raise ConfigError(f"must lie in (0, 1], got {damping}", "solver.damping")
    tol = _number(solver.get("tol", 1e-6), "solver.tol", positive=True)
    max_iter = _number(solver.get("max_iter", 200), "solver.max_iter", integer=True, minimum=1)
    u_init = solver.get("u_init", "zero")
    if u_init != "zero" and not (isinstance(u_init, dict) and set(u_init) == {"explicit"}):
        raise ConfigError("expected 'zero' or {\"explicit\": values}", "solver.u_init")

    outputs = doc.get("outputs", "out")
    if not isinstance(outputs, str) or not outputs:
        raise ConfigError("expected a directory path", "outputs")

    experiments = []
    for idx, exp in enumerate(doc.get("experiments", []) or []):
        where = f"experiments[{idx}]"
        _check_keys(exp, ("spike",), where)
        spike = _require(exp, "spike", where)
        where = f"{where}.spike"
        _check_keys(spike, ("s_index", "nu", "nu_offset", "h_list", "h_steps"), where)
        s_index = _number(_require(spike, "s_index", where), f"{where}.s_index", integer=True, minimum=0)
        if s_index >= n_steps:
            raise ConfigError(f"must be < grid.n_steps={n_steps}", f"{where}.s_index")
        if ("nu" in spike) == ("nu_offset" in spike):
            raise ConfigError("give exactly one of 'nu' or 'nu_offset'", where)
        if ("h_list" in spike) == ("h_steps" in spike):
            raise ConfigError("give exactly one of 'h_list' or 'h_steps'", where)
        step = T / n_steps
        if "h_steps" in spike:
            h_steps = [_number(h, f"{where}.h_steps", integer=True, minimum=1) for h in spike["h_steps"]]
        else:
            h_steps = []
            for h in spike["h_list"]:
                h = _number(h, f"{where}.h_list", positive=True)
                k = int(round(h / step))
                if k < 1 or abs(k * step - h) > 1e-9 * step:
                    raise ConfigError(f"width {h} is not a whole number of grid steps", f"{where}.h_list")
                h_steps.append(k)
        if any(s_index + k > n_steps for k in h_steps):
            raise ConfigError("spike runs past the horizon", where)
        nu = np.asarray(spike["nu"], dtype=float) if "nu" in spike else None
        off = np.asarray(spike["nu_offset"], dtype=float) if "nu_offset" in spike else None
        experiments.append(SpikeExperiment(s_index, h_steps, nu, off))

    return RunConfig(
        problem=problem, T=T, n_steps=n_steps, n_particles=N, initial=initial,
        damping=damping, tol=tol, max_iter=max_iter, u_init=u_init, outputs=outputs,
        experiments=experiments, base_dir=base_dir or Path.cwd(),
    )


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(doc, base_dir=path.resolve().parent)
