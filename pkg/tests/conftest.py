import numpy as np
import pytest

from mfpmp import ControlSet, Ensemble, LqrSpec, MeanFieldProblem, TimeGrid, build_lqr_problem
from mfpmp.fixtures import mean_reversion

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_problem(dim_x=1, dim_u=1, horizon=1.0, dynamics=None, dynamics_dx=None, dynamics_dm=None,
                 running_cost=None, running_cost_dx=None, running_cost_dm=None,
                 terminal_cost=None, terminal_cost_dx=None, terminal_cost_dm=None,
                 control_set=None, name="custom"):
    """Problem with zero defaults for every callable not supplied."""
    d = dim_x
    zv = lambda t, x, m, u: np.zeros((x.shape[0], d))
    zm = lambda t, x, m, u: np.zeros((x.shape[0], d, d))
    zmm = lambda t, x, m, y, u: np.zeros((x.shape[0], d, d))
    zs = lambda t, x, m, u: np.zeros(x.shape[0])
    zvm = lambda t, x, m, y, u: np.zeros((x.shape[0], d))
    return MeanFieldProblem(
        dim_x=dim_x, dim_u=dim_u, horizon=horizon,
        dynamics=dynamics or zv, dynamics_dx=dynamics_dx or zm, dynamics_dm=dynamics_dm or zmm,
        running_cost=running_cost or zs, running_cost_dx=running_cost_dx or zv,
        running_cost_dm=running_cost_dm or zvm,
        terminal_cost=terminal_cost or (lambda x, m: np.zeros(x.shape[0])),
        terminal_cost_dx=terminal_cost_dx or (lambda x, m: np.zeros((x.shape[0], d))),
        terminal_cost_dm=terminal_cost_dm or (lambda x, m, y: np.zeros((x.shape[0], d))),
        control_set=control_set or ControlSet.unconstrained(dim_u),
        name=name,
        sample_states=np.linspace(-1, 1, 3 * d).reshape(3, d),
    )


def rich_lqr_spec(horizon=1.0) -> LqrSpec:
    """Two-dimensional LQR with every mean-field weight switched on."""
    return LqrSpec(
        A=[[0.3, 1.0], [-0.5, 0.1]],
        B=[[0.0], [1.0]],
        R=[[1.0]],
        Q_x=np.diag([1.0, 0.5]),
        Q_m=np.diag([0.5, 1.0]),
        K_x=np.eye(2),
        K_m=0.5 * np.eye(2),
        horizon=horizon,
    )


def scalar_lqr(A=0.0, B=1.0, R=1.0, Q_x=0.0, Q_m=0.0, K_x=1.0, K_m=0.0, control_set=None) -> LqrSpec:
    kw = {} if control_set is None else {"control_set": control_set}
    return LqrSpec(A=[[A]], B=[[B]], R=[[R]], Q_x=[[Q_x]], Q_m=[[Q_m]], K_x=[[K_x]], K_m=[[K_m]], **kw)


def sup_l2(a, b):
    """Sup over nodes of the L^2 label distance between two (K, N, d) arrays."""
    return float(np.max(np.sqrt(np.mean(np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=2), axis=1))))


@pytest.fixture
def grid200():
    return TimeGrid(0.0, 1.0, 200)


@pytest.fixture
def benchmark_problem():
    return build_lqr_problem(LqrSpec.scalar_benchmark())


@pytest.fixture
def rich_problem():
    return build_lqr_problem(rich_lqr_spec())


@pytest.fixture
def nonlinear_problem():
    return mean_reversion(dim=1, kappa=1.0, wobble=0.5, q=1.0, c=1.0, s=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.fixture
def gaussian64(rng):
    return Ensemble(1.0 + 0.5 * rng.standard_normal((64, 1)))
