import numpy as np
import pytest

from conftest import make_problem, rich_lqr_spec, scalar_lqr, sup_l2
from mfpmp import (
    ControlField,
    ControlSet,
    DivergenceError,
    Ensemble,
    GridMismatchError,
    InvalidInputError,
    PicardConvergenceError,
    TimeGrid,
    build_lqr_problem,
    costate_solve,
    forward_solve,
    picard_forward_solve,
    transversality,
    variational_solve,
)
from mfpmp.fixtures import mean_reversion


def constant_drift(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return make_problem(dim_x=c.size, dim_u=1, dynamics=lambda t, x, m, u: np.broadcast_to(c, x.shape).copy())


def zero_controls(grid, n, du=1):
    return ControlField.constant(grid, n, np.zeros(du))


def two_particle_exact(t, x0=(0.0, 2.0)):
    x0 = np.asarray(x0)
    mean = x0.mean()
    return mean + (x0 - mean) * np.exp(-t)


# ---------------------------------------------------------------- containers


def test_control_field_projects_or_rejects():
    grid = TimeGrid(0.0, 1.0, 2)
    cs = ControlSet.box([-1.0], [1.0])
    vals = np.full((3, 2, 1), 3.0)
    u = ControlField(grid, vals, cs)
    assert np.all(u.values == 1.0)
    with pytest.raises(InvalidInputError):
        ControlField(grid, vals, cs, strict=True)


def test_control_field_shape_checks():
    with pytest.raises(InvalidInputError):
        ControlField(TimeGrid(0.0, 1.0, 2), np.zeros((2, 2, 1)))


def test_grid_must_span_horizon():
    p = constant_drift(1.0)
    u = zero_controls(TimeGrid(0.0, 2.0, 4), 1)
    with pytest.raises(GridMismatchError):
        forward_solve(p, Ensemble([0.0]), u)


# ---------------------------------------------------------------- forward_solve


def test_constant_field_exact():
    p = constant_drift([1.5, -0.5])
    grid = TimeGrid(0.0, 1.0, 7)
    x0 = Ensemble([[0.0, 1.0], [2.0, 3.0]])
    traj = forward_solve(p, x0, zero_controls(grid, 2))
    expected = x0.states[None] + grid.nodes[:, None, None] * np.array([1.5, -0.5])
    np.testing.assert_allclose(traj.states, expected, atol=1e-14)
    np.testing.assert_array_equal(traj.states[0], x0.states)


def test_lqr_equilibrium():
    p = build_lqr_problem(scalar_lqr(A=0.0))
    grid = TimeGrid(0.0, 1.0, 10)
    x0 = Ensemble([0.3, -1.2, 4.0])
    traj = forward_solve(p, x0, zero_controls(grid, 3))
    assert np.all(traj.states == x0.states[None])


def test_two_particle_mean_reversion():
    p = mean_reversion(kappa=1.0, wobble=0.0)
    grid = TimeGrid(0.0, 1.0, 100)
    traj = forward_solve(p, Ensemble([0.0, 2.0]), zero_controls(grid, 2))
    means = traj.states.mean(axis=1)[:, 0]
    np.testing.assert_allclose(means, 1.0, atol=1e-14)
    gap = traj.states[-1, 1, 0] - traj.states[-1, 0, 0]
    assert gap == pytest.approx(2 * np.exp(-1.0), abs=1e-9)
    assert gap == pytest.approx(0.7357589, abs=1e-7)


def test_rk4_fourth_order():
    p = mean_reversion(kappa=1.0, wobble=0.0)
    x0 = Ensemble([0.0, 2.0, 5.0])
    errs = []
    for n in (5, 10, 20):
        grid = TimeGrid(0.0, 1.0, n)
        traj = forward_solve(p, x0, zero_controls(grid, 3))
        errs.append(np.max(np.abs(traj.states[-1, :, 0] - two_particle_exact(1.0, x0.states[:, 0]))))
    for coarse, fine in zip(errs, errs[1:]):
        assert 8.0 <= coarse / fine <= 32.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_forward_divergence_reports_step():
    p = make_problem(dynamics=lambda t, x, m, u: x**3)
    grid = TimeGrid(0.0, 1.0, 50)
    with pytest.raises(DivergenceError) as info:
        forward_solve(p, Ensemble([30.0]), zero_controls(grid, 1))
    assert 0 <= info.value.step < 50


def test_forward_dimension_mismatch():
    p = constant_drift(1.0)
    grid = TimeGrid(0.0, 1.0, 2)
    with pytest.raises(InvalidInputError):
        forward_solve(p, Ensemble([[0.0, 1.0]]), zero_controls(grid, 1))
    with pytest.raises(InvalidInputError):
        forward_solve(p, Ensemble([0.0, 1.0]), zero_controls(grid, 3))


# ---------------------------------------------------------------- Picard


def test_picard_zero_field_one_sweep():
    p = make_problem()
    grid = TimeGrid(0.0, 1.0, 5)
    traj = picard_forward_solve(p, Ensemble([1.0, 2.0]), zero_controls(grid, 2), max_iter=1, tol=1e-12)
    assert np.all(traj.states == np.array([[1.0], [2.0]])[None])


def test_picard_constant_field_two_sweeps():
    p = constant_drift(2.0)
    grid = TimeGrid(0.0, 1.0, 5)
    with pytest.raises(PicardConvergenceError) as info:
        picard_forward_solve(p, Ensemble([0.0]), zero_controls(grid, 1), max_iter=1, tol=1e-12)
    assert info.value.iterations == 1
    assert info.value.residual > 0
    traj = picard_forward_solve(p, Ensemble([0.0]), zero_controls(grid, 1), max_iter=2, tol=1e-12)
    np.testing.assert_allclose(traj.states[:, 0, 0], 2.0 * grid.nodes, atol=1e-14)


@pytest.mark.parametrize("x0", [[0.0, 2.0], [-1.0, 0.5, 0.7, 3.0]])
def test_picard_agrees_with_rk4(x0):
    p = mean_reversion(kappa=1.0, wobble=0.3)
    grid = TimeGrid(0.0, 1.0, 50)
    tol = 1e-10
    u = zero_controls(grid, len(x0))
    a = picard_forward_solve(p, Ensemble(x0), u, max_iter=100, tol=tol)
    b = forward_solve(p, Ensemble(x0), u)
    assert sup_l2(a.states, b.states) <= max(10 * tol, 5 * grid.step**2)


# ---------------------------------------------------------------- costate


def test_costate_zero_terminal_data():
    p = mean_reversion(kappa=1.0, wobble=0.4, q=0.0, c=0.0, s=0.0)
    grid = TimeGrid(0.0, 1.0, 20)
    u = zero_controls(grid, 3)
    traj = forward_solve(p, Ensemble([0.0, 1.0, 3.0]), u)
    assert np.all(costate_solve(p, traj, u).covectors == 0.0)


def test_transversality_examples():
    p = build_lqr_problem(scalar_lqr(K_x=1.0, K_m=0.0))
    np.testing.assert_allclose(transversality(p, Ensemble([2.0, 2.0])), [[-2.0], [-2.0]])
    pm = build_lqr_problem(scalar_lqr(K_x=0.0, K_m=1.0))
    x = np.array([0.0, 1.0, 5.0])
    np.testing.assert_allclose(transversality(pm, Ensemble(x))[:, 0], -(x - x.mean()), atol=1e-15)


def test_costate_terminal_slice_exact(rich_problem, rng):
    grid = TimeGrid(0.0, 1.0, 10)
    u = ControlField(grid, rng.standard_normal((11, 5, 1)))
    traj = forward_solve(rich_problem, Ensemble(rng.standard_normal((5, 2))), u)
    psi = costate_solve(rich_problem, traj, u)
    expected = transversality(rich_problem, traj.states[-1])
    np.testing.assert_allclose(psi.covectors[-1], expected, rtol=1e-12, atol=0)


def test_costate_scalar_lqr_closed_form():
    # psi' = -A psi + Q x with A=a, u=0: use Q=0 so psi(t) = -x(T) e^{a(T-t)}
    a = 0.7
    p = build_lqr_problem(scalar_lqr(A=a, K_x=1.0))
    grid = TimeGrid(0.0, 1.0, 100)
    u = zero_controls(grid, 2)
    traj = forward_solve(p, Ensemble([1.0, -2.0]), u)
    psi = costate_solve(p, traj, u).covectors[:, :, 0]
    expected = -traj.states[-1, :, 0][None, :] * np.exp(a * (1.0 - grid.nodes))[:, None]
    np.testing.assert_allclose(psi, expected, rtol=1e-9)


def test_costate_grid_mismatch(benchmark_problem):
    u1 = zero_controls(TimeGrid(0.0, 1.0, 10), 1)
    u2 = zero_controls(TimeGrid(0.0, 1.0, 20), 1)
    traj = forward_solve(benchmark_problem, Ensemble([1.0]), u1)
    with pytest.raises(GridMismatchError):
        costate_solve(benchmark_problem, traj, u2)


# ---------------------------------------------------------------- variational system


def test_variation_constant_without_propagation():
    p = make_problem(dynamics=lambda t, x, m, u: np.cos(u) + t)
    grid = TimeGrid(0.0, 1.0, 10)
    u = zero_controls(grid, 2)
    traj = forward_solve(p, Ensemble([0.0, 1.0]), u)
    y = variational_solve(p, traj, u, 3, np.array([[1.0], [2.0]]))
    expected = np.cos([[1.0], [2.0]]) - 1.0
    for k in range(3, 11):
        np.testing.assert_allclose(y.at_node(k), expected, atol=1e-15)


def test_variation_scalar_lqr_closed_form():
    a, b = -0.8, 2.0
    p = build_lqr_problem(scalar_lqr(A=a, B=b))
    grid = TimeGrid(0.0, 1.0, 100)
    u = ControlField.constant(grid, 3, [0.25])
    traj = forward_solve(p, Ensemble([0.0, 1.0, 2.0]), u)
    nu = np.array([[1.0], [0.25], [-2.0]])
    s = 30
    y = variational_solve(p, traj, u, s, nu)
    for k in (s, 50, 100):
        expected = np.exp(a * (grid.time(k) - grid.time(s))) * b * (nu - 0.25)
        np.testing.assert_allclose(y.at_node(k), expected, atol=1e-10)


def test_variation_zero_when_nu_equals_control(rich_problem, rng):
    grid = TimeGrid(0.0, 1.0, 20)
    u = ControlField(grid, rng.standard_normal((21, 4, 1)))
    traj = forward_solve(rich_problem, Ensemble(rng.standard_normal((4, 2))), u)
    y = variational_solve(rich_problem, traj, u, 5, u.values[5])
    assert np.all(y.values == 0.0)


@pytest.mark.parametrize("alpha", [0.5, 2.0])
def test_variation_linear_in_control_offset(alpha, rng):
    problems = [build_lqr_problem(rich_lqr_spec()), mean_reversion(dim=2, kappa=1.0, wobble=0.5)]
    for p in problems:
        grid = TimeGrid(0.0, 1.0, 20)
        u = ControlField(grid, rng.standard_normal((21, 4, p.dim_u)))
        traj = forward_solve(p, Ensemble(rng.standard_normal((4, p.dim_x))), u)
        delta = rng.standard_normal((4, p.dim_u))
        y1 = variational_solve(p, traj, u, 4, u.values[4] + delta)
        ya = variational_solve(p, traj, u, 4, u.values[4] + alpha * delta)
        np.testing.assert_allclose(ya.values, alpha * y1.values, rtol=1e-12, atol=1e-14)


def test_variation_mean_field_coupling():
    # mean reversion: Y_i' = -kappa Y_i + kappa mean(Y); mean(Y) is conserved
    p = mean_reversion(kappa=1.0, wobble=0.0)
    grid = TimeGrid(0.0, 1.0, 50)
    u = zero_controls(grid, 2)
    traj = forward_solve(p, Ensemble([0.0, 2.0]), u)
    y = variational_solve(p, traj, u, 0, np.array([[1.0], [0.0]]))
    np.testing.assert_allclose(y.values.mean(axis=1), 0.5, atol=1e-14)
    diff = y.at_node(50)[0, 0] - y.at_node(50)[1, 0]
    assert diff == pytest.approx(np.exp(-1.0), abs=1e-9)


@pytest.mark.parametrize("s", [-1, 10, 2.5])
def test_variation_bad_index(s, benchmark_problem):
    grid = TimeGrid(0.0, 1.0, 10)
    u = zero_controls(grid, 1)
    traj = forward_solve(benchmark_problem, Ensemble([1.0]), u)
    with pytest.raises(InvalidInputError):
        variational_solve(benchmark_problem, traj, u, s, [[1.0]])
