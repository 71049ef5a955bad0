import numpy as np
import pytest

from conftest import rich_lqr_spec, scalar_lqr
from mfpmp import (
    ControlField,
    CostateTrajectory,
    Ensemble,
    InvalidInputError,
    LqrSpec,
    TestFunction,
    TimeGrid,
    TransversalityMismatch,
    build_lqr_problem,
    costate_solve,
    forward_solve,
    joint_snapshot,
    lqr_closed_loop,
    polynomial_bump,
    weak_continuity_residual,
)
from mfpmp.fixtures import mean_reversion


def _closed(spec, x0, n):
    p = build_lqr_problem(spec)
    closed = lqr_closed_loop(spec, x0, TimeGrid(0.0, spec.horizon, n))
    psi = costate_solve(p, closed.trajectory, closed.control)
    return p, closed, psi


# ---------------------------------------------------------------- joint snapshots


def test_snapshot_zero_costate():
    grid = TimeGrid(0.0, 1.0, 4)
    p = mean_reversion(c=0.0)
    u = ControlField.constant(grid, 3, [0.0])
    traj = forward_solve(p, Ensemble([0.0, 1.0, 2.0]), u)
    psi = costate_solve(p, traj, u)
    snap = joint_snapshot(traj, psi, 4, p)
    assert np.all(snap.costates == 0.0)
    assert snap.transversality_residual == 0.0


def test_snapshot_projection_identity_every_node(rng):
    _, closed, psi = _closed(rich_lqr_spec(), Ensemble(rng.standard_normal((5, 2))), 20)
    for k in range(21):
        snap = joint_snapshot(closed.trajectory, psi, k)
        np.testing.assert_array_equal(snap.states, closed.trajectory.ensemble(k).states)
        np.testing.assert_array_equal(snap.costates, psi.covectors[k])
        assert snap.pairs.shape == (5, 4)
        assert snap.t == pytest.approx(k / 20)


def test_snapshot_lqr_terminal_formula(rng):
    spec = scalar_lqr(K_x=0.7, K_m=1.3, Q_x=0.2)
    _, closed, psi = _closed(spec, Ensemble(rng.standard_normal(9)), 50)
    snap = joint_snapshot(closed.trajectory, psi, 50, build_lqr_problem(spec))
    x = snap.states[:, 0]
    expected = -(0.7 + 1.3) * x + 1.3 * x.mean()
    np.testing.assert_allclose(snap.costates[:, 0], expected, atol=1e-10)
    assert snap.transversality_residual <= 1e-10


def test_snapshot_detects_wrong_terminal_costate(rng):
    p, closed, psi = _closed(rich_lqr_spec(), Ensemble(rng.standard_normal((4, 2))), 10)
    bad = np.array(psi.covectors)
    bad[-1, 2, 0] += 1e-6
    with pytest.raises(TransversalityMismatch):
        joint_snapshot(closed.trajectory, CostateTrajectory(psi.grid, bad), 10, p)


@pytest.mark.parametrize("k", [-1, 11, 1.5])
def test_snapshot_index_range(k, rng):
    _, closed, psi = _closed(rich_lqr_spec(), Ensemble(rng.standard_normal((3, 2))), 10)
    with pytest.raises(InvalidInputError):
        joint_snapshot(closed.trajectory, psi, k)


# ---------------------------------------------------------------- weak continuity residual


def test_weak_residual_zero_test_function(rng):
    p, closed, psi = _closed(rich_lqr_spec(), Ensemble(rng.standard_normal((6, 2))), 40)
    z = lambda t, x, s: np.zeros(x.shape[0])
    zv = lambda t, x, s: np.zeros_like(x)
    tf = TestFunction(z, z, zv, zv)
    assert weak_continuity_residual(closed.trajectory, psi, closed.control, p, tf) == 0.0


def test_weak_residual_time_only_cancels(rng):
    p, closed, psi = _closed(rich_lqr_spec(), Ensemble(rng.standard_normal((6, 2))), 200)
    # phi = sin^2(pi t) has zero time integral of its derivative over [0, 1]
    tf = TestFunction(
        lambda t, x, s: np.full(x.shape[0], np.sin(np.pi * t) ** 2),
        lambda t, x, s: np.full(x.shape[0], np.pi * np.sin(2 * np.pi * t)),
        lambda t, x, s: np.zeros_like(x),
        lambda t, x, s: np.zeros_like(s),
    )
    assert weak_continuity_residual(closed.trajectory, psi, closed.control, p, tf) <= 1e-12


def test_polynomial_bump_derivatives():
    tf = polynomial_bump(0.2, 0.8, [0.1, -0.2], [0.0, 0.3], radius=2.0)
    rng = np.random.default_rng(4)
    x, s = 0.5 * rng.standard_normal((5, 2)), 0.5 * rng.standard_normal((5, 2))
    t, eps = 0.45, 1e-6
    np.testing.assert_allclose(tf.dphi_dt(t, x, s), (tf.phi(t + eps, x, s) - tf.phi(t - eps, x, s)) / (2 * eps), atol=1e-7)
    for a in range(2):
        e = np.zeros_like(x)
        e[:, a] = eps
        np.testing.assert_allclose(tf.dphi_dx(t, x, s)[:, a], (tf.phi(t, x + e, s) - tf.phi(t, x - e, s)) / (2 * eps), atol=1e-7)
        np.testing.assert_allclose(tf.dphi_dpsi(t, x, s)[:, a], (tf.phi(t, x, s + e) - tf.phi(t, x, s - e)) / (2 * eps), atol=1e-7)
    assert np.all(tf.phi(0.1, x, s) == 0.0)
    assert np.all(tf.phi(t, x + 10.0, s) == 0.0)


def test_weak_residual_second_order_on_lqr(rng):
    spec = rich_lqr_spec()
    x0 = Ensemble(0.5 * rng.standard_normal((32, 2)))
    res = []
    p = build_lqr_problem(spec)
    for n in (50, 100, 200):
        # replay the node feedback open loop so paths are exact characteristics of the stored control
        u = lqr_closed_loop(spec, x0, TimeGrid(0.0, 1.0, n)).control
        traj = forward_solve(p, x0, u)
        psi = costate_solve(p, traj, u)
        tf = polynomial_bump(0.2, 0.8, [0.0, 0.0], [0.0, 0.0], radius=3.0)
        res.append(weak_continuity_residual(traj, psi, u, p, tf))
    assert res[0] > 0
    for coarse, fine in zip(res, res[1:]):
        assert 3.0 <= coarse / fine <= 5.0
