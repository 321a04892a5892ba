"""Tests for the path following in ``t`` and its decay diagnostics."""

import numpy as np
import pytest

from bogomolny import algebra as alg
from bogomolny import configuration as cf
from bogomolny import continuation as ct
from bogomolny.geometry import Grid3


@pytest.fixture(scope="module")
def grid():
    return Grid3(1.0, 0.5, 2.5, 9, 9, 9)


@pytest.fixture(scope="module")
def gauge_case(grid):
    """A pure gauge of the zero configuration: the path must undo the gauge."""
    h = cf.smooth_hermitian(grid, np.random.default_rng(3), 0.05, zero_faces=True)
    psi = cf.deform(cf.Configuration.zeros(grid), 0.5 * h)
    state = ct.init_state(psi)
    result = ct.run_schedule(state)
    return h, state, result


def test_geometric_schedule():
    assert ct.geometric_schedule(0.1) == [0.5, 0.25, 0.125, 0.1]
    assert ct.geometric_schedule(0.125) == [0.5, 0.25, 0.125]
    with pytest.raises(ValueError):
        ct.geometric_schedule(1.5)


def test_trivial_run_stays_at_zero(grid):
    state = ct.init_state(cf.Configuration.zeros(grid))
    assert state.initial_residual == 0 and state.identity_error == 0
    res = ct.run_schedule(state)
    assert res.success and res.final_t == 1e-3
    assert np.max(np.abs(res.s)) == 0 and res.final_residual == 0
    assert all(rec.steps == 0 for rec in res.history)


def test_gauge_case_converges_quickly(gauge_case):
    h, state, res = gauge_case
    assert state.identity_error < 1e-12
    assert res.success and res.final_t == pytest.approx(1e-3)
    assert all(rec.accepted and rec.steps <= 3 for rec in res.history)
    assert res.final_residual <= 1e-2 * res.initial_residual


def test_gauge_case_recovers_inverse_gauge(gauge_case):
    # at small t the net deformation of psi* is e^{-h/2}, up to O(t) and O(h^2)
    h, state, res = gauge_case
    assert np.max(np.abs(state.sigma + h)) < 1e-3 * np.max(np.abs(h)) + 1e-4


def test_accepted_parameters_strictly_decrease(gauge_case):
    _, state, res = gauge_case
    ts = [rec.t for rec in res.history if rec.accepted]
    assert all(a > b for a, b in zip(ts, ts[1:]))
    tol = 1e-3 * state.initial_residual
    assert all(rec.residual <= tol for rec in res.history if rec.accepted)


def test_identity_check_on_smooth_configuration(grid):
    psi = cf.smooth_configuration(grid, np.random.default_rng(11), 0.2)
    state = ct.init_state(psi)
    assert state.identity_error < 1e-2 * state.initial_residual
    # at t = 1 the starting point solves the path equation
    assert ct.sup_norm(state.step_residual(state.sigma, 1.0)) < 1e-12


def test_polar_helpers(gauge_case):
    _, state, _ = gauge_case
    sigma, s_star = state.sigma, state.s_star
    k, s = ct._polar_from_sigma(sigma, s_star)
    M = alg.exp_herm(0.5 * sigma) @ alg.exp_herm(-0.5 * s_star)
    assert np.max(np.abs(M - k @ alg.exp_herm(0.5 * s))) < 1e-13
    assert np.max(np.abs(alg.dagger(k) @ k - np.eye(2))) < 1e-13
    assert np.max(np.abs(ct.s_from_sigma(np.zeros_like(s_star), s_star) + s_star)) < 1e-13
    assert np.allclose(ct.unitary_factor(np.zeros_like(s_star), s_star), np.eye(2), atol=1e-13)


def test_hermitian_update_commuting():
    a = alg.vec_to_herm(np.array([[0.3, 0.0, 0.0]]))
    b = alg.vec_to_herm(np.array([[-0.1, 0.0, 0.0]]))
    assert np.allclose(ct.hermitian_update(a, b), a + b, atol=1e-14)


def test_newton_step_requires_positive_t(gauge_case):
    with pytest.raises(ValueError):
        ct.newton_step(gauge_case[1], 0.0)


def test_decay_report_examples():
    g = Grid3(1.0, 0.1, 2.1, 9, 9, 41)
    assert g.ny // 8 == 5
    Y = np.broadcast_to(g.Y(), g.shape)
    s = np.zeros(g.shape + (2, 2), dtype=complex)
    s[..., 0, 0], s[..., 1, 1] = np.sqrt(Y), -np.sqrt(Y)
    rep = ct.decay_report(s, g)
    # the pointwise norm of diag(a, -a) is sqrt(2) a
    assert rep.sqrt_y_constant == pytest.approx(np.sqrt(2))
    assert rep.bottom_levels == 5
    assert ct.decay_report(np.zeros_like(s), g).rho_sup == 0
