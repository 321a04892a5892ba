"""Tests for configurations, residuals, gauge actions and the covariant Laplacian."""

import numpy as np
import pytest
import scipy.linalg as sl

from bogomolny import algebra as alg
from bogomolny import configuration as cf
from bogomolny.configuration import Configuration, MetricPair
from bogomolny.geometry import Grid3, laplacian
from bogomolny.poly import CPoly

SX = np.array([[0, 1], [1, 0]], dtype=complex)
INNER = (slice(1, -1),) * 3


def base_grid(n=9):
    return Grid3(1.0, 0.5, 2.5, n, n, n)


def ladder(n=9, levels=3):
    g = base_grid(n)
    out = [g]
    for _ in range(levels - 1):
        g = g.refine()
        out.append(g)
    return out


def common_sup(f, level, collar=2):
    """Sup over the nodes shared with the coarsest grid, away from the faces."""
    step = 2**level
    f = np.asarray(f)[::step, ::step, ::step]
    c = collar
    return float(np.max(f[c:-c, c:-c, c:-c]))


def order(grids, errs):
    return float(np.polyfit(np.log([g.h1 for g in grids]), np.log(errs), 1)[0])


@pytest.fixture
def grid():
    return Grid3(1.0, 0.5, 2.5, 13, 13, 13)


def test_configuration_validation(grid):
    bad = np.zeros(grid.shape + (2, 2), dtype=complex)
    bad[..., 0, 1] = 1.0
    with pytest.raises(ValueError):
        Configuration(grid, bad, 0, 0, 0, 0, 0)
    z = Configuration.zeros(grid)
    arr = z.to_array()
    assert arr.shape == grid.shape + (6, 2, 2)
    assert np.array_equal(Configuration.from_array(grid, arr).to_array(), arr)


def test_psi_from_metric_examples(grid):
    psi = cf.psi_from_metric(MetricPair(grid, 1.0, 0.0))
    assert all(np.max(np.abs(f)) == 0 for f in psi.fields())
    psi = cf.psi_from_metric(MetricPair.from_log(grid, grid.Y()))
    # derivatives of e^y are exact up to O(h^2)
    assert np.allclose(psi.Phi3, 0.5j * np.diag([-1.0, 1.0]), atol=0.5 * grid.hy**2)
    for f in (psi.A1, psi.A2, psi.Ay, psi.Phi1, psi.Phi2):
        assert np.max(np.abs(f)) < 1e-12
    X1 = np.broadcast_to(grid.mesh()[0], grid.shape)
    psi = cf.psi_from_metric(MetricPair(grid, 1.0, X1))
    assert np.allclose(psi.A1, 0.5 * np.array([[0, 1], [-1, 0]]), atol=1e-12)
    assert np.allclose(psi.A2, 0.5j * SX, atol=1e-12)
    assert np.max(np.abs(psi.Ay)) < 1e-12 and np.max(np.abs(psi.Phi3)) < 1e-12


def test_residual_first_examples(grid):
    assert cf.residual_first(Configuration.zeros(grid)).sup() == 0.0
    psi = cf.psi_from_metric(MetricPair(grid, 1.0, 0.0, P=CPoly([1])))
    E, F = cf.residual_first(psi).frame_scalars()
    assert np.allclose(E, 1.0, atol=1e-12)
    assert np.max(np.abs(F)) < 1e-12


def test_residual_first_exact_model_second_order():
    errs = []
    grids = ladder(9, 3)
    for k, g in enumerate(grids):
        psi = cf.psi_from_metric(MetricPair.from_log(g, np.log(np.sinh(g.Y())), P=1))
        errs.append(common_sup(alg.norm(cf.residual_first(psi).V), k))
    assert order(grids, errs) > 1.8


def test_residual_first_matches_special1_oracle():
    # E and F from the closed form versus the Hermitian residual of the assembled fields
    rng_seed = 11
    grids = ladder(9, 3)
    gaps = []
    for g in grids:
        m = cf.smooth_metric_pair(g, np.random.default_rng(rng_seed))
        E, F = cf.residual_first(cf.psi_from_metric(m)).frame_scalars()
        E0, F0 = cf.residual_special1(g, np.log(m.h), m.w, m.P)
        gaps.append(max(np.max(np.abs(E - E0)[INNER]), np.max(np.abs(F - F0)[INNER])))
    assert order(grids, gaps) > 1.8


def test_residual_first_matches_special2_oracle():
    grids = ladder(9, 3)
    gaps = []
    for g in grids:
        m = cf.smooth_metric_pair(g, np.random.default_rng(12), kind="diagonal")
        E, F = cf.residual_first(cf.psi_from_metric(m)).frame_scalars()
        E0, F0 = cf.residual_special2(g, np.log(m.h), m.A, m.B, m.P)
        gaps.append(max(np.max(np.abs(E - E0)[INNER]), np.max(np.abs(F - F0)[INNER])))
    assert order(grids, gaps) > 1.8


def test_special1_examples(grid):
    Y = grid.Y()
    E, F = cf.residual_special1(grid, np.log(np.sinh(Y)), 0.0, CPoly([1]))
    assert np.max(np.abs(E)) < 0.1 and np.max(np.abs(F)) == 0
    E, F = cf.residual_special1(grid, np.zeros(grid.shape), 0.0, CPoly([0]))
    assert np.max(np.abs(E)) == 0 and np.max(np.abs(F)) == 0
    # u = 0, w = x1^2: E = 4 |dbar w|^2 = 4 x1^2 and F = lap w = 2 (sympy by hand)
    X1 = np.broadcast_to(grid.mesh()[0], grid.shape)
    E, F = cf.residual_special1(grid, np.zeros(grid.shape), X1**2 + 0j, CPoly([0]))
    assert np.allclose(E[INNER], 4 * X1[INNER] ** 2, atol=1e-12)
    assert np.allclose(F[INNER], 2.0, atol=1e-10)


def test_special2_examples(grid):
    u = np.zeros(grid.shape)
    E, F = cf.residual_special2(grid, u, 0, 0, 0)
    assert np.max(np.abs(E)) == 0 and np.max(np.abs(F)) == 0
    E, F = cf.residual_special2(grid, u, 0, 0, 1)
    assert np.allclose(E[INNER], 1.0) and np.max(np.abs(F)) == 0
    E, F = cf.residual_special2(grid, u, 1, 1, 1)
    assert np.max(np.abs(E)) < 1e-15 and np.max(np.abs(F)) < 1e-15


def test_residual_full_zero_and_constant_gauge(grid):
    assert all(n == 0 for n in cf.residual_full(Configuration.zeros(grid)).norms)
    m = cf.smooth_metric_pair(grid, np.random.default_rng(3))
    psi = cf.psi_from_metric(m)
    u = sl.expm(1j * (0.3 * SX + 0.2 * np.diag([1.0, -1.0])))
    a = np.array(cf.residual_full(psi).norms)
    b = np.array(cf.residual_full(psi.constant_gauge(u)).norms)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_bullets_two_to_seven_vanish():
    grids = ladder(9, 3)
    norms = []
    for k, g in enumerate(grids):
        m = cf.smooth_metric_pair(g, np.random.default_rng(5))
        bullets = cf.residual_full(cf.psi_from_metric(m)).bullets[1:]
        norms.append([common_sup(alg.norm(b), k) for b in bullets])
    norms = np.array(norms)
    for k in range(6):
        assert order(grids, norms[:, k]) > 1.8


def test_apply_gauge_identity_and_constant(grid):
    psi = cf.smooth_configuration(grid, np.random.default_rng(0))
    same = cf.apply_gauge(psi, np.eye(2))
    assert np.allclose(same.to_array(), psi.to_array(), atol=1e-14)
    u = sl.expm(1j * 0.4 * SX)
    v0 = alg.norm(cf.residual_first(psi).V)
    v1 = alg.norm(cf.residual_first(cf.apply_gauge(psi, u)).V)
    assert np.max(np.abs(v0 - v1)) < 1e-12
    with pytest.raises(ValueError):
        cf.apply_gauge(psi, 2.0 * np.eye(2))


def test_deform_examples(grid):
    psi = cf.smooth_configuration(grid, np.random.default_rng(1))
    assert np.allclose(cf.deform(psi, np.zeros((2, 2))).to_array(), psi.to_array(), atol=1e-14)
    phi = np.zeros(grid.shape + (2, 2), dtype=complex)
    phi[..., 1, 0] = 1.5 - 0.5j
    z = np.zeros_like(phi)
    psi = Configuration.from_complex(grid, z, z, phi)
    a = 0.3
    out = cf.deform(psi, np.diag([a, -a]))
    assert np.allclose(out.Phi[..., 1, 0], np.exp(-2 * a) * (1.5 - 0.5j), atol=1e-14)
    assert np.max(np.abs(out.Phi[..., 0, 1])) < 1e-14


def test_deform_round_trip(grid):
    rng = np.random.default_rng(2)
    psi = cf.smooth_configuration(grid, rng)
    s = cf.smooth_hermitian(grid, rng, 0.3)
    back = cf.deform(cf.deform(psi, s), -s)
    assert np.max(np.abs(back.to_array() - psi.to_array())) < 1e-10


def test_laplacian_config_examples(grid):
    rng = np.random.default_rng(4)
    s = cf.smooth_hermitian(grid, rng, 0.5)
    zero = Configuration.zeros(grid)
    assert np.allclose(cf.laplacian_config(zero, s)[INNER], laplacian(grid, s)[INNER], atol=1e-10)
    psi = cf.smooth_configuration(grid, rng)
    assert np.max(np.abs(cf.laplacian_config(psi, np.zeros(grid.shape + (2, 2))))) == 0
    c = 0.7
    P1 = np.broadcast_to(c * 0.5j * SX, grid.shape + (2, 2))
    psi = Configuration(grid, 0, 0, 0, P1, 0, 0)
    s0 = np.array([[0.2, 0.1 - 0.3j], [0.1 + 0.3j, -0.2]])
    s = np.broadcast_to(s0, grid.shape + (2, 2))
    P = c * 0.5j * SX
    expect = alg.comm(P, alg.comm(P, s0))
    assert np.allclose(cf.laplacian_config(psi, s)[INNER], expect, atol=1e-13)


def test_assembled_laplacian_matches_stencil(grid):
    rng = np.random.default_rng(6)
    psi = cf.smooth_configuration(grid, rng)
    s = cf.smooth_hermitian(grid, rng, 0.5, zero_faces=True)
    L = cf.assemble_laplacian_config(psi)
    direct = cf.interior_vec(cf.laplacian_config(psi, s))
    assert np.allclose(L @ cf.interior_vec(s), direct, atol=1e-10)
    assert abs(L - L.T).max() < 1e-12


def test_solve_linearized(grid):
    rng = np.random.default_rng(7)
    psi = cf.smooth_configuration(grid, rng)
    rhs = cf.smooth_hermitian(grid, rng, 1.0)
    s, its = cf.solve_linearized(psi, rhs, c=2.0, t=0.5, rtol=1e-11)
    resid = -2.0 * cf.laplacian_config(psi, s) + 0.5 * s - rhs
    assert np.max(np.abs(resid[INNER])) < 1e-8 * np.max(np.abs(rhs))
    assert np.max(np.abs(s[0])) == 0
    zero, its = cf.solve_linearized(psi, np.zeros(grid.shape + (2, 2)))
    assert its == 0 and np.max(np.abs(zero)) == 0


def test_weitzenbock_trivial_cases(grid):
    psi = cf.smooth_configuration(grid, np.random.default_rng(8))
    for conv in cf.WEITZENBOCK_CONVENTIONS:
        assert np.max(np.abs(cf.weitzenbock_gap(psi, np.zeros(grid.shape + (2, 2)), conv))) == 0
        s = np.broadcast_to(np.diag([0.2, -0.2]), grid.shape + (2, 2))
        gap = cf.weitzenbock_gap(Configuration.zeros(grid), s, conv)
        assert np.max(np.abs(gap)) < 1e-13
    with pytest.raises(ValueError):
        cf.weitzenbock_gap(psi, np.zeros(grid.shape + (2, 2)), "triple")


def test_weitzenbock_double_convention_converges():
    grids = ladder(9, 3)
    gaps = {c: [] for c in cf.WEITZENBOCK_CONVENTIONS}
    for k, g in enumerate(grids):
        Y = g.Y()
        f = np.sin(Y) * np.exp(-Y)
        s = np.zeros(g.shape + (2, 2), dtype=complex)
        s[..., 0, 0], s[..., 1, 1] = 1e-2 * f, -1e-2 * f
        zero = Configuration.zeros(g)
        for c in gaps:
            gaps[c].append(common_sup(np.abs(cf.weitzenbock_gap(zero, s, c)), k))
    assert order(grids, gaps["double"]) >= 1.5
    assert order(grids, gaps["single"]) < 1.0


def test_linearization_slope_picks_two():
    g = base_grid(17)
    rng = np.random.default_rng(9)
    psi = cf.smooth_configuration(g, rng)
    s = cf.smooth_hermitian(g, rng, 0.1)
    fit = cf.linearization_slope(psi, s)
    assert fit.nearest == cf.LINEARIZATION_CONSTANT == 2
    assert fit.rel_residual < 0.05


def test_smooth_fields_are_grid_independent():
    g = base_grid(9)
    f = g.refine()
    a = cf.smooth_hermitian(g, np.random.default_rng(3), 0.2, zero_faces=True)
    b = cf.smooth_hermitian(f, np.random.default_rng(3), 0.2, zero_faces=True)
    assert np.allclose(a, b[::2, ::2, ::2], atol=1e-14)
