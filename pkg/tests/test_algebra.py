"""Tests for the 2x2 Lie algebra utilities."""

import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings
from hypothesis import strategies as st

from bogomolny import algebra as alg

E12 = np.array([[0, 1], [0, 0]], dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
D1 = np.diag([1.0, -1.0]).astype(complex)

# 0.5 * logm(e^{s2} e^{2 s1} e^{s2}) for s1 = diag(1,-1), s2 = sigma_x, computed
# with scipy.linalg.logm and frozen here.
WITNESS_SIGMA = np.array(
    [[0.42923829701778077, 1.6148784714883826], [1.6148784714883826, -0.4292382970177872]]
)

coord = st.floats(-1.0, 1.0, allow_nan=False)
herm_vec = st.tuples(coord, coord, coord)


def herm(v, radius=1.0):
    return radius * alg.vec_to_herm(np.asarray(v, dtype=float))


def random_herm(rng, n, radius):
    s = alg.vec_to_herm(rng.normal(size=(n, 3)))
    return s * (radius * rng.uniform(0, 1, n) / np.maximum(alg.norm(s), 1e-300))[:, None, None]


def test_exp_herm_examples():
    assert np.allclose(alg.exp_herm(np.zeros((2, 2))), np.eye(2), atol=1e-15)
    assert np.allclose(alg.exp_herm(D1), np.diag([np.e, 1 / np.e]), atol=1e-14)
    expect = np.array([[np.cosh(1), np.sinh(1)], [np.sinh(1), np.cosh(1)]])
    assert np.allclose(alg.exp_herm(SX), expect, atol=1e-14)


def test_exp_herm_rejects_non_hermitian():
    with pytest.raises(ValueError):
        alg.exp_herm(E12)
    with pytest.raises(ValueError):
        alg.exp_herm(np.eye(2))


@settings(max_examples=60, deadline=None)
@given(herm_vec, st.floats(0.0, 4.0))
def test_exp_herm_matches_scipy(v, radius):
    s = herm(v, radius)
    assert np.allclose(alg.exp_herm(s), sl.expm(s), rtol=1e-12, atol=1e-12)


def test_log_herm_examples():
    assert np.allclose(alg.log_herm(np.eye(2)), 0.0, atol=1e-15)
    assert np.allclose(alg.log_herm(np.diag([np.e, 1 / np.e])), D1, atol=1e-14)
    with pytest.raises(ValueError):
        alg.log_herm(np.diag([-1.0, -1.0]))


def test_log_exp_round_trip():
    rng = np.random.default_rng(0)
    s = random_herm(rng, 200, 0.5)
    assert np.max(np.abs(alg.log_herm(alg.exp_herm(s)) - s)) < 1e-10


def test_gamma_examples():
    rng = np.random.default_rng(1)
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    assert np.allclose(alg.gamma(np.zeros((2, 2)), m), m, atol=1e-14)
    e2 = np.exp(2.0)
    assert np.allclose(alg.gamma(D1, E12), (e2 - 1) / 2 * E12, atol=1e-13)
    expect = np.array([[0, (e2 - 1) / 2], [(1 - np.exp(-2.0)) / 2, 0]])
    assert np.allclose(alg.gamma(D1, SX), expect, atol=1e-13)


def test_gamma_matches_series():
    rng = np.random.default_rng(2)
    s = random_herm(rng, 300, 2.0)
    m = rng.normal(size=(300, 2, 2)) + 1j * rng.normal(size=(300, 2, 2))
    assert np.max(np.abs(alg.gamma(s, m) - alg.gamma_series(s, m, 20))) < 1e-10


def test_v_op_examples_and_square():
    assert np.allclose(alg.v_op(np.zeros((2, 2)), SX), SX)
    expect = np.sqrt((np.exp(2.0) - 1) / 2) * E12
    assert np.allclose(alg.v_op(D1, E12), expect, atol=1e-13)
    rng = np.random.default_rng(3)
    s = random_herm(rng, 300, 2.0)
    m = rng.normal(size=(300, 2, 2)) + 1j * rng.normal(size=(300, 2, 2))
    assert np.max(np.abs(alg.v_op(s, alg.v_op(s, m)) - alg.gamma(s, m))) < 1e-10


def test_hermitian_sum_examples():
    s1 = herm([0.3, -0.2, 0.5])
    assert np.allclose(alg.hermitian_sum(s1, np.zeros((2, 2))), s1, atol=1e-14)
    assert np.allclose(alg.hermitian_sum(D1, 2 * D1), 3 * D1, atol=1e-12)
    out = alg.hermitian_sum(D1, SX)
    assert np.max(np.abs(out - WITNESS_SIGMA)) < 1e-12
    # the non-commutativity witness: far from the naive sum
    assert np.max(np.abs(out - (D1 + SX))) > 1e-3


@settings(max_examples=60, deadline=None)
@given(herm_vec, herm_vec)
def test_hermitian_sum_matches_high_precision_log(v1, v2):
    # scipy's logm loses about 1e-10 on these products, so the oracle is mpmath
    mp = pytest.importorskip("mpmath")
    s1, s2 = herm(v1, 1.5), herm(v2, 1.5)
    with mp.workdps(40):
        def to_mp(a):
            return mp.matrix([[mp.mpc(x.real, x.imag) for x in row] for row in a])

        e2 = mp.expm(to_mp(s2))
        evals, evecs = mp.eighe(e2 * mp.expm(to_mp(2 * s1)) * e2)
        log = evecs * mp.diag([mp.log(e) / 2 for e in evals]) * evecs.transpose_conj()
        oracle = np.array([[complex(log[i, j]) for j in range(2)] for i in range(2)])
    assert np.allclose(alg.hermitian_sum(s1, s2), oracle, rtol=0, atol=1e-12)


def test_hermitian_sum_large_condition_number():
    # e^{2 s1} has condition number e^{120}; compare with a 120-digit oracle
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 120
    s1 = 30.0 * D1
    s2 = -30.0 * D1 + 1e-3 * SX
    out = alg.hermitian_sum(s1, s2)
    e2 = mp.expm(mp.matrix(s2.real.tolist()))
    prod = e2 * mp.expm(mp.matrix((2 * s1.real).tolist())) * e2
    evals, evecs = mp.eigsy(prod)
    logs = mp.diag([mp.log(e) / 2 for e in evals])
    oracle = np.array((evecs * logs * evecs.T).tolist(), dtype=float)
    assert np.allclose(out, oracle, rtol=1e-9, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(herm_vec, st.floats(0.0, 3.0), st.floats(-np.pi, np.pi), herm_vec)
def test_polar_round_trip(v, radius, angle, axis):
    s = herm(v, radius)
    a = herm(axis)
    n = np.linalg.norm(a)
    u = sl.expm(1j * angle * a / n) if n > 1e-6 else np.eye(2)
    g = u @ sl.expm(s)
    uu, ss = alg.polar(g)
    assert np.allclose(uu @ alg.exp_herm(ss), g, atol=1e-10)
    assert alg.is_special_unitary(uu, 1e-10)


def test_polar_examples():
    s = herm([0.4, 0.1, -0.7])
    u, ss = alg.polar(alg.exp_herm(s))
    assert np.allclose(u, np.eye(2), atol=1e-12)
    assert np.allclose(ss, s, atol=1e-12)
    k = sl.expm(1j * 0.7 * SX)
    u, ss = alg.polar(k)
    assert np.allclose(ss, 0, atol=1e-12)
    assert np.allclose(u, k, atol=1e-12)
    with pytest.raises(ValueError):
        alg.polar(2.0 * np.eye(2))


def test_metric_factor_examples():
    assert np.allclose(alg.metric_factor(alg.MetricMatrix(1.0, 0.0)), np.eye(2))
    g = alg.metric_factor(alg.MetricMatrix(1.0, 1.0))
    assert np.allclose(g, [[1, 0], [1, 1]])
    assert np.allclose(alg.dagger(g) @ g, [[2, 1], [1, 1]])
    g = alg.metric_factor(alg.MetricMatrix(np.e, 0.0))
    assert np.allclose(g, np.diag([np.exp(0.5), np.exp(-0.5)]))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 20.0), st.complex_numbers(max_magnitude=5.0, allow_nan=False))
def test_metric_factor_reproduces_metric(h, w):
    m = alg.MetricMatrix(h, w)
    g = alg.metric_factor(m)
    assert np.allclose(alg.dagger(g) @ g, m.matrix(), rtol=1e-12, atol=1e-12)
    assert abs(alg.det2(m.matrix()) - 1) < 1e-10


def test_inner_examples():
    assert alg.inner(np.zeros((2, 2)), SX) == 0
    assert np.isclose(alg.inner(E12, E12), 1.0)
    assert np.isclose(alg.inner(D1, D1), 2.0)
