"""Tests for complex polynomials, resultants and the Bezout solver."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bogomolny.poly import CoprimalityError, CPoly, bezout, parse_poly, resultant, sylvester_matrix

Z = CPoly.z()


def from_roots(roots, lead=1.0):
    p = CPoly([lead])
    for r in roots:
        p = p * (Z - r)
    return p


def test_eval_examples():
    assert CPoly([1])(123.4 - 5j) == 1
    assert np.isclose((Z * Z)(1 + 1j), 2j)
    assert (Z - 1)(1.0) == 0


def test_arithmetic_and_degree():
    p = (Z + 1) * (Z - 2)
    assert p.degree == 2
    assert p == CPoly([-2, -1, 1])
    assert (p - p).is_zero
    assert p.deriv() == CPoly([-1, 2])
    assert (3 * Z).monic() == Z
    assert (Z**3).degree == 3


def test_roots_round_trip():
    roots = np.array([0.3, -0.5j, 0.1 + 0.2j])
    got = np.sort_complex(from_roots(roots).roots())
    assert np.allclose(got, np.sort_complex(roots))


def test_bezout_examples():
    s, t = bezout(Z, CPoly([1]))
    assert s.is_zero and t == CPoly([1])
    s, t = bezout(Z * Z, Z + 1)
    # frozen from the Sylvester linear solve: S = 1, T = 1 - z
    assert np.allclose(s.coeffs, [1.0], atol=1e-12)
    assert np.allclose(t.coeffs, [1.0, -1.0], atol=1e-12)


def test_bezout_equal_degrees_rejected():
    # deg R = deg Q falls outside the contract deg R < deg Q
    with pytest.raises(ValueError):
        bezout(Z - 1, Z + 1)


def test_bezout_common_root_rejected():
    with pytest.raises(CoprimalityError):
        bezout((Z - 0.5) * (Z + 0.5), Z - 0.5)
    with pytest.raises(CoprimalityError):
        bezout(Z, CPoly([0]))


def test_resultant_examples():
    assert np.isclose(resultant(Z, CPoly([1])), 1)
    assert abs(resultant(Z - 1, Z - 1)) < 1e-14
    assert np.isclose(resultant(Z * Z, Z + 1), 1)


def test_resultant_product_formula():
    rng = np.random.default_rng(4)
    for _ in range(20):
        qr = rng.uniform(-1, 1, 4) + 1j * rng.uniform(-1, 1, 4)
        rr = rng.uniform(-1, 1, 2) + 1j * rng.uniform(-1, 1, 2)
        q, r = from_roots(qr), from_roots(rr, lead=2.0)
        oracle = np.prod(r(qr))
        assert np.isclose(resultant(q, r), oracle, rtol=1e-10)


def test_sylvester_shape():
    assert sylvester_matrix(Z**3, Z + 1).shape == (4, 4)


roots_st = st.lists(
    st.complex_numbers(max_magnitude=0.95, allow_nan=False, allow_infinity=False), min_size=1, max_size=6
)


@settings(max_examples=80, deadline=None)
@given(roots_st, st.data())
def test_bezout_identity(qroots, data):
    qroots = np.array(qroots)
    n = len(qroots)
    m = data.draw(st.integers(0, n - 1))
    rroots = np.array(
        data.draw(st.lists(st.complex_numbers(max_magnitude=0.95, allow_nan=False), min_size=m, max_size=m)),
        dtype=complex,
    )
    gaps = np.abs(qroots[:, None] - rroots[None, :]) if m else np.ones(1)
    qgaps = np.abs(qroots[:, None] - qroots[None, :]) + np.eye(n)
    if gaps.min() < 0.05 or qgaps.min() < 0.05:
        return
    q, r = from_roots(qroots), from_roots(rroots)
    s, t = bezout(q, r)
    assert s.degree < max(m, 1) and t.degree < n
    zs = np.exp(2j * np.pi * np.arange(64) / 64)
    assert np.max(np.abs(q(zs) * s(zs) + t(zs) * r(zs) - 1)) < 1e-8


def test_parse_poly():
    assert parse_poly([1, [0, 2]]) == CPoly([1, 2j])
    with pytest.raises(ValueError):
        parse_poly([])
    with pytest.raises(ValueError):
        parse_poly([[1, 2, 3]])
