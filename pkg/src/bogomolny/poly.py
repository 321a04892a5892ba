"""Complex polynomials in z and the Bezout identity ``QS + TR = 1``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

TRIM_TOL = 1e-14


class CoprimalityError(ValueError):
    """Raised when two polynomials share a root up to round-off."""


def _trim(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex).ravel()
    nz = np.nonzero(np.abs(coeffs) > TRIM_TOL)[0]
    if nz.size == 0:
        return np.zeros(1, dtype=complex)
    return coeffs[: nz[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class CPoly:
    """Polynomial with complex coefficients in ascending degree order.

    Examples
    --------
    >>> CPoly([0, 0, 1])(1 + 1j)
    2j
    """

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    @classmethod
    def constant(cls, c: complex) -> "CPoly":
        return cls([c])

    @classmethod
    def z(cls) -> "CPoly":
        return cls([0, 1])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.degree == 0 and abs(self.coeffs[0]) <= TRIM_TOL

    @property
    def leading(self) -> complex:
        return complex(self.coeffs[-1])

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, self.coeffs[-1], dtype=complex)
        for c in self.coeffs[-2::-1]:
            out = out * z + c
        if out.ndim == 0:
            return complex(out)
        return out

    def deriv(self) -> "CPoly":
        if self.degree == 0:
            return CPoly([0])
        return CPoly(self.coeffs[1:] * np.arange(1, len(self.coeffs)))

    def monic(self) -> "CPoly":
        if self.is_zero:
            raise ValueError("the zero polynomial has no monic form")
        return CPoly(self.coeffs / self.coeffs[-1])

    def is_monic(self, tol: float = 1e-12) -> bool:
        return abs(self.leading - 1.0) <= tol

    def roots(self) -> np.ndarray:
        if self.degree == 0:
            return np.zeros(0, dtype=complex)
        return np.roots(self.coeffs[::-1])

    def conj_coeffs(self) -> "CPoly":
        """Polynomial whose coefficients are conjugated (so ``p*(z) = conj(p(conj z))``)."""
        return CPoly(np.conj(self.coeffs))

    def __add__(self, other) -> "CPoly":
        other = as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n, dtype=complex)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return CPoly(a)

    __radd__ = __add__

    def __neg__(self) -> "CPoly":
        return CPoly(-self.coeffs)

    def __sub__(self, other) -> "CPoly":
        return self + (-as_poly(other))

    def __rsub__(self, other) -> "CPoly":
        return as_poly(other) - self

    def __mul__(self, other) -> "CPoly":
        other = as_poly(other)
        return CPoly(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "CPoly":
        out = CPoly([1])
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, (CPoly, int, float, complex)):
            return NotImplemented
        other = as_poly(other)
        return len(self.coeffs) == len(other.coeffs) and bool(np.all(self.coeffs == other.coeffs))

    def __hash__(self):
        return hash(tuple(self.coeffs))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def to_list(self) -> list:
        """Coefficients as plain numbers (real when the imaginary part vanishes)."""
        out = []
        for c in self.coeffs:
            out.append(float(c.real) if c.imag == 0 else [float(c.real), float(c.imag)])
        return out

    def __repr__(self) -> str:
        return f"CPoly({self.to_list()})"


def as_poly(p) -> CPoly:
    if isinstance(p, CPoly):
        return p
    if np.isscalar(p):
        return CPoly([p])
    return CPoly(p)


def sylvester_matrix(q: CPoly, r: CPoly) -> np.ndarray:
    """Sylvester matrix of ``q`` (degree n) and ``r`` (degree m), size n + m.

    Rows hold descending coefficients: m shifted copies of ``q`` followed by
    n shifted copies of ``r``.
    """
    n, m = q.degree, r.degree
    size = n + m
    mat = np.zeros((size, size), dtype=complex)
    qd = q.coeffs[::-1]
    rd = r.coeffs[::-1]
    for i in range(m):
        mat[i, i : i + n + 1] = qd
    for i in range(n):
        mat[m + i, i : i + m + 1] = rd
    return mat


def resultant(q, r) -> complex:
    """Resultant as the Sylvester determinant (1 when the matrix is empty)."""
    q, r = as_poly(q), as_poly(r)
    if q.degree + r.degree == 0:
        return complex(1.0)
    return complex(np.linalg.det(sylvester_matrix(q, r)))


def bezout(q, r, tol: float = 1e-10):
    """Minimal-degree solution of ``q s + t r = 1``.

    Parameters
    ----------
    q : CPoly
        Monic polynomial of degree n.
    r : CPoly
        Polynomial of degree m < n, coprime to ``q``.

    Returns
    -------
    (s, t) : tuple of CPoly
        ``deg s < m`` and ``deg t < n``.

    Raises
    ------
    CoprimalityError
        If the resultant is tiny relative to the coefficient scale.
    """
    q, r = as_poly(q), as_poly(r)
    if r.is_zero:
        raise CoprimalityError("R = 0 has no Bezout partner")
    if r.degree >= q.degree:
        raise ValueError("Bezout identity needs deg R < deg Q")
    n, m = q.degree, r.degree
    if m == 0:
        return CPoly([0]), CPoly([1.0 / r.coeffs[0]])
    scale = q.sup_norm() ** m * r.sup_norm() ** n
    if abs(resultant(q, r)) < tol * scale:
        raise CoprimalityError("Q and R are not coprime")
    # unknowns: ascending coefficients of s (m of them) then of t (n of them)
    size = n + m
    mat = np.zeros((size, size), dtype=complex)
    for j in range(m):
        mat[j : j + n + 1, j] = q.coeffs
    for j in range(n):
        mat[j : j + m + 1, m + j] = r.coeffs
    rhs = np.zeros(size, dtype=complex)
    rhs[0] = 1.0
    colscale = np.max(np.abs(mat), axis=0)
    sol, *_ = np.linalg.lstsq(mat / colscale, rhs, rcond=None)
    sol = sol / colscale
    return CPoly(sol[:m]), CPoly(sol[m:])


def parse_poly(value: Sequence) -> CPoly:
    """Build a polynomial from a coefficient list.

    Entries may be numbers or ``[re, im]`` pairs.
    """
    coeffs = []
    for c in value:
        if isinstance(c, (list, tuple)):
            if len(c) != 2:
                raise ValueError("complex coefficient must be a [re, im] pair")
            coeffs.append(complex(float(c[0]), float(c[1])))
        else:
            coeffs.append(complex(c))
    if not coeffs:
        raise ValueError("empty coefficient list")
    return CPoly(coeffs)
