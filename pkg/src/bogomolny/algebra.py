"""Exact 2x2 matrix calculus for su(2) and sl(2, C).

Every routine accepts arrays of shape ``(..., 2, 2)`` and acts node by node,
so the same code serves single matrices and whole grid fields.  Functions of
``ad_s`` (the maps ``gamma`` and ``v``) are evaluated in the eigenbasis of
``s``: if ``s = U diag(l, -l) U*`` then ``ad_s`` acts on ``U E_ij U*`` by the
eigenvalue ``l_i - l_j``, one of ``0`` or ``+-2l``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERM_TOL = 1e-12
TAYLOR_CUTOFF = 1e-6

IDENTITY = np.eye(2, dtype=complex)
SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix commutator ``[a, b]``."""
    return a @ b - b @ a


def trace(a: np.ndarray) -> np.ndarray:
    return a[..., 0, 0] + a[..., 1, 1]


def det2(a: np.ndarray) -> np.ndarray:
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def inv2(a: np.ndarray) -> np.ndarray:
    """Inverse of 2x2 matrices through the adjugate."""
    d = det2(a)
    if np.any(d == 0):
        raise ValueError("singular matrix")
    out = np.empty_like(a, dtype=np.result_type(a, complex))
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out / d[..., None, None]


def inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Real inner product ``Re tr(a* b)``, evaluated node by node."""
    return np.real(np.sum(np.conj(a) * b, axis=(-2, -1)))


def norm(a: np.ndarray) -> np.ndarray:
    """Frobenius norm per node."""
    return np.sqrt(inner(a, a))


def _check_finite(a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")


def as_herm_traceless(s, tol: float = HERM_TOL) -> np.ndarray:
    """Validate a Hermitian traceless field and return its re-symmetrized copy.

    The tolerance is absolute for entries of unit size and relative for
    larger ones, so that long pipelines with large sections do not trip it.

    Raises
    ------
    ValueError
        If ``s`` is not Hermitian or not traceless within ``tol``.
    """
    s = np.asarray(s, dtype=complex)
    if s.shape[-2:] != (2, 2):
        raise ValueError("expected trailing shape (2, 2)")
    _check_finite(s)
    scale = max(1.0, float(np.max(np.abs(s), initial=0.0)))
    if np.max(np.abs(s - dagger(s)), initial=0.0) > tol * scale:
        raise ValueError("section is not Hermitian")
    if np.max(np.abs(trace(s)), initial=0.0) > tol * scale:
        raise ValueError("section is not traceless")
    return project_herm_traceless(s)


def project_herm_traceless(s: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto Hermitian traceless matrices."""
    s = 0.5 * (s + dagger(s))
    tr = 0.5 * trace(s)
    s = s.copy()
    s[..., 0, 0] -= tr
    s[..., 1, 1] -= tr
    return s


def project_su2(a: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto anti-Hermitian traceless matrices."""
    return 1j * project_herm_traceless(-1j * a)


def is_special_unitary(g: np.ndarray, tol: float = HERM_TOL) -> bool:
    g = np.asarray(g, dtype=complex)
    unit = np.max(np.abs(dagger(g) @ g - IDENTITY), initial=0.0) <= tol
    return bool(unit and np.max(np.abs(det2(g) - 1.0), initial=0.0) <= tol)


def _half_norm(s: np.ndarray) -> np.ndarray:
    """``l >= 0`` with ``l**2 = -det(s)`` for Hermitian traceless ``s``."""
    return np.sqrt(np.maximum(np.real(s[..., 0, 0]) ** 2 + np.abs(s[..., 0, 1]) ** 2, 0.0))


def _sinhc(x: np.ndarray) -> np.ndarray:
    small = np.abs(x) < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 6.0, np.sinh(safe) / safe)


def exp_herm(s) -> np.ndarray:
    """Exponential of a Hermitian traceless matrix.

    Uses ``e^s = cosh(l) I + sinh(l)/l s`` with ``l^2 = -det s``, which holds
    because ``s^2 = l^2 I``.

    Examples
    --------
    >>> np.allclose(exp_herm(np.diag([1.0, -1.0])), np.diag([np.e, 1 / np.e]))
    True
    """
    s = as_herm_traceless(s)
    lam = _half_norm(s)
    return np.cosh(lam)[..., None, None] * IDENTITY + _sinhc(lam)[..., None, None] * s


def _herm_eig(a: np.ndarray):
    a = 0.5 * (a + dagger(a))
    return np.linalg.eigh(a)


def log_herm(p) -> np.ndarray:
    """Logarithm of a Hermitian positive definite matrix with unit determinant.

    Raises
    ------
    ValueError
        If ``p`` is not Hermitian or not positive definite.
    """
    p = np.asarray(p, dtype=complex)
    _check_finite(p)
    scale = max(1.0, float(np.max(np.abs(p), initial=0.0)))
    if np.max(np.abs(p - dagger(p)), initial=0.0) > 1e-10 * scale:
        raise ValueError("matrix is not Hermitian")
    evals, evecs = _herm_eig(p)
    if np.any(evals <= 0):
        raise ValueError("matrix is not positive definite")
    logs = np.log(evals)
    # remove any residual trace coming from det(p) != 1 in floating point
    logs = logs - logs.mean(axis=-1, keepdims=True)
    out = (evecs * logs[..., None, :]) @ dagger(evecs)
    return project_herm_traceless(out)


def ad_function(s, m, func) -> np.ndarray:
    """Apply ``func(ad_s)`` to ``m`` through the eigenbasis of ``s``.

    Parameters
    ----------
    s : array_like
        Hermitian traceless matrices, shape ``(..., 2, 2)``.
    m : array_like
        Arbitrary complex matrices broadcastable against ``s``.
    func : callable
        Scalar function evaluated on the real eigenvalues ``l_i - l_j``.
    """
    s = as_herm_traceless(s)
    m = np.asarray(m, dtype=complex)
    evals, u = _herm_eig(s)
    diff = evals[..., :, None] - evals[..., None, :]
    mt = dagger(u) @ m @ u
    return u @ (func(diff) * mt) @ dagger(u)


def f_one(x):
    """``(e^x - 1)/x`` with the removable singularity filled in."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x / 2.0 + x * x / 6.0, np.expm1(safe) / safe)


def f_half(x):
    """Square root of ``f_one``."""
    return np.sqrt(f_one(x))


def gamma(s, m) -> np.ndarray:
    """``gamma(s)(m) = ((e^{ad_s} - 1)/ad_s)(m)``."""
    return ad_function(s, m, f_one)


def v_op(s, m) -> np.ndarray:
    """``v(s)(m) = sqrt(gamma(s))(m)``."""
    return ad_function(s, m, f_half)


def gamma_series(s, m, terms: int = 20) -> np.ndarray:
    """Truncated series ``sum_k ad_s^k(m)/(k+1)!``; kept as a test oracle."""
    s = np.asarray(s, dtype=complex)
    term = np.asarray(m, dtype=complex)
    out = term.copy()
    fact = 1.0
    for k in range(1, terms + 1):
        term = comm(s, term)
        fact *= k + 1
        out = out + term / fact
    return out


def hermitian_sum(s1, s2) -> np.ndarray:
    """Hermitian gauge addition ``sigma = 1/2 log(e^{s2} e^{2 s1} e^{s2})``."""
    s1 = as_herm_traceless(s1)
    s2 = as_herm_traceless(s2)
    e2 = exp_herm(s2)
    prod = e2 @ exp_herm(2.0 * s1) @ e2
    return 0.5 * _log_unit_positive(0.5 * (prod + dagger(prod)))


def _log_unit_positive(p: np.ndarray) -> np.ndarray:
    """Logarithm of a positive matrix known to have unit determinant.

    Writing ``p = cosh(m) I + v`` with ``v`` traceless and ``|v| = sinh(m)``
    gives ``log p = asinh(|v|) v / |v|``. Only the traceless part enters, so
    the small eigenvalue of a badly conditioned ``p`` is never needed.
    """
    _check_finite(p)
    v = project_herm_traceless(p)
    lam = _half_norm(v)
    safe = np.where(lam > 0.0, lam, 1.0)
    ratio = np.where(lam > 1e-8, np.arcsinh(lam) / safe, 1.0 - lam**2 / 6.0)
    return ratio[..., None, None] * v


def polar(g, tol: float = 1e-10):
    """Split ``g = u e^s`` with ``u`` special unitary and ``s`` Hermitian traceless.

    Raises
    ------
    ValueError
        If ``g`` is singular or does not have unit determinant.
    """
    g = np.asarray(g, dtype=complex)
    _check_finite(g)
    d = det2(g)
    if np.any(np.abs(d) < 1e-300):
        raise ValueError("singular matrix")
    scale = np.maximum(1.0, np.max(np.abs(g), axis=(-2, -1)) ** 2)
    if np.any(np.abs(d - 1.0) > tol * scale):
        raise ValueError("polar decomposition needs det g = 1")
    # singular value decomposition g = U diag(m1, m2) W*: u = U W* and
    # s = W diag(ln m) W*, without squaring the condition number of g
    U, sv, Wh = np.linalg.svd(g)
    mu = 0.5 * (np.log(sv[..., 0]) - np.log(sv[..., 1]))
    logs = np.stack([mu, -mu], axis=-1)
    s = project_herm_traceless((dagger(Wh) * logs[..., None, :]) @ Wh)
    return U @ Wh, s


@dataclass(frozen=True)
class MetricMatrix:
    """Hermitian metric ``[[h + |w|^2/h, conj(w)/h], [w/h, 1/h]]``."""

    h: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if np.any(~np.isfinite(h)) or np.any(h <= 0):
            raise ValueError("metric scale h must be positive")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "w", np.asarray(self.w, dtype=complex))

    def matrix(self) -> np.ndarray:
        h, w = np.broadcast_arrays(self.h, self.w)
        out = np.empty(h.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = h + np.abs(w) ** 2 / h
        out[..., 0, 1] = np.conj(w) / h
        out[..., 1, 0] = w / h
        out[..., 1, 1] = 1.0 / h
        return out


def metric_factor(metric: MetricMatrix) -> np.ndarray:
    """Lower triangular ``g`` with ``g* g = H``."""
    h, w = np.broadcast_arrays(metric.h, metric.w)
    rh = np.sqrt(h)
    out = np.zeros(h.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = rh
    out[..., 1, 0] = w / rh
    out[..., 1, 1] = 1.0 / rh
    return out


def herm_to_vec(s: np.ndarray) -> np.ndarray:
    """Coefficients ``x`` with ``s = sum_a x_a sigma_a``."""
    return np.stack(
        [np.real(s[..., 0, 1]), -np.imag(s[..., 0, 1]), np.real(s[..., 0, 0])], axis=-1
    )


def vec_to_herm(x: np.ndarray) -> np.ndarray:
    return np.einsum("...a,aij->...ij", np.asarray(x, dtype=float), SIGMA)
