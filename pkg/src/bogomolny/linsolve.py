"""Linear solvers for shifted 7-point Laplacians with Dirichlet data.

The fast path diagonalizes ``-Delta_h`` in ``x1`` and ``x2`` with type-I
sine transforms and solves the remaining ``y`` problems through a cached
eigendecomposition of the symmetric tridiagonal ``y`` operator.  This is
exact when the shift depends on ``y`` only, and serves as a preconditioner
for conjugate gradients otherwise.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft
import scipy.sparse.linalg as spla

from .geometry import Grid3


def _dst_eigenvalues(m: int, h: float) -> np.ndarray:
    k = np.arange(1, m + 1)
    return (2.0 - 2.0 * np.cos(np.pi * k / (m + 1))) / h**2


class ShiftedPoisson:
    """Direct solver for ``(-Delta_h + c(y)) x = b`` on interior nodes.

    Parameters
    ----------
    grid : Grid3
        Grid whose interior carries the unknowns; face values are zero.
    shift_y : array_like
        Non-negative shift per interior ``y`` level (length ``ny - 2``).
    """

    def __init__(self, grid: Grid3, shift_y):
        self.grid = grid
        m1, m2, my = (n - 2 for n in grid.shape)
        shift_y = np.broadcast_to(np.asarray(shift_y, dtype=float), (my,))
        lam1 = _dst_eigenvalues(m1, grid.h1)
        lam2 = _dst_eigenvalues(m2, grid.h2)
        self.lam12 = lam1[:, None, None] + lam2[None, :, None]
        T = np.diag(2.0 / grid.hy**2 + shift_y)
        off = -np.ones(my - 1) / grid.hy**2
        T += np.diag(off, 1) + np.diag(off, -1)
        self.mu, self.V = np.linalg.eigh(T)

    def solve(self, b: np.ndarray) -> np.ndarray:
        bh = sfft.dstn(b, type=1, axes=(0, 1), norm="ortho")
        bh = bh @ self.V
        bh /= self.lam12 + self.mu[None, None, :]
        bh = bh @ self.V.T
        return sfft.idstn(bh, type=1, axes=(0, 1), norm="ortho")


def apply_shifted(grid: Grid3, x: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """``(-Delta_h + shift) x`` for interior unknowns with zero face values."""
    p = np.pad(x, 1)
    c = p[1:-1, 1:-1, 1:-1]
    lap = (
        (p[2:, 1:-1, 1:-1] - 2 * c + p[:-2, 1:-1, 1:-1]) / grid.h1**2
        + (p[1:-1, 2:, 1:-1] - 2 * c + p[1:-1, :-2, 1:-1]) / grid.h2**2
        + (p[1:-1, 1:-1, 2:] - 2 * c + p[1:-1, 1:-1, :-2]) / grid.hy**2
    )
    return -lap + shift * x


class InnerSolveError(RuntimeError):
    """Raised when the inner linear solve misses its tolerance."""


def solve_shifted(grid: Grid3, b: np.ndarray, shift, rtol: float = 1e-10, maxiter: int = 500):
    """Solve ``(-Delta_h + shift) x = b`` on interior nodes with zero faces.

    ``shift`` is a non-negative array over interior nodes (or a scalar).  When
    it varies only in ``y`` the fast solver is used directly; otherwise it
    preconditions conjugate gradients.

    Returns
    -------
    x : ndarray
    iterations : int
        Number of conjugate-gradient iterations (0 for a direct solve).
    """
    m = b.shape
    shift = np.broadcast_to(np.asarray(shift, dtype=float), m)
    profile = shift.mean(axis=(0, 1))
    fast = ShiftedPoisson(grid, profile)
    if np.array_equal(shift, np.broadcast_to(profile, m)):
        return fast.solve(b), 0
    n = int(np.prod(m))
    A = spla.LinearOperator((n, n), matvec=lambda v: apply_shifted(grid, v.reshape(m), shift).ravel(), dtype=float)
    M = spla.LinearOperator((n, n), matvec=lambda v: fast.solve(v.reshape(m)).ravel(), dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x0 = fast.solve(b).ravel()
    x, info = spla.cg(A, b.ravel(), x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
    if info != 0:
        raise InnerSolveError(f"conjugate gradients did not converge (info={info})")
    return x.reshape(m), count[0]
