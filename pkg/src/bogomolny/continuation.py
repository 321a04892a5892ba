"""Path following for ``V(psi0, s) + t s = 0`` from ``t = 1`` down to small ``t``.

Conventions
-----------
``V(psi0, s)`` is the Hermitian operator residual of ``e^{s/2}`` acting on
``psi0``.  With ``s* = V(psi*)`` and ``psi0 = e^{s*/2} psi*`` the pair
``(t, s) = (1, -s*)`` solves the equation, because ``e^{-s*/2}`` undoes
``e^{s*/2}``.  The derivative of ``s -> V(psi0, s)`` is ``(c/2)(-Delta)``
with ``c`` the linearization constant.

Numerically the unknown is the net deformation ``sigma`` of ``psi*``, with
``sigma = 0`` at ``t = 1``.  The composed gauge ``e^{s/2} e^{s*/2}`` has the
polar form ``k^{-1} e^{sigma/2}`` with ``k`` unitary, so

* ``s`` is the Hermitian sum ``2 hermitian_sum(sigma/2, -s*/2)``,
* ``V(psi0, s) = k^{-1} V(e^{sigma/2} psi*) k`` by gauge covariance.

Forming ``e^{s/2} e^{s*/2}`` directly cancels two large matrices, and
applying two nearly cancelling finite-difference gauges in turn is not
accurate either, because the discrete gauge action is only approximately a
group action.  The covariance identity is exact in the continuum and is
used pointwise here.

Updates compose as Hermitian sums: ``e^{sigma_new/2}`` is the positive part
of ``e^{d/2} e^{sigma/2}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import algebra as alg
from .configuration import (
    Configuration,
    LINEARIZATION_CONSTANT,
    _adjoint_rotation,
    _zero_boundary,
    amg_preconditioner,
    assemble_laplacian_config,
    deform,
    interior_vec,
    operator_residual,
    vec_to_field,
)
from .geometry import Coordinates

ALPHA_MIN = 1e-4


def zero_faces(s: np.ndarray) -> np.ndarray:
    return _zero_boundary(np.asarray(s, dtype=complex))


def sup_norm(f: np.ndarray, collar: int = 1) -> float:
    """Interior sup of the pointwise matrix norm."""
    n = alg.norm(f)
    cl = (slice(collar, -collar),) * 3
    return float(n[cl].max())


def deformed(psi0: Configuration, s: np.ndarray) -> Configuration:
    """``e^{s/2}`` acting on ``psi0`` directly."""
    return deform(psi0, 0.5 * s)


def direct_residual(psi0: Configuration, s: np.ndarray) -> np.ndarray:
    """``V(psi0, s)`` with ``e^{s/2}`` applied to ``psi0`` itself."""
    return operator_residual(deformed(psi0, s))


def hermitian_update(s: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``s`` followed by ``delta`` in the half-gauge convention."""
    return 2.0 * alg.hermitian_sum(0.5 * delta, 0.5 * s)


def _polar_from_sigma(sigma: np.ndarray, s_star: np.ndarray):
    """Polar parts of ``M = e^{sigma/2} e^{-s*/2} = k e^{s/2}``.

    Uses the singular value decomposition ``M = U diag(m, 1/m) W*`` so that
    ``k = U W*`` and ``s = 2 W diag(ln m, -ln m) W*``.  Only the largest
    singular value is used; ``det M = 1`` supplies the other one.  When the
    two singular values are far apart the singular vectors are accurate to
    roundoff, unlike products such as ``M e^{-s/2}`` that cancel entries of
    size ``m``.
    """
    M = alg.exp_herm(0.5 * sigma) @ alg.exp_herm(-0.5 * s_star)
    U, sv, Wh = np.linalg.svd(M)
    mu = np.log(sv[..., 0])
    W = alg.dagger(Wh)
    logs = np.stack([mu, -mu], axis=-1)
    s = 2.0 * (W * logs[..., None, :]) @ Wh
    return U @ Wh, alg.project_herm_traceless(s)


def s_from_sigma(sigma: np.ndarray, s_star: np.ndarray) -> np.ndarray:
    """``s`` with ``e^{s/2}`` the positive part of ``e^{sigma/2} e^{-s*/2}``."""
    return _polar_from_sigma(sigma, s_star)[1]


def unitary_factor(sigma: np.ndarray, s_star: np.ndarray) -> np.ndarray:
    """Unitary ``k`` with ``e^{sigma/2} e^{-s*/2} = k e^{s/2}``."""
    return _polar_from_sigma(sigma, s_star)[0]


def conjugate(k: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``k^{-1} X k`` for unitary ``k``."""
    return alg.dagger(k) @ X @ k


@dataclass
class StepRecord:
    t: float
    residual: float
    steps: int
    alpha: float
    accepted: bool


@dataclass
class ContinuationState:
    """Current point on the path together with its history.

    ``psi_star`` and ``s_star`` define ``psi0 = e^{s*/2} psi*``.  The
    unknown is stored as the net deformation ``sigma`` of ``psi_star``; the
    path variable ``s`` is derived from it.
    """

    psi_star: Configuration
    s_star: np.ndarray
    sigma: np.ndarray
    t: float = 1.0
    schedule: List[float] = field(default_factory=list)
    history: List[StepRecord] = field(default_factory=list)
    initial_residual: float = 0.0
    identity_error: float = 0.0
    collar: int = 1

    @property
    def psi0(self) -> Configuration:
        """``e^{s*/2}`` acting on ``psi*``."""
        return deformed(self.psi_star, self.s_star)

    @property
    def s(self) -> np.ndarray:
        return self.s_of(self.sigma)

    def s_of(self, sigma: np.ndarray) -> np.ndarray:
        return zero_faces(s_from_sigma(sigma, self.s_star))

    def configuration(self, sigma: Optional[np.ndarray] = None) -> Configuration:
        """``e^{sigma/2}`` acting on ``psi*``: the current configuration up to a unitary gauge."""
        sigma = self.sigma if sigma is None else sigma
        return deform(self.psi_star, 0.5 * sigma)

    def residual(self, sigma: Optional[np.ndarray] = None) -> np.ndarray:
        """``V(psi0, s)`` for the ``s`` belonging to ``sigma``."""
        sigma = self.sigma if sigma is None else sigma
        k, _ = _polar_from_sigma(sigma, self.s_star)
        return conjugate(k, operator_residual(self.configuration(sigma)))

    def step_residual(self, sigma: np.ndarray, t: float) -> np.ndarray:
        """``V(psi0, s) + t s``."""
        k, s = _polar_from_sigma(sigma, self.s_star)
        V = conjugate(k, operator_residual(self.configuration(sigma)))
        return V + t * zero_faces(s)


def geometric_schedule(t_final: float = 1e-3) -> list:
    """``1/2, 1/4, ...`` while above ``t_final``, then ``t_final``."""
    if not 0 < t_final < 1:
        raise ValueError("t_final must lie in (0, 1)")
    out = []
    t = 0.5
    while t > t_final * (1 + 1e-12):
        out.append(t)
        t *= 0.5
    out.append(t_final)
    return out


def init_state(psi_star: Configuration, t_final: float = 1e-3, collar: int = 1) -> ContinuationState:
    """Starting pair ``(psi0, s = -s*)`` at ``t = 1``.

    ``s*`` is the operator residual of ``psi_star`` with zero face values.
    ``identity_error`` records ``|V(psi0, -s*) - s*|`` on the interior, with
    ``e^{-s*/2}`` applied directly to ``psi0``; it tends to zero under
    refinement, and is ``inf`` when ``e^{s*/2}`` is too large to apply.
    """
    s_star = zero_faces(operator_residual(psi_star))
    try:
        with np.errstate(over="raise", invalid="raise"):
            err = sup_norm(direct_residual(deformed(psi_star, s_star), -s_star) - s_star, collar)
    except (ValueError, FloatingPointError):
        err = float("inf")
    if not np.isfinite(err):
        err = float("inf")
    return ContinuationState(
        psi_star=psi_star,
        s_star=s_star,
        sigma=np.zeros_like(s_star),
        t=1.0,
        schedule=geometric_schedule(t_final),
        initial_residual=sup_norm(s_star, collar),
        identity_error=err,
        collar=collar,
    )


def update_blocks(state: ContinuationState, X: np.ndarray, t: float, eps: float = 1e-5) -> np.ndarray:
    """Pointwise part of the derivative of ``delta -> G(hermitian_update(sigma, delta))``.

    With ``X = V(e^{sigma/2} psi*)`` held fixed, this differentiates

    ``k(sigma')^{-1} k2^{-1} X k2 k(sigma') + t s(sigma')``

    where ``sigma' = hermitian_update(sigma, delta)`` and
    ``k2 = e^{delta/2} e^{sigma/2} e^{-sigma'/2}``.  The returned real 3x3
    matrices act on Pauli coefficients at interior nodes and come from
    central differences.
    """
    inner = (slice(1, -1),) * 3
    sig = state.sigma[inner]
    star = state.s_star[inner]
    Xi = X[inner]
    half = alg.exp_herm(0.5 * sig)
    cols = []
    for a in range(3):
        e = np.zeros(3)
        e[a] = 1.0
        basis = alg.vec_to_herm(np.broadcast_to(e, sig.shape[:-2] + (3,)))
        outs = []
        for sign in (1.0, -1.0):
            d = sign * eps * basis
            sn = hermitian_update(sig, d)
            k2 = alg.exp_herm(0.5 * d) @ half @ alg.exp_herm(-0.5 * sn)
            k, s_new = _polar_from_sigma(sn, star)
            outs.append(conjugate(k2 @ k, Xi) + t * s_new)
        diff = (outs[0] - outs[1]) / (2 * eps)
        cols.append(alg.herm_to_vec(alg.project_herm_traceless(diff)))
    return np.stack(cols, axis=-1)


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    m = blocks.shape[:-2]
    n = int(np.prod(m))
    b = blocks.reshape(n, 3, 3)
    rows = (3 * np.arange(n))[:, None, None] + np.arange(3)[None, :, None]
    cols = (3 * np.arange(n))[:, None, None] + np.arange(3)[None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    return sp.csr_matrix((b.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * n, 3 * n))


def newton_direction(state: ContinuationState, t: float, G: np.ndarray,
                     c: float = LINEARIZATION_CONSTANT, rtol: float = 1e-2, maxiter: int = 40,
                     method: str = "matrix-free"):
    """Solve the linearized step equation for ``delta`` with ``delta = 0`` on the faces.

    ``method="matrix-free"`` (the default) lets GMRES act with forward
    difference quotients of ``delta -> G(hermitian_update(sigma, delta))``,
    the derivative of the discrete step residual itself.  ``method="blocks"``
    uses the assembled approximation ``k^{-1} (c/2)(-Delta) delta k`` plus
    the pointwise blocks of :func:`update_blocks`; near the faces it differs
    from the discrete derivative because the residual uses one-sided first
    differences there.  Both are preconditioned by algebraic multigrid on
    ``(c/2)(-Delta) + t``, with ``Delta`` the covariant Laplacian of
    ``e^{sigma/2} psi*``.

    Returns ``None`` when GMRES produces no usable direction.
    """
    grid = state.psi_star.grid
    inner = (slice(1, -1),) * 3
    psi = state.configuration()
    L = assemble_laplacian_config(psi)
    lap = (-0.5 * c) * L
    P = (lap + t * sp.identity(L.shape[0], format="csr")).tocsr()
    M = amg_preconditioner(P)
    g = alg.herm_to_vec(alg.project_herm_traceless(G[inner]))
    k = unitary_factor(state.sigma, state.s_star)
    R = _adjoint_rotation(k[inner])
    if method == "blocks":
        B = update_blocks(state, operator_residual(psi), t)
        J = (lap + _block_diag(R @ B)).tocsr()
    elif method == "matrix-free":
        base = interior_vec(G)
        scale = 1.0 + float(np.max(np.abs(state.sigma)))

        def matvec(v):
            v = np.asarray(v, dtype=float).ravel()
            nv = float(np.max(np.abs(v)))
            if nv == 0.0:
                return np.zeros_like(v)
            eps = 1e-7 * scale / nv
            d = vec_to_field(grid, eps * v)
            moved = state.step_residual(zero_faces(hermitian_update(state.sigma, d)), t)
            out = (interior_vec(moved) - base) / eps
            o = out.reshape(R.shape[:-2] + (3,))
            return np.einsum("...ab,...b->...a", R, o).reshape(-1)

        J = spla.LinearOperator(L.shape, matvec=matvec, dtype=float)
    else:
        raise ValueError(f"unknown method {method!r}")
    b = -np.einsum("...ab,...b->...a", R, g).reshape(-1)
    x, info = spla.gmres(J, b, M=M, rtol=rtol, atol=0.0, restart=maxiter, maxiter=1)
    # GMRES minimizes the preconditioned residual; an inexact direction is
    # still useful, since the line search decides on acceptance
    if not np.all(np.isfinite(x)) or not np.any(x):
        return None
    return vec_to_field(grid, x)


def newton_step(
    state: ContinuationState,
    t: float,
    c: float = LINEARIZATION_CONSTANT,
    rtol: float = 1e-2,
):
    """One damped Newton step at parameter ``t`` from ``state.sigma``.

    The update ``sigma <- hermitian_update(sigma, alpha delta)`` backtracks
    on ``alpha`` until the interior sup of ``V + t s`` decreases.

    Returns
    -------
    sigma_new : ndarray or None
        ``None`` when no ``alpha >= 1e-4`` decreases the residual.
    residual : float
    alpha : float
    """
    if t <= 0:
        raise ValueError("Newton steps need t > 0")
    sigma = state.sigma
    G = state.step_residual(sigma, t)
    g0 = sup_norm(G, state.collar)
    delta = newton_direction(state, t, G, c=c, rtol=rtol)
    if delta is None:
        return None, g0, 0.0
    alpha = 1.0
    while alpha >= ALPHA_MIN:
        cand = zero_faces(hermitian_update(sigma, alpha * delta))
        g = sup_norm(state.step_residual(cand, t), state.collar)
        if g < g0:
            return cand, g, alpha
        alpha *= 0.5
    return None, g0, 0.0


@dataclass(frozen=True)
class DecayReport:
    """Decay diagnostics of ``s``: ``sup rho |s|`` and ``max |s|/sqrt(y)`` near the bottom."""

    rho_sup: float
    sqrt_y_constant: float
    bottom_levels: int

    def as_dict(self) -> dict:
        return {
            "rho_sup": self.rho_sup,
            "sqrt_y_constant": self.sqrt_y_constant,
            "bottom_levels": self.bottom_levels,
        }


def decay_report(s: np.ndarray, grid, collar: int = 1, bottom_levels: Optional[int] = None) -> DecayReport:
    """``sup rho |s|`` over the interior and ``max |s|/sqrt(y)`` on the bottom layers.

    The bottom layers are the first ``max(2, ny // 8)`` interior ``y`` levels
    unless ``bottom_levels`` is given.
    """
    n = alg.norm(s)
    rho = Coordinates.build(grid).rho
    inside = grid.interior_mask(collar)
    k = max(2, grid.ny // 8) if bottom_levels is None else int(bottom_levels)
    Y = np.broadcast_to(grid.Y(), grid.shape)
    bottom = inside.copy()
    bottom[:, :, collar + k :] = False
    return DecayReport(
        float((rho * n)[inside].max()),
        float((n / np.sqrt(Y))[bottom].max()),
        k,
    )


@dataclass
class ContinuationResult:
    s: np.ndarray
    history: List[StepRecord]
    decay: DecayReport
    final_t: float
    final_residual: float
    initial_residual: float
    success: bool
    psi: Optional[Configuration] = None


def solve_at(
    state: ContinuationState,
    t: float,
    tol: float,
    max_newton: int = 12,
    c: float = LINEARIZATION_CONSTANT,
):
    """Newton iteration at fixed ``t`` from ``state.sigma``.

    Returns the new ``sigma`` (or ``None`` on failure), the number of accepted
    steps, the last ``alpha`` and the final residual.
    """
    s_keep = state.sigma
    g = sup_norm(state.step_residual(state.sigma, t), state.collar)
    steps, alpha = 0, 1.0
    while g > tol and steps < max_newton:
        s_new, g_new, alpha = newton_step(state, t, c=c)
        if s_new is None:
            state.sigma = s_keep
            return None, steps, alpha, g
        state.sigma = s_new
        g = g_new
        steps += 1
    s_out = state.sigma
    state.sigma = s_keep
    if g > tol:
        return None, steps, alpha, g
    return s_out, steps, alpha, g


def run_schedule(
    state: ContinuationState,
    tol: Optional[float] = None,
    rel_tol: float = 1e-3,
    max_newton: int = 12,
    max_refinements: int = 8,
    c: float = LINEARIZATION_CONSTANT,
    callback: Optional[Callable[[StepRecord], None]] = None,
) -> ContinuationResult:
    """Walk ``t`` down the schedule, meeting the step tolerance at each value.

    The tolerance defaults to ``rel_tol`` times the initial residual
    ``|s*|``.  A failed value of ``t`` is replaced by the geometric mean of
    it and the last accepted value, at most ``max_refinements`` times in a
    row; after that the run stops with ``success = False``.
    """
    if tol is None:
        tol = rel_tol * state.initial_residual
    tol = max(tol, 1e-12)
    grid = state.psi_star.grid
    pending = list(state.schedule)
    success = True
    refinements = 0
    while pending:
        t = pending[0]
        s_new, steps, alpha, g = solve_at(state, t, tol, max_newton=max_newton, c=c)
        rec = StepRecord(t, g, steps, alpha, s_new is not None)
        state.history.append(rec)
        if callback is not None:
            callback(rec)
        if s_new is None:
            refinements += 1
            if refinements > max_refinements:
                success = False
                break
            pending.insert(0, float(np.sqrt(state.t * t)))
            continue
        refinements = 0
        state.sigma = s_new
        state.t = t
        pending.pop(0)
    final = sup_norm(state.residual(), state.collar)
    return ContinuationResult(
        s=state.s,
        history=state.history,
        decay=decay_report(state.s, grid, state.collar),
        final_t=state.t,
        final_residual=final,
        initial_residual=state.initial_residual,
        success=success,
        psi=state.configuration(),
    )
