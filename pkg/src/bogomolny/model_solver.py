"""The scalar model equation ``Delta u + e^{-2u}|P(z)|^2 = 0`` on a box.

Solutions behave like ``ln y + ln|P|`` at the bottom face, which a plain
7-point stencil resolves poorly.  The solver therefore works with the lifted
unknown ``v = u - ln y`` and the discrete operator

    N_h(u) = Delta_h(u - ln y) - 1/y^2 + e^{-2u}|P|^2,

which is exact on ``ln y`` (since ``Delta ln y = -1/y^2``).  Every residual,
sub/super classification and iteration below refers to ``N_h``.

The monotone iteration solves

    (-Delta_h + C) d_n = N_h(u_n),   u_{n+1} = u_n + d_n,

with zero Dirichlet data on ``d``.  This is the lifting step
``Delta u_{n+1} - C u_{n+1} = -e^{-2u_n}|P|^2 - C u_n`` rewritten as an
update.  When ``C >= 2 e^{-2u}|P|^2`` at every node along the iteration the
updates are non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Grid3, dy, laplacian
from .linsolve import solve_shifted
from .poly import CPoly, as_poly

INTERIOR = (slice(1, -1),) * 3


class MonotonicityError(RuntimeError):
    """An outer update decreased the iterate (the relaxation field is too small)."""


class KnotError(ValueError):
    """Raised when P vanishes on the closed box and no regularization is requested."""


def _log_y(grid: Grid3) -> np.ndarray:
    return np.broadcast_to(np.log(grid.mesh()[2]), grid.shape)


def abs_p2(P: CPoly, grid: Grid3) -> np.ndarray:
    return np.abs(as_poly(P)(grid.z())) ** 2


def lifted_laplacian(grid: Grid3, u: np.ndarray) -> np.ndarray:
    """``Delta_h(u - ln y) - 1/y^2`` on interior nodes, zero on the faces."""
    Y = grid.Y()
    out = laplacian(grid, u - np.log(Y))
    out[INTERIOR] -= 1.0 / Y[INTERIOR] ** 2
    return out


def model_residual(grid: Grid3, u: np.ndarray, P) -> np.ndarray:
    """``N_h(u)``: discrete ``Delta u + e^{-2u}|P|^2`` on interior nodes."""
    out = lifted_laplacian(grid, u)
    out[INTERIOR] += np.exp(-2.0 * u[INTERIOR]) * abs_p2(P, grid)[INTERIOR]
    return out


def knots_in_box(P, grid: Grid3) -> np.ndarray:
    """Roots of P whose projection lies in the closed square ``[-L, L]^2``."""
    roots = as_poly(P).roots()
    inside = (np.abs(roots.real) <= grid.L + 1e-12) & (np.abs(roots.imag) <= grid.L + 1e-12)
    return roots[inside]


def boundary_data(P, grid: Grid3, regularize: bool = False, eps: Optional[float] = None) -> np.ndarray:
    """Dirichlet data ``ln(|P| sinh y)``, evaluated on the full grid.

    With ``regularize=True`` the data is ``1/2 ln(|P|^2 sinh^2 y + eps^2)``
    with ``eps = h_min`` by default.

    Raises
    ------
    KnotError
        If P has a root over the box and regularization is off.
    """
    P = as_poly(P)
    if P.is_zero:
        raise ValueError("P must not be the zero polynomial")
    Y = grid.Y()
    p2 = abs_p2(P, grid)
    if regularize:
        eps = grid.h_min if eps is None else eps
        return 0.5 * np.log(p2 * np.sinh(Y) ** 2 + eps**2)
    if len(knots_in_box(P, grid)) or np.any(p2 == 0):
        raise KnotError("P vanishes over the box; enable regularization")
    return 0.5 * np.log(p2) + np.log(np.sinh(Y))


def perron_profile(y, C: float) -> np.ndarray:
    """``f(y) = y - C - C ln(y/C)`` for ``y >= C`` and 0 below.

    ``f`` is continuously differentiable with ``f(C) = f'(C) = 0`` and
    ``f'' = C/y^2``, so ``ln y + f`` is a sub-solution profile once ``C >= 1``.
    """
    y = np.asarray(y, dtype=float)
    yy = np.maximum(y, C)
    return np.where(y >= C, yy - C - C * np.log(yy / C), 0.0)


@dataclass
class Seeds:
    sub: np.ndarray
    super: np.ndarray
    shift: float
    C: float


def sub_super_seeds(P, grid: Grid3, C: float = 2.0, margin: float = 1e-9) -> Seeds:
    """Sub and super seeds built on ``u0 = ln y + ln|P|``.

    ``super = u0 + y``; ``sub = u0 + f(y) - a`` where ``f`` is
    :func:`perron_profile` and the constant ``a >= 0`` is the smallest shift
    that makes the seed a discrete sub-solution of ``N_h`` (it is of size
    ``O(h^2)`` for smooth ``ln|P|``).  Knotless P only.
    """
    if C < 1.0:
        raise ValueError("the profile constant must be at least 1")
    P = as_poly(P)
    p2 = abs_p2(P, grid)
    if len(knots_in_box(P, grid)) or np.any(p2 == 0):
        raise KnotError("seeds need P without roots over the box")
    Y = grid.Y()
    lnp = 0.5 * np.log(p2)
    f = perron_profile(Y, C)
    w = lnp + f
    q = (1.0 - Y**2 * laplacian(grid, w)) * np.exp(2.0 * f)
    qmax = float(np.max(q[INTERIOR]))
    a = 0.5 * np.log(max(1.0, qmax)) + margin
    u_sub = np.log(Y) + w - a
    u_super = np.log(Y) + lnp + Y
    return Seeds(u_sub, u_super, a, C)


def harmonic_seed(grid: Grid3, bc: np.ndarray) -> np.ndarray:
    """Solution of ``Delta_h(u - ln y) = 1/y^2`` with the given face values.

    Since ``N_h`` of it equals ``e^{-2u}|P|^2 >= 0`` this is a sub-solution
    for every P, including polynomials with roots over the box.
    """
    lift = _log_y(grid)
    vb = np.where(grid.boundary_mask(), bc - lift, 0.0)
    Y = grid.Y()
    rhs = -(1.0 / Y[INTERIOR] ** 2 - laplacian(grid, vb)[INTERIOR])
    d, _ = solve_shifted(grid, rhs, 0.0)
    v = vb.copy()
    v[INTERIOR] = d
    return v + lift


@dataclass
class SubSuperReport:
    residual: np.ndarray
    classification: str
    tol: float


def check_sub_super(u: np.ndarray, P, grid: Grid3, slack: Optional[float] = None) -> SubSuperReport:
    """Classify ``u`` by the sign of ``-Delta u - e^{-2u}|P|^2`` on the interior.

    The tolerance is ``1e-8 + slack``; ``slack`` defaults to ``h_max^2``.
    """
    h_max = max(grid.spacings)
    slack = h_max**2 if slack is None else slack
    tol = 1e-8 + slack
    res = -model_residual(grid, u, P)
    r = res[INTERIOR]
    if np.all(np.abs(r) <= tol):
        kind = "solution"
    elif np.all(r <= tol):
        kind = "sub"
    elif np.all(r >= -tol):
        kind = "super"
    else:
        kind = "neither"
    return SubSuperReport(res, kind, tol)


@dataclass
class ModelProblem:
    """Dirichlet problem for the model equation.

    ``bc`` is a full-grid field whose face values are the boundary data.
    ``C_relax`` is a scalar or a full-grid field; by default it is
    ``2 e^{-2 u_seed}|P|^2 + 1`` evaluated at the seed.
    """

    P: CPoly
    grid: Grid3
    bc: np.ndarray
    C_relax: Optional[object] = None
    outer_tol: float = 1e-10
    inner_tol: float = 1e-10
    residual_tol: float = 1e-9
    max_outer: int = 5000

    def __post_init__(self):
        self.P = as_poly(self.P)
        self.bc = np.broadcast_to(np.asarray(self.bc, dtype=float), self.grid.shape)


@dataclass
class IterationReport:
    sup_changes: list = field(default_factory=list)
    monotonicity_violations: int = 0
    final_residual: float = float("nan")
    iterations: int = 0
    inner_iterations: int = 0
    converged: bool = False

    def as_dict(self) -> dict:
        return {
            "sup_changes": list(self.sup_changes),
            "monotonicity_violations": self.monotonicity_violations,
            "final_residual": self.final_residual,
            "iterations": self.iterations,
            "inner_iterations": self.inner_iterations,
            "converged": self.converged,
        }


def solve_monotone(
    prob: ModelProblem,
    seed: np.ndarray,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
    check_seed: bool = True,
):
    """Monotone iteration from a sub-solution seed.

    The seed's face values are replaced by the boundary data, which keeps it
    a sub-solution whenever the data dominates it.  The loop stops once the
    sup-norm update is below ``outer_tol`` and the interior residual is below
    ``residual_tol``.

    Returns
    -------
    u : ndarray
    report : IterationReport

    Raises
    ------
    ValueError
        If the seed is not a discrete sub-solution.
    MonotonicityError
        If an update is negative beyond ``1e-10``.
    """
    grid = prob.grid
    bnd = grid.boundary_mask()
    u = np.where(bnd, prob.bc, np.asarray(seed, dtype=float))
    if check_seed:
        kind = check_sub_super(u, prob.P, grid, slack=0.0).classification
        if kind not in ("sub", "solution"):
            raise ValueError(f"seed is not a discrete sub-solution ({kind})")
    p2 = abs_p2(prob.P, grid)
    if prob.C_relax is None:
        C = 2.0 * np.exp(-2.0 * u) * p2 + 1.0
    else:
        C = np.broadcast_to(np.asarray(prob.C_relax, dtype=float), grid.shape)
    C_int = np.ascontiguousarray(C[INTERIOR])
    report = IterationReport()
    if callback is not None:
        callback(0, u)
    for it in range(1, prob.max_outer + 1):
        res = model_residual(grid, u, prob.P)[INTERIOR]
        rnorm = float(np.max(np.abs(res)))
        d, inner = solve_shifted(grid, res, C_int, rtol=prob.inner_tol)
        report.inner_iterations += inner
        dmin = float(d.min())
        if dmin < -1e-12:
            report.monotonicity_violations += int(np.count_nonzero(d < -1e-12))
            if dmin < -1e-10:
                report.iterations = it
                raise MonotonicityError(f"update decreased the iterate by {-dmin:.3e}")
        u = u.copy()
        u[INTERIOR] += d
        change = float(np.max(np.abs(d)))
        report.sup_changes.append(change)
        report.iterations = it
        if callback is not None:
            callback(it, u)
        if change < prob.outer_tol and rnorm <= prob.residual_tol:
            report.converged = True
            break
    report.final_residual = float(np.max(np.abs(model_residual(grid, u, prob.P)[INTERIOR])))
    return u, report


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class ComparisonReport:
    y: np.ndarray
    profile: np.ndarray
    min_second_difference: float
    max_value: float


def comparison_diagnostic(v: np.ndarray, grid: Grid3) -> ComparisonReport:
    """Slice maxima ``f(y) = max_{x1, x2} v`` and their discrete convexity."""
    f = np.max(v, axis=(0, 1))
    d2 = (f[2:] - 2 * f[1:-1] + f[:-2]) / grid.hy**2
    return ComparisonReport(grid.y, f, float(d2.min()), float(f.max()))


@dataclass
class AsymptoticsReport:
    decay_rate: float
    decay_constant: float
    top_deviation: float
    bottom_bound: float
    bottom_exponent: float


def asymptotics_fit(u: np.ndarray, P, grid: Grid3) -> AsymptoticsReport:
    """Least-squares fits of the two boundary behaviours.

    Top third of the grid: ``g(y) = max_x |dy u - 1|`` is fitted to
    ``K e^{-k y}`` (rate ``k``, constant ``K``; ``inf`` rate when ``g = 0``).
    Bottom third: ``B(y) = max_x y e^{-u}|P|`` is reported by its sup and the
    slope of ``ln B`` against ``ln y``.
    """
    if grid.y_max < 4.0:
        raise ValueError("asymptotic fits need y_max >= 4")
    y = grid.y
    du = dy(grid, u)
    g = np.max(np.abs(du[1:-1, 1:-1, :] - 1.0), axis=(0, 1))
    top = slice(2 * grid.ny // 3, grid.ny - 1)
    gt, yt = g[top], y[top]
    top_dev = float(gt.max())
    if np.all(gt == 0):
        rate, const = float("inf"), 0.0
    else:
        keep = gt > 0
        slope, icpt = np.polyfit(yt[keep], np.log(gt[keep]), 1)
        rate, const = float(-slope), float(np.exp(icpt))
    B = np.max(y[None, None, :] * np.exp(-u) * np.sqrt(abs_p2(P, grid)), axis=(0, 1))
    bot = slice(0, max(grid.ny // 3, 2))
    expo = float(np.polyfit(np.log(y[bot]), np.log(B[bot]), 1)[0])
    return AsymptoticsReport(rate, const, top_dev, float(B[bot].max()), expo)


def solve_model(P, grid: Grid3, mode: str = "knotless", C: float = 2.0, **tols):
    """Convenience driver: boundary data, seed and monotone solve.

    ``mode="knotless"`` uses the Perron sub seed; ``mode="knotted"`` uses the
    regularized data with the harmonic seed.
    """
    if mode == "knotless":
        bc = boundary_data(P, grid)
        seed = sub_super_seeds(P, grid, C=C).sub
    elif mode == "knotted":
        bc = boundary_data(P, grid, regularize=True)
        seed = harmonic_seed(grid, bc)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    prob = ModelProblem(as_poly(P), grid, bc, **tols)
    return solve_monotone(prob, seed)
