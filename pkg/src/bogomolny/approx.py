"""Approximate solutions glued from a far frame and a near frame.

A triple ``(P, Q, R)`` of polynomials fixes the holomorphic data.  Far from
the roots of ``Q`` (and away from the bottom face) the metric is
``h = e^{u3}``, ``w = (1 - chi(|z|/y)) R/Q`` with ``u3`` the model solution
for ``P`` and ``chi`` the cutoff equal to 1 below 1 and 0 above 2.  Near the
bottom face over the roots of ``Q`` the metric comes from the diagonal
metric ``diag(e^{u3'}, e^{-u3'})`` with ``u3'`` the model solution for
``P Q^2``, transported by the holomorphic gauge ``[[Q, T], [-R, S]]`` where
``QS + TR = 1``.  The two are blended with a product cutoff in ``|z|`` and
``y``.

The scalar fields ``u3`` and ``u3'`` are inputs; nothing here solves a PDE
except :func:`correction_step`, which performs one linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import algebra as alg
from .configuration import (
    Configuration,
    MetricPair,
    assemble_laplacian_config,
    deform,
    frame_matrix,
    operator_residual,
    psi_from_metric,
    residual_first,
    residual_special2,
    solve_linearized,
    LINEARIZATION_CONSTANT,
)
from .geometry import Coordinates, Cutoff, Grid3, dbar, dy, dz, laplacian
from .model_solver import abs_p2, knots_in_box, lifted_laplacian, solve_model
from .poly import CPoly, as_poly, bezout

ANNULUS = Cutoff(1.0, 2.0)


class GlueError(ValueError):
    """Raised when the far and near descriptions cannot be combined."""


@dataclass(frozen=True, eq=False)
class TriplePQR:
    """Holomorphic data ``(P, Q, R)``: ``P, Q`` monic, ``deg R < deg Q``, coprime.

    The Bezout pair ``(S, T)`` with ``QS + TR = 1`` is computed on creation.
    """

    P: CPoly
    Q: CPoly
    R: CPoly
    S: CPoly = field(init=False)
    T: CPoly = field(init=False)

    def __post_init__(self):
        P, Q, R = (as_poly(x) for x in (self.P, self.Q, self.R))
        for name, p in (("P", P), ("Q", Q)):
            if p.is_zero or not p.is_monic():
                raise ValueError(f"{name} must be monic")
        if R.is_zero:
            if Q.degree != 0:
                raise ValueError("R = 0 is only coprime to Q = 1")
            S, T = CPoly([1]), CPoly([0])
        else:
            S, T = bezout(Q, R)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "T", T)

    def near_phi(self):
        """``(A, B, P')`` of ``u^{-1} phi u = [[A, B], [P', -A]]``."""
        P, Q, T = self.P, self.Q, self.T
        return -(P * Q * T), -(P * T * T), P * Q * Q

    def bezout_error(self, z) -> float:
        z = np.asarray(z, dtype=complex)
        return float(np.max(np.abs(self.Q(z) * self.S(z) + self.T(z) * self.R(z) - 1.0)))


def default_rho_far(triple: TriplePQR) -> float:
    roots = triple.Q.roots()
    return max(4.0, 2.0 * float(np.max(np.abs(roots)))) if roots.size else 4.0


def default_z_cut(triple: TriplePQR) -> Cutoff:
    roots = triple.Q.roots()
    a = max(1.0, 2.0 * float(np.max(np.abs(roots)))) if roots.size else 1.0
    return Cutoff(a, 2.0 * a)


# ---------------------------------------------------------------------------
# far frame


@dataclass(frozen=True, eq=False)
class FarMetric:
    """Far-frame fields with exact derivatives of ``w``.

    ``dbar_w``, ``dy_w`` and ``lap_w`` are computed from the cutoff profile
    and the rational function, so they vanish bit-exactly wherever the
    cutoff is locally constant.
    """

    grid: Grid3
    u: np.ndarray
    w: np.ndarray
    dbar_w: np.ndarray
    dy_w: np.ndarray
    lap_w: np.ndarray
    annulus: np.ndarray
    far: np.ndarray
    rho: np.ndarray
    rho_far: float

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.u)


def build_far(u3: np.ndarray, triple: TriplePQR, grid: Grid3, rho_far: Optional[float] = None) -> FarMetric:
    """Far-frame metric ``h = e^{u3}``, ``w = (1 - chi(|z|/y)) R/Q``.

    Raises
    ------
    GlueError
        If a root of ``Q`` lies under the far region where the cutoff does
        not vanish.
    """
    rho_far = default_rho_far(triple) if rho_far is None else float(rho_far)
    X1, X2, Y = grid.mesh()
    Z = np.broadcast_to(X1 + 1j * X2, grid.shape)
    Yf = np.broadcast_to(Y, grid.shape)
    az = np.abs(Z)
    roots = triple.Q.roots()
    if roots.size and np.any(np.abs(roots) > rho_far / np.sqrt(2.0)):
        raise GlueError("a root of Q lies under the far region where w is nonzero")
    t = az / Yf
    m = 1.0 - ANNULUS.eval(t)
    m1 = -ANNULUS.eval(t, 1)
    m2 = -ANNULUS.eval(t, 2)
    Qz = triple.Q(Z)
    safe = np.abs(Qz) > 0
    Qs = np.where(safe, Qz, 1.0)
    Rz = triple.R(Z)
    q = np.where(safe, Rz / Qs, 0.0)
    qp = np.where(safe, (triple.R.deriv()(Z) * Qs - Rz * triple.Q.deriv()(Z)) / Qs**2, 0.0)
    live = m != 0.0
    w = np.where(live, m * q, 0.0)
    band = m1 != 0.0
    zs = np.where(band, az, 1.0)
    # derivatives of t = |z|/y
    dbar_t = np.where(band, Z / (2.0 * zs * Yf), 0.0)
    dy_t = -az / Yf**2
    grad2 = 1.0 / Yf**2 + az**2 / Yf**4
    lap_t = np.where(band, 1.0 / (zs * Yf) + 2.0 * az / Yf**3, 0.0)
    dbar_m = np.where(band, m1 * dbar_t, 0.0)
    dbar_w = np.where(band, dbar_m * q, 0.0)
    dy_w = np.where(band, m1 * dy_t * q, 0.0)
    lap_m = np.where(band | (m2 != 0.0), m2 * grad2 + m1 * lap_t, 0.0)
    lap_w = np.where(band, lap_m * q + 4.0 * qp * dbar_m, 0.0)
    coords = Coordinates.build(grid)
    far = coords.rho >= rho_far
    if np.any(far & live & ~safe):
        raise GlueError("Q vanishes at a far-region node")
    annulus = (t > ANNULUS.a) & (t < ANNULUS.b)
    return FarMetric(
        grid, np.asarray(u3, dtype=float), w, dbar_w, dy_w, lap_w, annulus, far, coords.rho, rho_far
    )


# ---------------------------------------------------------------------------
# near frame


@dataclass(frozen=True, eq=False)
class NearMetric:
    """Near-frame data: ``H2 = (u^{-1})^* diag(e^{u3'}, e^{-u3'}) u^{-1}``."""

    grid: Grid3
    triple: TriplePQR
    u3p: np.ndarray
    H2: np.ndarray
    u: np.ndarray
    w: np.ndarray
    det_error: float

    def configuration(self) -> Configuration:
        """Configuration of the diagonal metric in the near frame."""
        A, B, Pn = self.triple.near_phi()
        return psi_from_metric(MetricPair.from_log(self.grid, self.u3p, 0.0, A, B, Pn))

    def frame_residual(self, lap_u=None):
        """``(E, F)`` of the near frame in closed form."""
        A, B, Pn = self.triple.near_phi()
        if lap_u is None:
            lap_u = lifted_laplacian(self.grid, self.u3p)
        return residual_special2(self.grid, self.u3p, A, B, Pn, lap_u=lap_u)


def near_matrix(triple: TriplePQR, Z: np.ndarray, u3p: np.ndarray) -> np.ndarray:
    """The matrix ``H2`` at points ``Z`` for the near-frame potential ``u3p``."""
    S, T, Q, R = triple.S(Z), triple.T(Z), triple.Q(Z), triple.R(Z)
    a = np.exp(u3p)
    ia = np.exp(-u3p)
    out = np.empty(np.shape(u3p) + (2, 2), dtype=complex)
    out[..., 0, 0] = np.abs(S) ** 2 * a + np.abs(R) ** 2 * ia
    out[..., 0, 1] = -T * np.conj(S) * a + np.conj(R) * Q * ia
    out[..., 1, 0] = -np.conj(T) * S * a + R * np.conj(Q) * ia
    out[..., 1, 1] = np.abs(T) ** 2 * a + np.abs(Q) ** 2 * ia
    return out


def build_near(triple: TriplePQR, grid: Grid3, u3p: np.ndarray) -> NearMetric:
    """Near-frame metric written in far-frame variables ``(u, w)``.

    ``u = -ln H2[1, 1]`` and ``w = H2[1, 0] / H2[1, 1]``.
    """
    u3p = np.asarray(u3p, dtype=float)
    Z = grid.z()
    H2 = near_matrix(triple, np.broadcast_to(Z, grid.shape), u3p)
    det_error = float(np.max(np.abs(alg.det2(H2) - 1.0)))
    H22 = np.real(H2[..., 1, 1])
    return NearMetric(grid, triple, u3p, H2, -np.log(H22), H2[..., 1, 0] / H22, det_error)


# ---------------------------------------------------------------------------
# gluing


@dataclass(frozen=True)
class BlendReport:
    """Discrepancy between the two descriptions on the blend band."""

    nodes: int
    sup_u: float
    sup_w: float
    y_levels: tuple
    sup_u_by_y: tuple
    y_slope: float


@dataclass(frozen=True, eq=False)
class GluedMetric:
    """Glued far-frame fields ``(u, w)`` with ``h = e^u``.

    ``weight`` is the near-frame weight: 1 on the near mask, 0 on the far
    side, strictly between on the blend band.
    """

    grid: Grid3
    triple: TriplePQR
    far_metric: FarMetric
    near_metric: NearMetric
    u: np.ndarray
    w: np.ndarray
    weight: np.ndarray
    z_cut: Cutoff
    y_cut: Cutoff
    report: BlendReport

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.u)

    @property
    def S(self) -> CPoly:
        return self.triple.S

    @property
    def T(self) -> CPoly:
        return self.triple.T

    @property
    def near(self) -> np.ndarray:
        return self.weight == 1.0

    @property
    def blend(self) -> np.ndarray:
        return (self.weight > 0.0) & (self.weight < 1.0)

    @property
    def far(self) -> np.ndarray:
        return self.far_metric.far

    def metric_pair(self) -> MetricPair:
        return MetricPair.from_log(self.grid, self.u, self.w, 0, 0, self.triple.P)


def _blend_report(grid: Grid3, band: np.ndarray, du: np.ndarray, dw: np.ndarray, y_max: float) -> BlendReport:
    y = grid.y
    levels, sups = [], []
    for k in range(grid.ny):
        if y[k] > y_max:
            break
        sel = band[:, :, k]
        if np.any(sel):
            levels.append(float(y[k]))
            sups.append(float(np.max(du[:, :, k][sel])))
    keep = [i for i, v in enumerate(sups) if v > 0]
    if len(keep) >= 2:
        slope = float(np.polyfit(np.log([levels[i] for i in keep]), np.log([sups[i] for i in keep]), 1)[0])
    else:
        slope = float("nan")
    return BlendReport(
        int(np.count_nonzero(band)),
        float(du[band].max()) if np.any(band) else 0.0,
        float(dw[band].max()) if np.any(band) else 0.0,
        tuple(levels),
        tuple(sups),
        slope,
    )


def glue(
    far: FarMetric,
    near: NearMetric,
    z_cut: Optional[Cutoff] = None,
    y_near: float = 0.5,
) -> GluedMetric:
    """Blend the two descriptions with the weight ``chi_z(|z|) chi_y(y)``.

    ``chi_z`` defaults to a cutoff from ``max(1, 2 max|root Q|)`` to twice
    that; ``chi_y`` runs from ``y_near`` to ``2 y_near``.  Outside the blend
    band the output equals the corresponding input bit for bit.

    Raises
    ------
    GlueError
        If the blend band holds no grid node, or if the far description is
        singular where it is used.
    """
    grid = far.grid
    triple = near.triple
    z_cut = default_z_cut(triple) if z_cut is None else z_cut
    y_cut = Cutoff(y_near, 2.0 * y_near)
    X1, X2, Y = grid.mesh()
    az = np.abs(X1 + 1j * X2)
    weight = np.broadcast_to(z_cut(az) * y_cut(Y), grid.shape)
    band = (weight > 0.0) & (weight < 1.0)
    if not np.any(band):
        raise GlueError("the blend band contains no grid node")
    used_far = weight < 1.0
    if not (np.all(np.isfinite(far.w[used_far])) and np.all(np.isfinite(far.u[used_far]))):
        raise GlueError("far description is singular where it is used")
    u = np.where(weight == 0.0, far.u, np.where(weight == 1.0, near.u, (1 - weight) * far.u + weight * near.u))
    w = np.where(weight == 0.0, far.w, np.where(weight == 1.0, near.w, (1 - weight) * far.w + weight * near.w))
    # discrepancy along the z band at small y, where both descriptions are meant to agree
    zband = (z_cut(az) > 0) & (z_cut(az) < 1) & np.ones(grid.shape, dtype=bool)
    du = np.abs(near.u - far.u)
    dw = np.abs(near.w - far.w)
    report = _blend_report(grid, zband, du, dw, y_near)
    return GluedMetric(grid, triple, far, near, u, w, weight, z_cut, y_cut, report)


def near_frame_pair(glued: GluedMetric) -> MetricPair:
    """The glued metric written in the holomorphic frame ``u = [[Q, T], [-R, S]]``.

    The metric becomes ``u^* H u`` and the Higgs field ``u^{-1} phi u``.  On
    the near mask the metric is ``diag(e^{u3'}, e^{-u3'})`` and is set so
    exactly.
    """
    grid = glued.grid
    tr = glued.triple
    Z = np.broadcast_to(grid.z(), grid.shape)
    g = np.empty(grid.shape + (2, 2), dtype=complex)
    g[..., 0, 0] = tr.Q(Z)
    g[..., 0, 1] = tr.T(Z)
    g[..., 1, 0] = -tr.R(Z)
    g[..., 1, 1] = tr.S(Z)
    H = alg.dagger(g) @ alg.MetricMatrix(glued.h, glued.w).matrix() @ g
    H22 = np.real(H[..., 1, 1])
    near = glued.near
    h = np.where(near, np.exp(glued.near_metric.u3p), 1.0 / H22)
    w = np.where(near, 0.0, H[..., 1, 0] / H22)
    A, B, Pn = tr.near_phi()
    return MetricPair(grid, h, w, A, B, Pn)


def assemble(glued: GluedMetric, frame: str = "far") -> Configuration:
    """Configuration of the glued metric.

    ``frame="far"`` uses ``phi = [[0, 0], [P, 0]]`` with the glued ``(h, w)``.
    ``frame="near"`` uses the holomorphic frame of :func:`near_frame_pair`;
    the two results are unitarily gauge equivalent, and the near frame stays
    well resolved over the roots of ``Q`` where the far frame steepens.
    """
    if frame == "far":
        return psi_from_metric(glued.metric_pair())
    if frame == "near":
        return psi_from_metric(near_frame_pair(glued))
    raise ValueError(f"unknown frame {frame!r}")


# ---------------------------------------------------------------------------
# residual profile


@dataclass
class Approximation:
    """Glued metric, its configuration and the model solver reports."""

    glued: GluedMetric
    psi: Configuration
    reports: dict


def build_approximation(
    triple: TriplePQR,
    grid: Grid3,
    rho_far: Optional[float] = None,
    y_near: float = 0.5,
    frame: str = "far",
    **tols,
) -> Approximation:
    """Solve for ``u3`` and ``u3'``, glue, and assemble the configuration.

    Each model solve uses the knotted mode exactly when its polynomial has
    roots over the box.  ``tols`` are passed to the model solver.
    """
    reports = {}
    fields = []
    for name, poly in (("u3", triple.P), ("u3_near", triple.near_phi()[2])):
        mode = "knotted" if len(knots_in_box(poly, grid)) else "knotless"
        u, rep = solve_model(poly, grid, mode=mode, **tols)
        reports[name] = dict(rep.as_dict(), mode=mode)
        fields.append(u)
    far = build_far(fields[0], triple, grid, rho_far=rho_far)
    near = build_near(triple, grid, fields[1])
    glued = glue(far, near, y_near=y_near)
    return Approximation(glued, assemble(glued, frame=frame), reports)


def frame_residual(glued: GluedMetric):
    """Far-frame ``(E, F)`` of the glued metric.

    The Laplacian of ``u`` is the lifted discrete Laplacian used by the model
    solver.  Derivatives of ``w`` are exact wherever the far description is
    used unblended, and finite differences elsewhere.

    Returns
    -------
    E, F : ndarray
    E_w, F_w : ndarray
        The parts of ``E`` and ``F`` that involve ``w``.
    """
    grid = glued.grid
    fm = glued.far_metric
    u, w = glued.u, glued.w
    exact = glued.weight == 0.0
    dbw = np.where(exact, fm.dbar_w, dbar(grid, w))
    wy = np.where(exact, fm.dy_w, dy(grid, w))
    lw = np.where(exact, fm.lap_w, laplacian(grid, w))
    ey = np.exp(-u)
    E_w = ey**2 * (4.0 * np.abs(dbw) ** 2 + np.abs(wy) ** 2)
    F_w = ey * (lw - 2.0 * dy(grid, u) * wy - 8.0 * dbw * dz(grid, u))
    E0 = lifted_laplacian(grid, u) + ey**2 * abs_p2(glued.triple.P, grid)
    inner = (slice(1, -1),) * 3
    E = np.zeros(grid.shape)
    F = np.zeros(grid.shape, dtype=complex)
    E[inner] = (E0 + E_w)[inner]
    F[inner] = F_w[inner]
    Ew = np.zeros(grid.shape)
    Fw = np.zeros(grid.shape, dtype=complex)
    Ew[inner] = E_w[inner]
    Fw[inner] = F_w[inner]
    return E, F, Ew, Fw


@dataclass(frozen=True)
class ExpFit:
    slope: float
    intercept: float
    centers: tuple
    sups: tuple


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    constant: float


@dataclass(frozen=True)
class RegionReport:
    """Residual profile of a glued approximate solution.

    ``regions`` maps a region name to ``(nodes, frame sup, finite-difference
    sup)``; ``zero_sup`` is the largest frame residual over the regions where
    the residual should vanish; ``w_terms_outside_annulus`` is the largest
    ``w``-dependent term over unblended far-frame nodes off the annulus.
    """

    regions: dict
    zero_sup: float
    far_fit: ExpFit
    bottom_fit: PowerFit
    w_terms_outside_annulus: float
    psi_bound: float

    def as_dict(self) -> dict:
        return {
            "regions": {k: {"nodes": v[0], "frame_sup": v[1], "fd_sup": v[2]} for k, v in self.regions.items()},
            "zero_sup": self.zero_sup,
            "far_fit": {"slope": self.far_fit.slope, "intercept": self.far_fit.intercept},
            "bottom_fit": {"exponent": self.bottom_fit.exponent, "constant": self.bottom_fit.constant},
            "w_terms_outside_annulus": self.w_terms_outside_annulus,
            "psi_bound": self.psi_bound,
        }


def region_masks(glued: GluedMetric, collar: int = 1) -> dict:
    """Named boolean masks over the grid, restricted to the interior collar."""
    grid = glued.grid
    inside = grid.interior_mask(collar)
    X1, X2, Y = grid.mesh()
    t = np.broadcast_to(np.abs(X1 + 1j * X2) / Y, grid.shape)
    exact = ndimage.binary_erosion(glued.weight == 0.0, iterations=1, border_value=0)
    small_y = exact & (t >= ANNULUS.b)
    large_y = exact & (t <= ANNULUS.a)
    return {
        "far": glued.far & inside,
        "near": glued.near & inside,
        "blend": glued.blend & inside,
        "annulus": glued.far_metric.annulus & inside,
        "zero_small_y": small_y & inside,
        "zero_large_y": large_y & inside,
    }


def psi_bound_constant(glued: GluedMetric, psi: Optional[Configuration] = None, collar: int = 1) -> float:
    """Smallest ``C`` with ``|psi| <= C (1/y + 1)`` on interior nodes.

    ``|psi|`` is not gauge invariant.  On the near mask it is measured in the
    diagonal frame, which differs from the far-frame assembly by a unitary
    gauge; the far frame degenerates over the roots of ``Q``.
    """
    grid = glued.grid
    psi = assemble(glued) if psi is None else psi
    Y = np.broadcast_to(grid.Y(), grid.shape)
    norm = np.where(glued.near, glued.near_metric.configuration().pointwise_norm(), psi.pointwise_norm())
    ratio = norm / (1.0 / Y + 1.0)
    return float(ratio[grid.interior_mask(collar)].max())


def _far_fit(rho: np.ndarray, vn: np.ndarray, mask: np.ndarray, width: float) -> ExpFit:
    r = rho[mask]
    v = vn[mask]
    if r.size == 0:
        return ExpFit(float("nan"), float("nan"), (), ())
    edges = np.arange(r.min(), r.max() + width, width)
    centers, sups = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (r >= lo) & (r < hi)
        if np.any(sel) and v[sel].max() > 0:
            centers.append(0.5 * (lo + hi))
            sups.append(float(v[sel].max()))
    if len(centers) < 2:
        return ExpFit(float("nan"), float("nan"), tuple(centers), tuple(sups))
    slope, icpt = np.polyfit(centers, np.log(sups), 1)
    return ExpFit(float(slope), float(icpt), tuple(centers), tuple(sups))


def residual_profile(glued: GluedMetric, psi: Optional[Configuration] = None, collar: int = 1) -> RegionReport:
    """Per-region residual sizes and decay fits.

    The residual is evaluated in closed form: in the diagonal frame on the
    near mask and in the far frame elsewhere, with the model solver's
    discrete Laplacian in both.  Finite-difference sizes of
    ``residual_first`` are reported alongside.

    The far fit is an exponential fit in ``rho`` of the binned sup over far
    nodes on the annulus, the only place where it does not vanish.  The
    bottom fit is a power fit in ``y`` of the sup over near nodes at each
    level; its constant is ``max y |V|``.
    """
    grid = glued.grid
    psi = assemble(glued) if psi is None else psi
    E, F, Ew, Fw = frame_residual(glued)
    En, Fn = glued.near_metric.frame_residual()
    # |V| is gauge invariant, so the near mask uses the diagonal frame
    vn = np.where(glued.near, alg.norm(frame_matrix(En, Fn)), alg.norm(frame_matrix(E, F)))
    fd = alg.norm(residual_first(psi).V)
    masks = region_masks(glued, collar)
    regions = {}
    for name, m in masks.items():
        n = int(np.count_nonzero(m))
        regions[name] = (n, float(vn[m].max()) if n else 0.0, float(fd[m].max()) if n else 0.0)
    zmask = masks["zero_small_y"] | masks["zero_large_y"]
    zero_sup = float(vn[zmask].max()) if np.any(zmask) else 0.0
    far_mask = masks["far"] & masks["annulus"]
    far_fit = _far_fit(glued.far_metric.rho, vn, far_mask, 2.0 * max(grid.spacings))
    near = masks["near"]
    levels, sups = [], []
    for k in range(grid.ny):
        sel = near[:, :, k]
        if np.any(sel):
            levels.append(grid.y[k])
            sups.append(float(vn[:, :, k][sel].max()))
    keep = [i for i, s in enumerate(sups) if s > 0]
    if len(keep) >= 2:
        ly = np.log([levels[i] for i in keep])
        expo = float(np.polyfit(ly, np.log([sups[i] for i in keep]), 1)[0])
        const = float(max(levels[i] * sups[i] for i in keep))
    else:
        expo, const = float("nan"), float("nan")
    exact_off = (glued.weight == 0.0) & ~glued.far_metric.annulus & grid.interior_mask(1)
    wt = np.maximum(np.abs(Ew), np.abs(Fw))
    w_terms = float(wt[exact_off].max()) if np.any(exact_off) else 0.0
    return RegionReport(
        regions, zero_sup, far_fit, PowerFit(expo, const), w_terms, psi_bound_constant(glued, psi, collar)
    )


# ---------------------------------------------------------------------------
# one linear correction


@dataclass(frozen=True)
class CorrectionReport:
    before: float
    after: float
    iterations: int

    @property
    def ratio(self) -> float:
        return self.after / self.before if self.before > 0 else 0.0


def correction_step(
    psi: Configuration,
    mask,
    c: float = LINEARIZATION_CONSTANT,
    collar: int = 1,
    rtol: float = 1e-10,
):
    """One linearized correction ``c (-Delta_psi) s = -mask V(psi)``.

    ``V`` is the Hermitian operator residual.  The reported sizes are sup
    norms of ``V`` over nodes where ``mask == 1`` (away from the collar),
    before and after applying ``e^s``.

    Returns
    -------
    s : ndarray
    psi_new : Configuration
    report : CorrectionReport
    """
    grid = psi.grid
    mask = np.broadcast_to(np.asarray(mask, dtype=float), grid.shape)
    V = operator_residual(psi)
    core = (mask == 1.0) & grid.interior_mask(collar)
    before = float(alg.norm(V)[core].max()) if np.any(core) else 0.0
    rhs = -mask[..., None, None] * V
    s, its = solve_linearized(psi, rhs, c=c, rtol=rtol, matrix=assemble_laplacian_config(psi))
    if not np.any(s):
        return s, psi, CorrectionReport(before, before, its)
    new = deform(psi, s)
    Vn = operator_residual(new)
    after = float(alg.norm(Vn)[core].max()) if np.any(core) else 0.0
    return s, new, CorrectionReport(before, after, its)
