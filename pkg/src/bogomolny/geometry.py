"""Truncated half-space grid, stencils, cut-offs, coordinates and field I/O.

Fields are numpy arrays whose first three axes are ``(x1, x2, y)``; any
trailing axes (for example a ``(2, 2)`` matrix per node) are carried along.
First derivatives are centered, with a cubic ghost node on the faces.  The Laplacian is the 7-point stencil and is only
defined on interior nodes; its boundary layer is returned as zeros.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"EBEF"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Grid3:
    """Uniform grid on ``[-L, L]^2 x [y_min, y_max]``.

    Examples
    --------
    >>> g = Grid3(L=2.0, y_min=0.05, y_max=6.0, n1=9, n2=9, ny=17)
    >>> float(g.h1)
    0.5
    """

    L: float
    y_min: float
    y_max: float
    n1: int
    n2: int
    ny: int

    def __post_init__(self):
        if not self.y_min > 0:
            raise ValueError("y_min must be positive")
        if not self.y_max > self.y_min:
            raise ValueError("y_max must exceed y_min")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if min(self.n1, self.n2, self.ny) < 8:
            raise ValueError("each node count must be at least 8")

    @property
    def shape(self) -> tuple:
        return (self.n1, self.n2, self.ny)

    @property
    def h1(self) -> float:
        return 2.0 * self.L / (self.n1 - 1)

    @property
    def h2(self) -> float:
        return 2.0 * self.L / (self.n2 - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def spacings(self) -> tuple:
        return (self.h1, self.h2, self.hy)

    @property
    def h_min(self) -> float:
        return min(self.spacings)

    @property
    def x1(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n1)

    @property
    def x2(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n2)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    def mesh(self):
        """Broadcastable coordinate arrays ``(X1, X2, Y)``."""
        return (
            self.x1[:, None, None],
            self.x2[None, :, None],
            self.y[None, None, :],
        )

    def full(self, fill: float = 0.0) -> np.ndarray:
        return np.full(self.shape, fill)

    def z(self) -> np.ndarray:
        """Complex coordinate ``x1 + i x2`` broadcast to the full grid."""
        X1, X2, _ = self.mesh()
        return np.broadcast_to(X1 + 1j * X2, self.shape)

    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.mesh()[2], self.shape)

    def refine(self) -> "Grid3":
        """Grid with every spacing halved."""
        return Grid3(self.L, self.y_min, self.y_max, 2 * self.n1 - 1, 2 * self.n2 - 1, 2 * self.ny - 1)

    def extents(self) -> tuple:
        return (self.L, self.L, self.y_min, self.y_max, 0.0)

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0], m[-1] = True, True
        m[:, 0], m[:, -1] = True, True
        m[:, :, 0], m[:, :, -1] = True, True
        return m

    def interior_mask(self, collar: int = 1) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        c = collar
        m[c:-c, c:-c, c:-c] = True
        return m


INTERIOR = (slice(1, -1), slice(1, -1), slice(1, -1))


def diff(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """First derivative along ``axis``.

    Centered differences everywhere.  On the two faces the missing neighbour
    is a cubic extrapolation from the four nearest nodes, so the truncation
    error is the same smooth field as inside.  Nested differences
    (derivatives of computed derivatives) then stay second-order accurate
    next to the boundary.
    """
    f = np.moveaxis(np.asarray(f), axis, 0)
    if f.shape[0] < 4:
        raise ValueError("need at least four nodes along the axis")
    out = np.empty(f.shape, dtype=np.result_type(f, float))
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-4.0 * f[0] + 7.0 * f[1] - 4.0 * f[2] + f[3]) / (2.0 * h)
    out[-1] = (4.0 * f[-1] - 7.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def d1(grid: Grid3, f: np.ndarray) -> np.ndarray:
    return diff(f, grid.h1, 0)


def d2(grid: Grid3, f: np.ndarray) -> np.ndarray:
    return diff(f, grid.h2, 1)


def dy(grid: Grid3, f: np.ndarray) -> np.ndarray:
    return diff(f, grid.hy, 2)


def dz(grid: Grid3, f: np.ndarray) -> np.ndarray:
    """``d = (d1 - i d2)/2``."""
    return 0.5 * (d1(grid, f) - 1j * d2(grid, f))


def dbar(grid: Grid3, f: np.ndarray) -> np.ndarray:
    """``dbar = (d1 + i d2)/2``."""
    return 0.5 * (d1(grid, f) + 1j * d2(grid, f))


def laplacian(grid: Grid3, f: np.ndarray) -> np.ndarray:
    """7-point Laplacian on interior nodes, zero on the boundary layer.

    Raises
    ------
    ValueError
        If the field has fewer than three nodes along an axis.
    """
    if min(f.shape[:3]) < 3:
        raise ValueError("grid too small for the 7-point stencil")
    out = np.zeros_like(f)
    c = f[1:-1, 1:-1, 1:-1]
    out[1:-1, 1:-1, 1:-1] = (
        (f[2:, 1:-1, 1:-1] - 2 * c + f[:-2, 1:-1, 1:-1]) / grid.h1**2
        + (f[1:-1, 2:, 1:-1] - 2 * c + f[1:-1, :-2, 1:-1]) / grid.h2**2
        + (f[1:-1, 1:-1, 2:] - 2 * c + f[1:-1, 1:-1, :-2]) / grid.hy**2
    )
    return out


def interior_sup(f: np.ndarray, collar: int = 1) -> float:
    """Sup norm over nodes at least ``collar`` away from every face."""
    c = collar
    sub = f[c:-c, c:-c, c:-c]
    if sub.ndim > 3:
        sub = np.sqrt(np.sum(np.abs(sub.reshape(sub.shape[:3] + (-1,))) ** 2, axis=-1))
    return float(np.max(np.abs(sub), initial=0.0))


# ---------------------------------------------------------------------------
# cut-offs and coordinates


def smoothstep(tau):
    """Quintic ramp from 0 to 1 with vanishing first and second derivatives at the ends."""
    tau = np.clip(tau, 0.0, 1.0)
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)


@dataclass(frozen=True)
class Cutoff:
    """Equal to 1 for ``t <= a``, 0 for ``t >= b``, quintic in between."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("cutoff needs a < b")

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t, order: int = 0):
        """Value or derivative of the profile.

        Outside ``(a, b)`` the value is exactly 0 or 1 and every derivative is
        exactly 0.
        """
        t = np.asarray(t, dtype=float)
        width = self.b - self.a
        tau = (t - self.a) / width
        inside = (tau > 0.0) & (tau < 1.0)
        tc = np.clip(tau, 0.0, 1.0)
        if order == 0:
            out = 1.0 - smoothstep(tc)
            out = np.where(tau <= 0.0, 1.0, np.where(tau >= 1.0, 0.0, out))
        elif order == 1:
            out = np.where(inside, -30.0 * tc**2 * (1.0 - tc) ** 2 / width, 0.0)
        elif order == 2:
            out = np.where(inside, -60.0 * tc * (1.0 - tc) * (1.0 - 2.0 * tc) / width**2, 0.0)
        else:
            raise ValueError("only derivatives up to order 2 are available")
        return out if out.ndim else float(out)


RHO_CUT = Cutoff(1.0, 2.0)
R_CUT = Cutoff(0.5, 1.0)
PSI_CUT = Cutoff(0.5, 1.0)


def _blend_to_one(t: np.ndarray, cut: Cutoff) -> np.ndarray:
    """``t`` where ``t <= cut.a``, 1 where ``t >= cut.b``, smooth in between."""
    chi = cut(t)
    return chi * t + (1.0 - chi)


@dataclass(frozen=True)
class Coordinates:
    """Compactification coordinates sampled on a grid.

    ``rho`` equals 1 near the origin and the radius ``R`` far out; ``r`` is
    the distance to the nearest knot, capped smoothly at 1; ``psi`` is
    ``y/(r rho)`` capped smoothly at 1.
    """

    R: np.ndarray
    rho: np.ndarray
    r: np.ndarray
    psi: np.ndarray
    y: np.ndarray
    knots: tuple = field(default=())

    @classmethod
    def build(cls, grid: Grid3, knots: Sequence[complex] = ()) -> "Coordinates":
        X1, X2, Y = grid.mesh()
        Z = X1 + 1j * X2
        R = np.broadcast_to(np.sqrt(np.abs(Z) ** 2 + Y**2), grid.shape)
        # rho = R for R >= 2 and 1 for R <= 1
        chi = RHO_CUT(R)
        rho = chi + (1.0 - chi) * R
        if len(knots):
            d = np.min(
                np.stack([np.sqrt(np.abs(Z - z0) ** 2 + Y**2) for z0 in knots]), axis=0
            )
            r = _blend_to_one(np.broadcast_to(d, grid.shape), R_CUT)
        else:
            r = np.ones(grid.shape)
        Yf = np.broadcast_to(Y, grid.shape)
        psi = _blend_to_one(Yf / (r * rho), PSI_CUT)
        return cls(R=R, rho=rho, r=r, psi=psi, y=Yf, knots=tuple(complex(k) for k in knots))


@dataclass(frozen=True)
class WeightedNormSpec:
    mu: float = 0.0
    v: float = 0.0
    delta: float = 0.0


def pointwise_norm(f: np.ndarray, spatial_ndim: int = 3) -> np.ndarray:
    """Absolute value for scalar fields, Frobenius norm for matrix fields."""
    f = np.asarray(f)
    if f.ndim == spatial_ndim:
        return np.abs(f)
    flat = f.reshape(f.shape[:spatial_ndim] + (-1,))
    return np.sqrt(np.sum(np.abs(flat) ** 2, axis=-1))


def weighted_sup_norm(f: np.ndarray, coords: Coordinates, spec: WeightedNormSpec, mask=None) -> float:
    """``max psi^-mu r^-v rho^-delta |f|`` over the nodes selected by ``mask``."""
    weight = coords.psi ** (-spec.mu) * coords.r ** (-spec.v) * coords.rho ** (-spec.delta)
    vals = weight * pointwise_norm(f)
    if mask is not None:
        vals = vals[mask]
    return float(np.max(vals, initial=0.0))


# ---------------------------------------------------------------------------
# I/O


def _as_components(grid: Grid3, data: np.ndarray) -> np.ndarray:
    data = np.asarray(data)
    if data.shape[:3] != grid.shape:
        raise ValueError("field does not match the grid")
    flat = data.reshape(grid.shape + (-1,))
    if np.iscomplexobj(flat):
        flat = np.ascontiguousarray(flat).view(np.float64)
    return np.asarray(flat, dtype=np.float64)


def write_field(path, grid: Grid3, data: np.ndarray) -> None:
    """Write a field dump.

    Layout: magic ``EBEF``, version, ``n1 n2 ny`` (u32), five f64 extents
    ``(L, L, y_min, y_max, 0)``, component count (u32), then the f64 data with
    ``y`` slowest, then ``x2``, then ``x1``, then the component index.
    Complex values are stored as consecutive real and imaginary parts.
    """
    comps = _as_components(grid, data)
    ordered = np.ascontiguousarray(np.transpose(comps, (2, 1, 0, 3)), dtype="<f8")
    header = MAGIC + struct.pack(
        "<4I5dI", FORMAT_VERSION, grid.n1, grid.n2, grid.ny, *grid.extents(), comps.shape[-1]
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ordered.tobytes())


def read_field(path):
    """Read a field dump; returns ``(grid, data)`` with ``data`` of shape ``(n1, n2, ny, ncomp)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError("not a field dump")
    hsize = 4 + struct.calcsize("<4I5dI")
    version, n1, n2, ny, L, _, y0, y1, _, ncomp = struct.unpack("<4I5dI", raw[4:hsize])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    data = np.frombuffer(raw[hsize:], dtype="<f8").reshape(ny, n2, n1, ncomp)
    return Grid3(L, y0, y1, n1, n2, ny), np.transpose(data, (2, 1, 0, 3)).copy()


def fmt(x) -> str:
    """Full precision text for a number."""
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], columns: Sequence[Sequence]) -> None:
    """Write columns to CSV with 17 significant digits."""
    rows = zip(*columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating, int, np.integer)) else v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [float(obj.real), float(obj.imag)]
    return obj


def write_json(path, payload) -> None:
    """Write a JSON document with sorted keys (floats in shortest round-trip form)."""
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
