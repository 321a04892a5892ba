"""Command line runs: ``model``, ``approx``, ``continue`` and ``verify``.

Each command reads a flat ``key = value`` configuration file and writes its
artifacts into an output directory::

    bogomolny model --config run.cfg --out results/

Values are Python-style literals: numbers, quoted or bare strings, and
bracketed arrays such as ``P = [0, 0, 1]`` (the polynomial ``z**2``) or
``Q = [[0, 1], 1]`` (complex coefficients as ``[re, im]`` pairs).  Lines
starting with ``#`` are comments.

Exit status is 0 on success, 1 when the scenario fails (its report is still
written) and 2 for an invalid configuration, with a message naming the key.
"""

from __future__ import annotations

import argparse
import ast
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from . import algebra as alg
from .approx import GlueError, TriplePQR, build_approximation, residual_profile
from .configuration import (
    linearization_slope,
    psi_from_metric,
    residual_first,
    residual_full,
    residual_special1,
    residual_special2,
    smooth_configuration,
    smooth_hermitian,
    smooth_metric_pair,
    weitzenbock_gap,
)
from .continuation import init_state, run_schedule
from .geometry import Grid3, interior_sup, write_csv, write_field, write_json
from .model_solver import (
    asymptotics_fit,
    check_sub_super,
    comparison_diagnostic,
    knots_in_box,
    model_residual,
    solve_model,
)
from .poly import parse_poly

COMMANDS = ("model", "approx", "continue", "verify")
EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

VERIFY_CHECKS = (
    "gamma_series",
    "v_square",
    "hermitian_sum_commuting",
    "hermitian_sum_witness",
    "polar_roundtrip",
    "oracle_special1",
    "oracle_special2",
    "bullets",
    "weitzenbock",
    "linearization",
)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


# ---------------------------------------------------------------------------
# configuration files


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a dict of Python values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key.isidentifier():
            raise ConfigError(key, "invalid key name")
        if key in out:
            raise ConfigError(key, "duplicate key")
        try:
            out[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            out[key] = value.strip("'\"")
    return out


def _number(raw: dict, key: str, default=None, kind=float, positive: bool = False):
    if key not in raw:
        if default is None:
            raise ConfigError(key, "missing")
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, "expected a number")
    if kind is int and int(value) != value:
        raise ConfigError(key, "expected an integer")
    value = kind(value)
    if positive and not value > 0:
        raise ConfigError(key, "must be positive")
    return value


def _poly(raw: dict, key: str, default=None):
    if key not in raw:
        if default is None:
            raise ConfigError(key, "missing")
        return parse_poly(default)
    value = raw[key]
    if not isinstance(value, (list, tuple)):
        raise ConfigError(key, "expected a coefficient list")
    try:
        return parse_poly(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, str(exc)) from None


def _array(raw: dict, key: str, length: int, default=None) -> list:
    if key not in raw:
        if default is None:
            raise ConfigError(key, "missing")
        return list(default)
    value = raw[key]
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise ConfigError(key, f"expected an array of {length} numbers")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(key, "expected numbers")
    return [float(v) for v in value]


@dataclass
class RunConfig:
    """Validated run configuration.

    ``box`` is ``[L, y_min, y_max]`` for ``[-L, L]^2 x [y_min, y_max]`` and
    ``grid`` is ``[n1, n2, ny]``.
    """

    scenario: str
    P: object = None
    Q: object = None
    R: object = None
    box: Optional[list] = None
    grid: Optional[list] = None
    mode: str = "auto"
    outer_tol: float = 1e-10
    inner_tol: float = 1e-10
    residual_tol: float = 1e-9
    y_near: float = 0.5
    rho_far: Optional[float] = None
    corrections: int = 6
    t_final: float = 1e-3
    rel_tol: float = 1e-3
    max_newton: int = 12
    max_refinements: int = 8
    seed: int = 7
    checks: tuple = VERIFY_CHECKS
    verify_n: int = 17
    verify_instances: int = 3
    gamma_fault: float = 0.0
    raw: dict = field(default_factory=dict, repr=False)

    def build_grid(self) -> Grid3:
        L, y0, y1 = self.box
        n1, n2, ny = self.grid
        try:
            return Grid3(L, y0, y1, n1, n2, ny)
        except ValueError as exc:
            key = "box" if "y_" in str(exc) or "L" in str(exc) else "grid"
            raise ConfigError(key, str(exc)) from None

    def triple(self) -> TriplePQR:
        try:
            return TriplePQR(self.P, self.Q, self.R)
        except ValueError as exc:
            raise ConfigError("Q" if "Q" in str(exc) or "R" in str(exc) else "P", str(exc)) from None

    @property
    def tolerances(self) -> dict:
        return {"outer_tol": self.outer_tol, "inner_tol": self.inner_tol, "residual_tol": self.residual_tol}


def build_run_config(raw: dict, command: str) -> RunConfig:
    """Validate a parsed configuration for ``command``."""
    if command not in COMMANDS:
        raise ConfigError("scenario", f"unknown scenario {command!r}")
    scenario = raw.get("scenario", command)
    if scenario != command:
        raise ConfigError("scenario", f"config is for {scenario!r}, not {command!r}")
    known = set(RunConfig.__dataclass_fields__) - {"raw"}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown key")
    cfg = RunConfig(scenario=command, raw=dict(raw))
    cfg.seed = _number(raw, "seed", 7, int)
    for key in ("outer_tol", "inner_tol", "residual_tol"):
        setattr(cfg, key, _number(raw, key, getattr(cfg, key), positive=True))
    if command in ("model", "approx", "continue"):
        cfg.box = _array(raw, "box", 3)
        grid = _array(raw, "grid", 3)
        if any(int(n) != n or n < 3 for n in grid):
            raise ConfigError("grid", "entries must be integers >= 3")
        cfg.grid = [int(n) for n in grid]
        cfg.build_grid()
        cfg.P = _poly(raw, "P")
    if command == "model":
        cfg.mode = str(raw.get("mode", "auto"))
        if cfg.mode not in ("auto", "knotless", "knotted"):
            raise ConfigError("mode", "expected knotless, knotted or auto")
    if command in ("approx", "continue"):
        cfg.Q = _poly(raw, "Q")
        cfg.R = _poly(raw, "R")
        cfg.triple()
        cfg.y_near = _number(raw, "y_near", 0.5, positive=True)
        if "rho_far" in raw:
            cfg.rho_far = _number(raw, "rho_far", positive=True)
    if command == "continue":
        cfg.corrections = _number(raw, "corrections", 6, int)
        if cfg.corrections < 0:
            raise ConfigError("corrections", "must be nonnegative")
        cfg.t_final = _number(raw, "t_final", 1e-3, positive=True)
        if not cfg.t_final < 1:
            raise ConfigError("t_final", "must lie in (0, 1)")
        cfg.rel_tol = _number(raw, "rel_tol", 1e-3, positive=True)
        cfg.max_newton = _number(raw, "max_newton", 12, int, positive=True)
        cfg.max_refinements = _number(raw, "max_refinements", 8, int)
    if command == "verify":
        checks = raw.get("checks", list(VERIFY_CHECKS))
        if not isinstance(checks, (list, tuple)) or not all(isinstance(c, str) for c in checks):
            raise ConfigError("checks", "expected a list of check names")
        for c in checks:
            if c not in VERIFY_CHECKS:
                raise ConfigError("checks", f"unknown check {c!r}")
        cfg.checks = tuple(checks)
        cfg.verify_n = _number(raw, "verify_n", 17, int)
        if cfg.verify_n < 5:
            raise ConfigError("verify_n", "must be at least 5")
        cfg.verify_instances = _number(raw, "verify_instances", 3, int, positive=True)
        cfg.gamma_fault = _number(raw, "gamma_fault", 0.0)
    return cfg


def load_config(path, command: str) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return build_run_config(parse_config_text(text), command)


# ---------------------------------------------------------------------------
# scenarios


def run_model(cfg: RunConfig, out: Path) -> int:
    """Solve the model problem and write ``u``, its residual, profiles and a report."""
    grid = cfg.build_grid()
    mode = cfg.mode
    if mode == "auto":
        mode = "knotted" if len(knots_in_box(cfg.P, grid)) else "knotless"
    report = {"scenario": "model", "mode": mode, "grid": cfg.grid, "box": cfg.box}
    try:
        u, it = solve_model(cfg.P, grid, mode=mode, **cfg.tolerances)
    except (ValueError, RuntimeError) as exc:
        report.update(success=False, error=str(exc))
        write_json(out / "report.json", report)
        return EXIT_FAILURE
    res = model_residual(grid, u, cfg.P)
    write_field(out / "u.field", grid, u)
    write_field(out / "residual.field", grid, res)
    cmp = comparison_diagnostic(u - np.log(grid.Y()), grid)
    cols = [grid.y, cmp.profile]
    header = ["y", "max_x(u - ln y)"]
    if cfg.P.degree == 0 and abs(abs(cfg.P.coeffs[0]) - 1.0) < 1e-14:
        err = np.max(np.abs(u - np.log(np.sinh(grid.Y()))), axis=(0, 1))
        cols.append(err)
        header.append("max_x|u - ln sinh y|")
        report["exact_error"] = float(err.max())
    write_csv(out / "profile.csv", header, cols)
    report["iterations"] = it.as_dict()
    report["classification"] = check_sub_super(u, cfg.P, grid).classification
    try:
        fit = asymptotics_fit(u, cfg.P, grid)
        report["asymptotics"] = {
            "decay_rate": fit.decay_rate,
            "decay_constant": fit.decay_constant,
            "top_deviation": fit.top_deviation,
            "bottom_bound": fit.bottom_bound,
            "bottom_exponent": fit.bottom_exponent,
        }
    except ValueError as exc:
        report["asymptotics"] = {"skipped": str(exc)}
    report["success"] = bool(it.converged)
    write_json(out / "report.json", report)
    return EXIT_OK if it.converged else EXIT_FAILURE


def _approximation(cfg: RunConfig, frame: str):
    grid = cfg.build_grid()
    return build_approximation(cfg.triple(), grid, rho_far=cfg.rho_far, y_near=cfg.y_near, frame=frame,
                               **cfg.tolerances)


def run_approx(cfg: RunConfig, out: Path) -> int:
    """Build the glued approximate solution and profile its residual."""
    report = {"scenario": "approx", "grid": cfg.grid, "box": cfg.box}
    try:
        appr = _approximation(cfg, "far")
    except (GlueError, ValueError, RuntimeError) as exc:
        report.update(success=False, error=str(exc))
        write_json(out / "fits.json", report)
        return EXIT_FAILURE
    glued, grid = appr.glued, appr.glued.grid
    write_field(out / "metric.field", grid, np.stack([glued.u, glued.w.real, glued.w.imag], axis=-1))
    write_field(out / "psi.field", grid, appr.psi.to_array())
    prof = residual_profile(glued, appr.psi)
    names = sorted(prof.regions)
    write_csv(
        out / "regions.csv",
        ["region", "nodes", "frame_sup", "fd_sup"],
        [names, *zip(*(prof.regions[n] for n in names))],
    )
    b = glued.report
    report.update(
        success=True,
        profile=prof.as_dict(),
        blend={"nodes": b.nodes, "sup_u": b.sup_u, "sup_w": b.sup_w, "y_slope": b.y_slope},
        model=appr.reports,
        bezout_error=glued.triple.bezout_error(grid.z()),
    )
    write_json(out / "fits.json", report)
    return EXIT_OK


def run_continue(cfg: RunConfig, out: Path) -> int:
    """Follow ``V(psi0, s) + t s = 0`` from ``t = 1`` to ``t_final``."""
    from .approx import correction_step

    report = {"scenario": "continue", "grid": cfg.grid, "box": cfg.box}
    try:
        appr = _approximation(cfg, "near")
    except (GlueError, ValueError, RuntimeError) as exc:
        report.update(success=False, error=str(exc))
        write_json(out / "decay.json", report)
        return EXIT_FAILURE
    psi = appr.psi
    grid = psi.grid
    mask = grid.interior_mask(1).astype(float)
    corrections = []
    for _ in range(cfg.corrections):
        _, psi, rep = correction_step(psi, mask)
        corrections.append({"before": rep.before, "after": rep.after})
    state = init_state(psi, t_final=cfg.t_final)
    result = run_schedule(
        state,
        rel_tol=cfg.rel_tol,
        max_newton=cfg.max_newton,
        max_refinements=cfg.max_refinements,
    )
    hist = result.history
    write_csv(
        out / "history.csv",
        ["t", "residual", "steps", "alpha", "accepted"],
        [[h.t for h in hist], [h.residual for h in hist], [h.steps for h in hist],
         [h.alpha for h in hist], [int(h.accepted) for h in hist]],
    )
    write_field(out / "s.field", grid, result.s)
    write_field(out / "psi.field", grid, result.psi.to_array())
    report.update(
        success=bool(result.success),
        final_t=result.final_t,
        final_residual=result.final_residual,
        initial_residual=result.initial_residual,
        residual_ratio=result.final_residual / result.initial_residual if result.initial_residual else 0.0,
        identity_error=state.identity_error,
        corrections=corrections,
        decay=result.decay.as_dict(),
    )
    write_json(out / "decay.json", report)
    return EXIT_OK if result.success else EXIT_FAILURE


# ---------------------------------------------------------------------------
# verification suite


def _order(hs, errs) -> float:
    """Least-squares slope of ``ln err`` against ``ln h``."""
    errs = np.asarray(errs, dtype=float)
    if np.any(errs <= 0):
        return float("inf")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def _verdict(name: str, passed: bool, value, threshold, **detail) -> dict:
    return {"check": name, "passed": bool(passed), "value": value, "threshold": threshold, "detail": detail}


def _random_herm(rng, n: int, radius: float) -> np.ndarray:
    s = alg.vec_to_herm(rng.normal(size=(n, 3)))
    scale = radius * rng.uniform(0.0, 1.0, size=n) / np.maximum(alg.norm(s), 1e-300)
    return s * scale[:, None, None]


def verify_suite(cfg: RunConfig, gamma: Optional[Callable] = None) -> dict:
    """Run the selected checks; every outcome is a verdict, never an exception.

    ``gamma`` replaces the eigen-path implementation of ``gamma(s)(m)``; the
    ``gamma_fault`` setting scales it by ``1 + gamma_fault``.  Both exist to
    confirm that the series comparison detects a wrong implementation.
    """
    rng = np.random.default_rng(cfg.seed)
    gamma = alg.gamma if gamma is None else gamma
    if cfg.gamma_fault:
        base = gamma

        def gamma(s, m):
            return (1.0 + cfg.gamma_fault) * base(s, m)

    n = 200
    s = _random_herm(rng, n, 2.0)
    m = alg.vec_to_herm(rng.normal(size=(n, 3))) + 1j * alg.vec_to_herm(rng.normal(size=(n, 3)))
    g0 = Grid3(1.0, 0.5, 2.5, cfg.verify_n, cfg.verify_n, cfg.verify_n)
    grids = [g0, g0.refine(), g0.refine().refine()]
    hs = [g.h1 for g in grids]
    tables = {}
    cache = {}

    def gamma_series():
        gap = float(np.max(np.abs(gamma(s, m) - alg.gamma_series(s, m, 20))))
        return _verdict("gamma_series", gap <= 1e-10, gap, 1e-10)

    def v_square():
        gap = float(np.max(np.abs(alg.v_op(s, alg.v_op(s, m)) - gamma(s, m))))
        return _verdict("v_square", gap <= 1e-10, gap, 1e-10)

    def hermitian_sum_commuting():
        a = _random_herm(rng, n, 2.0)
        b = a * rng.uniform(-1.0, 1.0, size=n)[:, None, None]
        gap = float(np.max(np.abs(alg.hermitian_sum(a, b) - (a + b))))
        return _verdict("hermitian_sum_commuting", gap <= 1e-12, gap, 1e-12)

    def hermitian_sum_witness():
        a, b = 0.5 * alg.SIGMA[0], 0.5 * alg.SIGMA[1]
        gap = float(np.max(np.abs(alg.hermitian_sum(a, b) - (a + b))))
        return _verdict("hermitian_sum_witness", gap >= 1e-3, gap, 1e-3)

    def polar_roundtrip():
        u = expm(1j * _random_herm(rng, n, 2.0))
        g = u @ alg.exp_herm(_random_herm(rng, n, 2.0))
        uu, ss = alg.polar(g)
        gap = float(np.max(np.abs(uu @ alg.exp_herm(ss) - g)))
        return _verdict("polar_roundtrip", gap <= 1e-10, gap, 1e-10)

    def oracle_orders():
        if "orders" not in cache:
            orders = {"triangular": [], "diagonal": []}
            bullet_orders = []
            for kind in orders:
                for k in range(cfg.verify_instances):
                    gaps, bullets = [], []
                    for g in grids:
                        mp = smooth_metric_pair(g, np.random.default_rng([cfg.seed, k]), kind=kind)
                        psi = psi_from_metric(mp)
                        E, F = residual_first(psi).frame_scalars()
                        u = np.log(mp.h)
                        if kind == "triangular":
                            E2, F2 = residual_special1(g, u, mp.w, mp.P)
                        else:
                            E2, F2 = residual_special2(g, u, mp.A, mp.B, mp.P)
                        gaps.append(max(interior_sup(np.abs(E - E2)), interior_sup(np.abs(F - F2))))
                        bullets.append(max(residual_full(psi).norms[1:]))
                    orders[kind].append(_order(hs, gaps))
                    bullet_orders.append(_order(hs, bullets))
            cache["orders"] = (orders, bullet_orders)
        return cache["orders"]

    def oracle(name, kind):
        orders = oracle_orders()[0][kind]
        worst = min(orders)
        return _verdict(name, worst >= 1.8, worst, 1.8, orders=orders)

    def bullets():
        orders = oracle_orders()[1]
        worst = min(orders)
        return _verdict("bullets", worst >= 1.8, worst, 1.8, orders=orders)

    def weitzenbock():
        gaps = {"double": [], "single": []}
        for g in grids:
            r = np.random.default_rng([cfg.seed, 1000])
            psi = smooth_configuration(g, r)
            sh = smooth_hermitian(g, r, 0.1)
            for conv in gaps:
                gaps[conv].append(interior_sup(np.abs(weitzenbock_gap(psi, sh, conv))))
        tables["weitzenbock"] = (["h", "gap_double", "gap_single"], [hs, gaps["double"], gaps["single"]])
        ords = {conv: _order(hs, v) for conv, v in gaps.items()}
        holding = [conv for conv, o in ords.items() if o >= 1.5]
        return _verdict("weitzenbock", len(holding) == 1, ords, 1.5,
                        convention=holding[0] if len(holding) == 1 else None)

    def linearization():
        g = grids[1]
        fits = []
        for k in range(5):
            r = np.random.default_rng([cfg.seed, 2000 + k])
            fits.append(linearization_slope(smooth_configuration(g, r), smooth_hermitian(g, r, 0.1)))
        cs = sorted({f.nearest for f in fits})
        worst = max(f.rel_residual for f in fits)
        return _verdict("linearization", len(cs) == 1 and worst <= 0.05, worst, 0.05,
                        constant=cs[0] if len(cs) == 1 else None, slopes=[f.c for f in fits])

    runners = {
        "gamma_series": gamma_series,
        "v_square": v_square,
        "hermitian_sum_commuting": hermitian_sum_commuting,
        "hermitian_sum_witness": hermitian_sum_witness,
        "polar_roundtrip": polar_roundtrip,
        "oracle_special1": lambda: oracle("oracle_special1", "triangular"),
        "oracle_special2": lambda: oracle("oracle_special2", "diagonal"),
        "bullets": bullets,
        "weitzenbock": weitzenbock,
        "linearization": linearization,
    }
    verdicts = []
    for name in cfg.checks:
        try:
            verdicts.append(runners[name]())
        except Exception as exc:  # a crashing check is a failed verdict
            verdicts.append(_verdict(name, False, None, None, error=f"{type(exc).__name__}: {exc}"))
    return {"seed": cfg.seed, "verdicts": verdicts, "tables": tables}


def run_verify(cfg: RunConfig, out: Path) -> int:
    report = verify_suite(cfg)
    for name, (header, cols) in report["tables"].items():
        write_csv(out / f"{name}.csv", header, cols)
    write_json(out / "verdicts.json", {"seed": report["seed"], "verdicts": report["verdicts"]})
    return EXIT_OK if all(v["passed"] for v in report["verdicts"]) else EXIT_FAILURE


RUNNERS = {"model": run_model, "approx": run_approx, "continue": run_continue, "verify": run_verify}


def run(command: str, config_path, out_dir) -> int:
    """Run one scenario; returns the exit status."""
    try:
        cfg = load_config(config_path, command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        return RUNNERS[command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bogomolny", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="flat key = value configuration file")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
