"""
Command-line driver.

``lsspectral solve CONFIG``
    One solve; writes ``report.json``, ``slice.csv`` and ``coefficients.npz``.
``lsspectral sweep CONFIG``
    Convergence study over ``Ni``, ``F`` or ``Nd``; writes ``sweep.csv`` and
    ``report.json``.
``lsspectral cache-moments CONFIG``
    Precompute the radial moment tables the config needs.
``lsspectral selftest``
    Quick oracle checks.

Exit status: 0 on success, 1 on a solver failure (including GMRES not
converging), 2 on a configuration error.  ``LSSPECTRAL_THREADS`` caps the
operator's worker threads.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dump_config, load_config
from .errors import InvalidConfig, LSSpectralError, MaxIterations, Breakdown
from .operator import LSOperator, ProblemSpec, field_error, solve
from .radial import MomentTable, RadialGrid, interpolate_radial, precompute_moments
from .scenarios import (
    contrast_coefficients,
    exact_solution_shifted,
    exact_solution_sphere,
    incident_coefficients,
)
from .sht import ModeField, evaluate

log = logging.getLogger("lsspectral")

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_CONFIG = 2

SWEEP_COLUMNS = ("value", "time_per_iteration", "iterations", "relative_error", "error_ratio")


# ------------------------------------------------------------------ helpers


def build_problem(cfg):
    """Radial grid and problem spec for a configuration."""
    grid = RadialGrid(cfg.R, cfg.Ni, cfg.Nd)
    contrast = contrast_coefficients(cfg.contrast, grid, cfg.F)
    incident = incident_coefficients(cfg.incident, grid, cfg.F)
    spec = ProblemSpec(cfg.k, cfg.F, grid, contrast, incident, support=cfg.contrast.support())
    return grid, spec


def _cache_path(cache_dir, grid, k, F):
    name = f"moments_k{k:g}_R{grid.R:g}_Ni{grid.Ni}_Nd{grid.Nd}_F{F}.bin"
    return Path(cache_dir) / name


def get_moments(cfg, grid, F=None):
    """Moment table for ``grid``, read from or written to the cache if configured."""
    F = cfg.F if F is None else F
    if not cfg.moment_cache:
        return precompute_moments(grid, cfg.k, F)
    path = _cache_path(cfg.moment_cache, grid, cfg.k, F)
    key = (float(cfg.k), grid.R, grid.Ni, grid.Nd, int(F))
    if path.exists():
        try:
            table = MomentTable.load(path, expect_key=key)
            log.info("loaded moments from %s", path)
            return table
        except LSSpectralError as exc:
            log.warning("ignoring stale moment cache %s: %s", path, exc)
    table = precompute_moments(grid, cfg.k, F)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.save(path)
    log.info("wrote moments to %s", path)
    return table


def _reference_kind(cfg):
    kind = cfg.reference.kind
    if kind != "auto":
        return kind
    c = cfg.contrast.kind
    if c == "none":
        return "incident"
    if c in ("sphere", "shifted-sphere"):
        return "exact"
    return "refined"


def exact_reference(cfg, grid, F):
    """Exact total field on ``grid`` at band ``F``, if the scenario has one."""
    c = cfg.contrast
    inc = cfg.incident
    if c.kind == "none":
        return incident_coefficients(inc, grid, F)
    if c.kind == "sphere":
        ref = exact_solution_sphere(cfg.k, inc.m_inc, c.n0, F, grid, c.radius)
        ref.data *= np.exp(-1j * cfg.k * inc.d)
        return ref
    if c.kind == "shifted-sphere":
        return exact_solution_shifted(cfg.k, inc.m_inc, c.offset, F, grid, c.n0, c.radius)
    raise InvalidConfig(f"no exact solution for contrast kind {c.kind!r}")


def refined_config(cfg, largest=None):
    """Configuration of the refined reference run."""
    largest = largest or {}
    # default: one refinement step beyond the finest value the run uses
    ref = cfg.with_value("F", cfg.reference.F or 2 * largest.get("F", cfg.F) + 1)
    ref = ref.with_value("Ni", cfg.reference.Ni or 2 * largest.get("Ni", cfg.Ni // 2))
    ref = ref.with_value("Nd", cfg.reference.Nd or largest.get("Nd", cfg.Nd))
    ref.gmres.tol = cfg.reference.tol or min(cfg.gmres.tol, 1e-12)
    ref.sweep = None
    return ref


class Reference:
    """Reference solution, evaluated lazily and reused across a sweep."""

    def __init__(self, cfg, largest=None):
        self.cfg = cfg
        self.kind = _reference_kind(cfg)
        self.largest = largest
        self._refined = None
        self.info = {"kind": self.kind}

    def _solve_refined(self):
        rcfg = refined_config(self.cfg, self.largest)
        log.info("reference solve at F=%d Ni=%d Nd=%d", rcfg.F, rcfg.Ni, rcfg.Nd)
        grid, spec = build_problem(rcfg)
        u, rep = solve(spec, tol=rcfg.gmres.tol, max_iter=rcfg.gmres.max_iter,
                       restart=rcfg.gmres.restart, moments=get_moments(rcfg, grid))
        self.info.update({"F": rcfg.F, "Ni": rcfg.Ni, "Nd": rcfg.Nd, "iterations": rep.iterations})
        return grid, u

    def on(self, grid, F):
        """Reference coefficients on ``grid`` (band at least ``F``), or None."""
        if self.kind == "none":
            return None
        if self.kind == "incident":
            return incident_coefficients(self.cfg.incident, grid, F)
        if self.kind == "exact":
            return exact_reference(self.cfg, grid, F)
        if self._refined is None:
            self._refined = self._solve_refined()
        rgrid, ru = self._refined
        if rgrid.key() == grid.key():
            return ru
        data = interpolate_radial(ru.data, rgrid, grid.nodes)
        return ModeField(ru.band, data, grid.nodes)


def relative_error(u, ref):
    band = max(u.band, ref.band)
    return field_error(u.resized(band), ref.resized(band))


def meridian_slice(u, ntheta):
    """``|u|^2`` in the plane ``y = 0``: rows of (rho, theta, value).

    ``theta`` runs over ``[0, 2 pi)``; values past ``pi`` lie on the
    ``phi = pi`` half-plane at polar angle ``2 pi - theta``.
    """
    theta = np.linspace(0.0, 2 * np.pi, ntheta, endpoint=False)
    polar = np.where(theta <= np.pi, theta, 2 * np.pi - theta)
    phi = np.where(theta <= np.pi, 0.0, np.pi)
    vals = evaluate(u.data, polar, phi, orders=u.orders())
    rho = np.repeat(u.radii, ntheta)
    th = np.tile(theta, u.nrad)
    return np.column_stack([rho, th, (np.abs(vals) ** 2).ravel()])


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def solve_config(cfg, reference=None):
    """Solve one configuration; returns a result dict (field included)."""
    t0 = time.perf_counter()
    grid, spec = build_problem(cfg)
    moments = get_moments(cfg, grid)
    t_setup = time.perf_counter() - t0
    op = LSOperator(spec, moments)
    result = {
        "F": cfg.F, "Ni": cfg.Ni, "Nd": cfg.Nd,
        "active_orders": op.orders,
        "unknowns": int(op.index.size * grid.size),
        "setup_time": t_setup,
    }
    tail = np.abs(spec.incident.data[:, -(2 * cfg.F + 1):]).max()
    result["incident_tail"] = float(tail)
    status = "converged"
    try:
        u, rep = solve(spec, tol=cfg.gmres.tol, max_iter=cfg.gmres.max_iter,
                       restart=cfg.gmres.restart, operator=op)
    except (MaxIterations, Breakdown) as exc:
        status = type(exc).__name__
        u, rep = exc.x, exc.report
        result["message"] = str(exc)
    finally:
        op.close()
    result["status"] = status
    result["gmres"] = rep.as_dict()
    if reference is None:
        reference = Reference(cfg)
    ref = reference.on(grid, cfg.F)
    result["relative_error"] = None if ref is None else relative_error(u, ref)
    result["reference"] = dict(reference.info)
    result["field"] = u
    return result


# ----------------------------------------------------------------- commands


def run_single(cfg, outdir=None):
    """Run ``solve`` for a configuration; returns an exit code."""
    out = Path(outdir or cfg.output.dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    res = solve_config(cfg)
    u = res.pop("field")
    _write_csv(out / "slice.csv", ("rho", "theta", "intensity"), meridian_slice(u, cfg.output.slice_theta))
    if cfg.output.save_coefficients:
        np.savez(out / "coefficients.npz", data=u.data, radii=u.radii, band=u.band)
    report = {"version": __version__, "config": cfg.to_dict(), "result": res}
    (out / "report.json").write_text(json.dumps(_json_safe(report), indent=2))
    err = res["relative_error"]
    print(
        f"{cfg.name}: {res['status']} in {res['gmres']['iterations']} iterations, "
        f"relative error {'n/a' if err is None else format(err, '.6g')}"
    )
    print(f"wrote {out}")
    return EXIT_OK if res["status"] == "converged" else EXIT_SOLVER


def sweep_rows(cfg):
    """Solve every sweep point; returns (rows, per-run results)."""
    sw = cfg.sweep
    if sw is None or len(sw.values) < 2:
        raise InvalidConfig("a sweep needs at least two values")
    largest = {sw.param: max(sw.values)}
    reference = Reference(cfg, largest)
    rows, results = [], []
    prev = None
    for value in sw.values:
        sub = cfg.with_value(sw.param, value)
        log.info("sweep %s=%d", sw.param, value)
        res = solve_config(sub, reference)
        res.pop("field")
        err = res["relative_error"]
        ratio = None
        if prev is not None and err:
            ratio = prev / err
            if sw.ratio == "log2":
                ratio = math.log2(ratio)
        rows.append((value, res["gmres"]["time_per_iteration"], res["gmres"]["iterations"], err, ratio))
        results.append(res)
        prev = err
    return rows, results


def run_sweep(cfg, outdir=None):
    """Run a convergence study; returns an exit code."""
    out = Path(outdir or cfg.output.dir) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    rows, results = sweep_rows(cfg)
    header = list(SWEEP_COLUMNS)
    if cfg.sweep.ratio == "log2":
        header[-1] = "log2_error_ratio"
    _write_csv(out / "sweep.csv", [cfg.sweep.param] + header[1:], rows)
    report = {"version": __version__, "config": cfg.to_dict(), "runs": results}
    (out / "report.json").write_text(json.dumps(_json_safe(report), indent=2))
    w = max(len(h) for h in header)
    print("  ".join(h.rjust(w) for h in [cfg.sweep.param] + header[1:]))
    for row in rows:
        cells = [str(row[0]), f"{row[1]:.3g}s", str(row[2])]
        cells += ["" if v is None else f"{v:.6g}" for v in row[3:]]
        print("  ".join(c.rjust(w) for c in cells))
    ok = all(r["status"] == "converged" for r in results)
    return EXIT_OK if ok else EXIT_SOLVER


def run_cache(cfg):
    """Precompute moment tables for every grid the config touches."""
    if not cfg.moment_cache:
        raise InvalidConfig("moment_cache is not set in the config")
    points = [cfg]
    if cfg.sweep is not None:
        points = [cfg.with_value(cfg.sweep.param, v) for v in cfg.sweep.values]
    for sub in points:
        grid = RadialGrid(sub.R, sub.Ni, sub.Nd)
        get_moments(sub, grid)
        print(_cache_path(sub.moment_cache, grid, sub.k, sub.F))
    return EXIT_OK


def selftest(verbose=True):
    """Fast oracle checks; returns a list of (name, passed, detail)."""
    from .oracle import addition_theorem_check, ls_apply_dense
    from .scenarios import contrast_from_function
    from .sht import AngularGrid, analyze, synthesize

    checks = []

    def record(name, value, limit):
        checks.append((name, bool(value <= limit), f"{value:.2e} <= {limit:.0e}"))

    d, s = addition_theorem_check([0, 0, 2.0], [0, 0, 0.5], 1.0, 30)
    record("addition theorem, N=30", abs(d - s) / abs(d), 1e-12)

    rng = np.random.default_rng(1)
    c = rng.standard_normal((2, 81)) + 1j * rng.standard_normal((2, 81))
    g8 = AngularGrid(8)
    record("harmonic transform round trip, F=8", np.abs(analyze(synthesize(c, g8), g8, 8) - c).max(), 1e-12)

    grid = RadialGrid(1.0, 2, 4)
    uf = lambda x, y, z: 1 + x - 0.5j * z
    mf = lambda x, y, z: (1.5 + 0.5j) * (1 - x * x - y * y - z * z)
    u = contrast_from_function(uf, grid, 2).resized(3)
    spec = ProblemSpec(2.0, 3, grid, contrast_from_function(mf, grid, 1), u.copy())
    from .operator import apply_forward

    out = apply_forward(u, spec)
    ag = AngularGrid(3)
    vals = synthesize(out.data, ag)
    i, j, l = 5, 1, 2
    r, st = grid.nodes[i], np.sin(ag.theta[j])
    pt = [r * st * np.cos(ag.phi[l]), r * st * np.sin(ag.phi[l]), r * ag.t[j]]
    dense = ls_apply_dense(uf, mf, 2.0, [pt], 1.0).values[0]
    record("operator vs dense quadrature", abs(dense - vals[i, j, l]) / abs(dense), 1e-6)

    zero = ProblemSpec(2.0, 3, grid, ModeField.zeros(6, grid.size), u.copy())
    record("free space leaves the field unchanged", np.abs(apply_forward(u, zero).data - u.data).max(), 1e-14)
    if verbose:
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    return checks


# --------------------------------------------------------------------- main


def build_parser():
    p = argparse.ArgumentParser(
        prog="lsspectral",
        description="Spectral Lippmann-Schwinger solver for 3-D acoustic scattering.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve", "solve one configuration"),
        ("sweep", "run a convergence study"),
        ("cache-moments", "precompute radial moment tables"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config", help="YAML run configuration")
        if name != "cache-moments":
            s.add_argument("-o", "--outdir", help="override output.dir")
    s = sub.add_parser("check-config", help="validate a config and print its normalised form")
    s.add_argument("config")
    sub.add_parser("selftest", help="run quick oracle checks")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "selftest":
        return EXIT_OK if all(ok for _, ok, _ in selftest()) else EXIT_SOLVER
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LSSpectralError as exc:
        print(f"error: invalid config {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "check-config":
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.command == "solve":
            return run_single(cfg, args.outdir)
        if args.command == "sweep":
            if cfg.sweep is None:
                raise InvalidConfig("config has no sweep section")
            return run_sweep(cfg, args.outdir)
        return run_cache(cfg)
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LSSpectralError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
