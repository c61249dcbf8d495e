"""Command-line surface: simulate, fit, sections, analyze, compression-curve.

Every subcommand reads one JSON run configuration (see :mod:`hipid.config`)
and writes CSV tables and JSON documents into ``--out``.  Exit codes: 0 on
success, 2 for configuration errors, 3 for data errors and 4 when a solver
fails (the best point found is still written).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, simulate_series
from .grid import GridScan, clever_section, global_min, resolve_degenerate, scan
from .io import DataFileError, read_json, read_series, write_json, write_series, write_table
from .model import CountingModel, DataSeries, ModelDefinition, OutOfBoundsError, eliminate_linear, merit
from .reliability import (
    FollowerModel,
    error_domain_1d,
    follower_merit,
    in_similarity_domain,
    merit_relation_check,
    noise_decompose,
    similarity_band,
)
from .secant import SecantSimplex, SolverFailure, initial_simplex, iterate, iterate_with_elimination

log = logging.getLogger("hipid")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4
ENGINES = ("grid", "secant", "secant-eliminated")


class SolverFailed(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------- helpers


def _data_path(cfg: RunConfig, given: Optional[str]) -> Path:
    if given:
        return Path(given)
    if cfg.section("data"):
        return cfg.resolve(cfg.section("data"))
    raise ConfigError("no data file given (use --data or a 'data' entry in the config)")


def _start_vector(model: ModelDefinition, start, names: Sequence[str]) -> np.ndarray:
    if isinstance(start, dict):
        missing = [n for n in names if n not in start]
        if missing:
            raise ConfigError(f"solver start is missing {missing}")
        return np.array([float(start[n]) for n in names])
    v = np.asarray(start, dtype=float).reshape(-1)
    if v.size != len(names):
        raise ConfigError(f"solver start needs {len(names)} values ({list(names)})")
    return v


def _initial(cfg: RunConfig, model: ModelDefinition, names: Sequence[str], fn) -> SecantSimplex:
    spec = cfg.section("solver") or {}
    if "initial" in spec:
        pts = np.asarray(spec["initial"], dtype=float)
        if pts.shape != (len(names) + 1, len(names)):
            raise ConfigError(f"solver.initial must be {len(names) + 1} points of {len(names)} values")
        return SecantSimplex.from_points(pts, fn)
    if "start" not in spec:
        raise ConfigError("secant engines need solver.start or solver.initial")
    x0 = _start_vector(model, spec["start"], names)
    return initial_simplex(x0, fn, float(spec.get("rel_step", 0.05)), float(spec.get("abs_step", 1e-3)))


def _follower_scan(cfg: RunConfig, model: ModelDefinition, p_min, data: DataSeries, rank_tol: float) -> GridScan:
    fm = FollowerModel.build(model, p_min, data.schedule)
    return scan(model, fm.simulated_data, cfg.section_grid(), rank_tol, cfg.section_grid_fixed(),
                cfg.grid_workers(), "follower")


def _real_scan(cfg: RunConfig, model: ModelDefinition, data: DataSeries, rank_tol: float) -> GridScan:
    return scan(model, data, cfg.section_grid(), rank_tol, cfg.section_grid_fixed(), cfg.grid_workers())


def _error_intervals(follower: GridScan, level: float) -> Dict[str, dict]:
    out = {}
    for gi in follower.axis_params:
        name = follower.model.names[gi]
        ei = error_domain_1d(clever_section(follower, name), level)
        out[name] = {
            "intervals": [list(iv) for iv in ei.intervals],
            "half_width": ei.half_width,
            "width": ei.width,
            "clipped": list(ei.clipped),
            "primary": ei.primary,
        }
    return out


def _basin_jumps(real: GridScan) -> Dict[str, List[int]]:
    return {
        real.model.names[gi]: [int(k) for k in np.flatnonzero(clever_section(real, gi).basin_jumps)]
        for gi in real.axis_params
    }


# ---------------------------------------------------------------- pipelines


def run_simulate(cfg: RunConfig, out: Path, seed: Optional[int] = None) -> List[Path]:
    """Write ``data.csv`` and ``truth.json`` (plus one pair per stage)."""
    model = cfg.model()
    written = []
    runs = [(cfg, "data")] if cfg.section("truth") else []
    runs += [(st, st.name) for st in cfg.stages()]
    if not runs:
        raise ConfigError("nothing to simulate: no truth section and no stages")
    for st, stem in runs:
        truth = st.truth(model)
        noise = st.noise(seed)
        series = simulate_series(model, truth, st.schedule(), noise)
        written.append(write_series(out / f"{stem}.csv", series))
        doc = {
            "model": model.label,
            "parameters": model.as_dict(truth),
            "noise": {"kind": noise.kind, "amplitude": noise.amplitude, "seed": noise.seed},
            "samples": len(series.times),
        }
        written.append(write_json(out / f"{stem}_truth.json" if stem != "data" else out / "truth.json", doc))
    return written


def run_fit(cfg: RunConfig, data: DataSeries, engine: str, seed: Optional[int] = None):
    """Run one engine; returns ``(report, table_name, header, rows)``.

    The evaluation count in the report is the number of model evaluations
    (response or basis) performed by the engine, counted by a wrapper.
    """
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}")
    base = cfg.model()
    counter = CountingModel(base)
    model = counter.model
    opts = cfg.solver(seed)
    report = {
        "model": base.label,
        "engine": engine,
        "parameter_names": list(base.names),
        "version": __version__,
    }
    status, message = "ok", ""
    if engine == "grid":
        real = scan(model, data, cfg.grid(), opts.rank_tol, cfg.grid_fixed(), cfg.grid_workers())
        p_min, f_min = global_min(real)
        report.update(converged=True, reason="grid", iterations=0)
        header, rows = _scan_table(real)
        table = "scan.csv"
    else:
        try:
            if engine == "secant":
                names = list(base.names)

                def fn(x):
                    return data.values - model.evaluate(data.times, x)

                init = _initial(cfg, model, names, fn)
                res = iterate(model, data, init, opts)
            else:
                names = [base.names[i] for i in base.split.nonlinear_indices]

                def fn(p2):
                    return eliminate_linear(model, p2, data, opts.rank_tol).residual

                init = _initial(cfg, model, names, fn) if names else None
                res = iterate_with_elimination(model, data, init, opts)
            p_min, f_min = res.solution, res.merit
            report.update(converged=bool(res.converged), reason=res.reason, iterations=len(res.trace))
            header, rows = _trace_table(res.trace, names)
        except SolverFailure as exc:
            status, message = "failed", str(exc)
            best = np.asarray(exc.best, dtype=float)
            if engine == "secant":
                p_min = base.params(best, check=False)
            else:
                p_min = eliminate_linear(base, best, data, opts.rank_tol).parameters
            f_min = merit(base, p_min, data)
            report.update(converged=False, reason="failure", iterations=len(exc.trace))
            header, rows = _trace_table(exc.trace, names)
        except OutOfBoundsError as exc:
            raise ConfigError(f"solver start outside the parameter bounds: {exc}") from None
        table = "trace.csv"
        f_min = merit(base, p_min, data)

    report.update(
        status=status,
        message=message,
        solution=base.as_dict(p_min),
        merit=float(f_min),
        noise_norm_sq=float(f_min),
        evaluations=int(counter.evaluations + counter.basis_evaluations),
    )
    intervals, jumps = {}, {}
    if cfg.has_section_grid() and status == "ok":
        try:
            follower = _follower_scan(cfg, base, p_min, data, opts.rank_tol)
            intervals = _error_intervals(follower, float(f_min))
            jumps = _basin_jumps(_real_scan(cfg, base, data, opts.rank_tol))
        except OutOfBoundsError as exc:
            log.warning("error intervals skipped: %s", exc)
    report["error_intervals"] = intervals
    report["half_widths"] = {k: v["half_width"] for k, v in intervals.items()}
    report["basin_jumps"] = jumps
    if status != "ok":
        raise SolverFailed(message, (report, table, header, rows))
    return report, table, header, rows


def _scan_table(s: GridScan):
    names = s.model.names
    axis_names = [names[i] for i in s.axis_params]
    header = axis_names + ["F"] + [f"{n}" for n in names if n not in axis_names] + ["rank", "failed"]
    others = [i for i in range(len(names)) if names[i] not in axis_names]
    rows = []
    flat_f = s.merit.reshape(-1)
    flat_p = s.params.reshape(-1, len(names))
    flat_r = s.ranks.reshape(-1)
    flat_fail = s.failed.reshape(-1)
    for k in range(flat_f.size):
        p = flat_p[k]
        rows.append([p[i] for i in s.axis_params] + [flat_f[k]] + [p[i] for i in others]
                    + [int(flat_r[k]), int(flat_fail[k])])
    return header, rows


def _trace_table(trace, names):
    header = ["iteration", "merit_before", "merit_after", "step_norm", "action"] + [f"base_{n}" for n in names]
    rows = [
        [r.iteration, r.merit_before, r.merit_after, r.step_norm, r.action or "-"] + list(np.ravel(r.base))
        for r in trace
    ]
    return header, rows


def _load_fit(path: Path, model: ModelDefinition):
    try:
        rep = read_json(path)
    except DataFileError as exc:
        raise DataFileError(f"missing fit report: {exc}") from None
    sol = rep.get("solution")
    if not isinstance(sol, dict):
        raise DataFileError(f"{path} has no solution")
    try:
        return rep, model.params(sol, check=False)
    except (ValueError, IndexError) as exc:
        raise DataFileError(f"{path}: solution does not match the model ({exc})") from None


def run_sections(cfg: RunConfig, data: DataSeries, p_min) -> Dict[str, tuple]:
    """Real-life and follower clever sections for every grid axis."""
    model = cfg.model()
    opts = cfg.solver()
    real = _real_scan(cfg, model, data, opts.rank_tol)
    follower = _follower_scan(cfg, model, p_min, data, opts.rank_tol)
    out = {}
    for gi in real.axis_params:
        name = model.names[gi]
        out[name] = (clever_section(real, name), clever_section(follower, name))
    return out


def section_rows(real, follower):
    return [[a, fa, b, fb] for a, fa, b, fb in zip(real.x, real.values, follower.x, follower.values)]


def run_analyze(cfg: RunConfig, data: DataSeries, p_min) -> dict:
    model = cfg.model()
    opts = cfg.solver()
    fm = FollowerModel.build(model, p_min, data.schedule)
    z = noise_decompose(fm, data)
    f_min = merit(model, p_min, data)
    spec = cfg.section("analysis") or {}
    level = spec.get("level")
    level = f_min if level is None else float(level)
    doc = {
        "model": model.label,
        "p_min": model.as_dict(p_min),
        "F_min": f_min,
        "noise_norm_sq": z.norm_sq,
        "noise": list(z.entries),
        "level": level,
    }
    if cfg.has_section_grid():
        follower = _follower_scan(cfg, model, p_min, data, opts.rank_tol)
        iv = _error_intervals(follower, level)
        doc["error_intervals"] = iv
        doc["half_widths"] = {k: v["half_width"] for k, v in iv.items()}
    probes = []
    worst = 0.0
    for pr in [model.as_dict(p_min)] + list(spec.get("probes") or []):
        try:
            p = model.params(pr, check=False)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"invalid probe {pr!r}: {exc}") from None
        lhs, rhs = merit_relation_check(fm, data, p)
        fp = follower_merit(fm, p)
        band = similarity_band(fm, z, p)
        resid = abs(lhs - rhs)
        worst = max(worst, resid / (1.0 + abs(lhs)))
        probes.append({
            "point": model.as_dict(p),
            "F": lhs,
            "F_follower": fp,
            "difference": lhs - fp,
            "band": [band.lower, band.upper],
            "in_band": band.contains(lhs - fp, rtol=1e-12),
            "similarity_domain": in_similarity_domain(fm, z, p),
            "identity_residual": resid,
        })
    doc["probes"] = probes
    doc["identity_residual_max"] = worst
    return doc


def run_compression_curve(cfg: RunConfig, c_long: float):
    """Resolve each stage's degenerate c-section at the long-stage ``c``."""
    model = cfg.model()
    opts = cfg.solver()
    if "c" not in model.names:
        raise ConfigError("compression curve needs a consolidation model with parameter 'c'")
    stages = cfg.stages()
    if not stages:
        raise ConfigError("compression curve needs a 'stages' list")
    rows = []
    for st in stages:
        data = read_series(_data_path(st, None))
        s = scan(model, data, st.grid(), opts.rank_tol, st.grid_fixed(), st.grid_workers())
        sec = clever_section(s, "c")
        try:
            p, gap = resolve_degenerate(sec, c_long)
        except ValueError as exc:
            raise ConfigError(f"stage {st.name}: {exc}") from None
        k = int(np.argmin(np.abs(sec.x - c_long)))
        rows.append([st.name, p.values[model.index("c")], p.values[model.index("sigma_inf")], gap, sec.values[k]])
    return ["stage", "c", "sigma_inf", "gap", "F"], rows


# ---------------------------------------------------------------- argparse


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hipid", description="Parameter identification with reliability analysis")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, fit=False):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the configured seed")
        if data:
            sp.add_argument("--data", default=None, help="CSV data file (t, value)")
        if fit:
            sp.add_argument("--fit", default=None, help="fit report (default: <out>/fit_report.json)")

    common(sub.add_parser("simulate", help="generate synthetic data"), data=False)
    sp = sub.add_parser("fit", help="identify parameters")
    common(sp)
    sp.add_argument("--engine", choices=ENGINES, default="grid")
    common(sub.add_parser("sections", help="real-life and follower clever sections"), fit=True)
    common(sub.add_parser("analyze", help="noise decomposition and error domains"), fit=True)
    common(sub.add_parser("compression-curve", help="per-stage sigma_inf at the long-stage c"), data=False, fit=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        cfg = RunConfig.load(args.config)
        if args.command == "simulate":
            for path in run_simulate(cfg, out, args.seed):
                print(path)
            return EXIT_OK

        model = cfg.model()
        if args.command == "compression-curve":
            fit_path = Path(args.fit) if args.fit else out / "fit_report.json"
            _, p_long = _load_fit(fit_path, model)
            header, rows = run_compression_curve(cfg, float(p_long.values[model.index("c")]))
            print(write_table(out / "compression_curve.csv", header, rows))
            return EXIT_OK

        data = read_series(_data_path(cfg, args.data))
        if args.command == "fit":
            try:
                report, table, header, rows = run_fit(cfg, data, args.engine, args.seed)
                code = EXIT_OK
            except SolverFailed as exc:
                report, table, header, rows = exc.report
                log.error("solver failed: %s", exc)
                code = EXIT_SOLVER
            write_table(out / table, header, rows)
            print(write_json(out / "fit_report.json", report))
            return code

        fit_path = Path(args.fit) if args.fit else out / "fit_report.json"
        _, p_min = _load_fit(fit_path, model)
        if args.command == "sections":
            for name, (real, follower) in run_sections(cfg, data, p_min).items():
                path = write_table(out / f"section_{name}.csv", ["x_real", "F_real", "x_follower", "F_follower"],
                                   section_rows(real, follower))
                print(path)
            return EXIT_OK
        if args.command == "analyze":
            print(write_json(out / "analysis.json", run_analyze(cfg, data, p_min)))
            return EXIT_OK
    except ConfigError as exc:
        print(f"hipid: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFileError, OutOfBoundsError, ValueError) as exc:
        print(f"hipid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_CONFIG  # unreachable: argparse enforces a known command


if __name__ == "__main__":
    sys.exit(main())
