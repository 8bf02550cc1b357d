"""Command-line experiment runner.

    emdenlab solve  --config run.json [--p-targets 10 20] [--h 0.015625] [--out dir]
    emdenlab oracle --config run.json [--p-targets 20 50 100] [--jobs 4]
    emdenlab bubble --config run.json [--p-targets 500]
    emdenlab green  --config run.json [--p-targets 50 200]

Configs are JSON; unknown keys are rejected. Exit codes: 0 success, 1 numerical
failure, 2 usage or config error.
"""
import argparse
import csv
from dataclasses import dataclass, field, fields, replace
import json
import logging
import math
import os
import sys

import numpy as np

from .bubbles import (average_inequality, detect_peaks, extract_bubble, extrapolate,
                      is_degenerate, liouville_residual)
from .exceptions import (ConfigError, EmdenLabError, NotConverged, NumericalFailure,
                         ScaleUnderflow, UsageError)
from .geometry import DomainSpec, build_grid, write_field
from .greenfn import GreenCache, RobinMap, convloc_check, default_starts, kr_stationary
from .lane_emden import SolveParams, continue_in_p, record_from_radial
from .radial import DEFAULT_ODE_TOL, oracle_sweep, shoot
from .validation import check_increasing, check_scalar

logger = logging.getLogger("emdenlab")

FLOAT_FMT = ".15g"


def _strict(cls, d, section):
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(extra)}")
    return cls(**d)


@dataclass(frozen=True)
class OracleConfig:
    p_list: tuple = (20.0, 50.0, 100.0, 200.0, 500.0, 1000.0)
    ode_tol: float = DEFAULT_ODE_TOL


@dataclass(frozen=True)
class BubbleConfig:
    R: float = 10.0
    beta: float = None
    threshold: float = 0.5
    radii: tuple = None
    spacing: float = 0.1
    source: str = "oracle"
    p_select: tuple = (500.0,)
    min_points_per_scale: float = 1.0


@dataclass(frozen=True)
class GreenConfig:
    probe_spacing: float = 0.1
    fd_step: float = None
    kr_tol: float = 1e-3
    n: int = 1
    n_random_starts: int = 2
    test_points: tuple = ((0.5, 0.0),)
    source: str = "oracle"
    p_list: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainSpec = field(default_factory=lambda: DomainSpec.disk(1.0))
    h: float = 1.0 / 64
    solve: SolveParams = field(default_factory=SolveParams)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    bubble: BubbleConfig = field(default_factory=BubbleConfig)
    green: GreenConfig = field(default_factory=GreenConfig)
    output_dir: str = "out"
    seed: int = 0
    jobs: int = 1

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = dict(d)
        try:
            if "domain" in kw:
                kw["domain"] = DomainSpec.from_dict(kw["domain"])
            if "solve" in kw:
                kw["solve"] = SolveParams.from_dict(kw["solve"])
            if "oracle" in kw:
                kw["oracle"] = _strict(OracleConfig, kw["oracle"], "oracle")
            if "bubble" in kw:
                kw["bubble"] = _strict(BubbleConfig, kw["bubble"], "bubble")
            if "green" in kw:
                kw["green"] = _strict(GreenConfig, kw["green"], "green")
            cfg = cls(**kw)
            check_scalar(cfg.h, "h", min_val=0, include_min=False)
            if not isinstance(cfg.seed, int) or cfg.seed < 0:
                raise ConfigError("seed must be a nonnegative integer")
            if cfg.bubble.source not in ("oracle", "grid"):
                raise ConfigError("bubble.source must be 'oracle' or 'grid'")
            if cfg.green.source not in ("oracle", "grid"):
                raise ConfigError("green.source must be 'oracle' or 'grid'")
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def load_config(path):
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), FLOAT_FMT)
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _p_tag(p):
    return format(float(p), "g")


def _disk_or_fail(cfg, what):
    if cfg.domain.kind != "disk":
        raise ConfigError(f"{what} with source 'oracle' needs a disk domain")


def _grid_records(cfg, grid, targets):
    params = replace(cfg.solve, p_targets=tuple(targets))
    if params.p_start > params.p_targets[0]:
        params = replace(params, p_start=params.p_targets[0])
    try:
        return continue_in_p(grid, params)
    except NumericalFailure as exc:
        raise NumericalFailure(f"solver failure: {exc}") from exc


def cmd_solve(cfg):
    grid = build_grid(cfg.domain, cfg.h)
    records = _grid_records(cfg, grid, cfg.solve.p_targets)
    rows = []
    for rec in records:
        rows.append([rec.p, rec.energy, rec.sup_norm, rec.peak[0], rec.peak[1], rec.log_mu2,
                     rec.newton_report.steps, rec.residual])
        write_field(os.path.join(cfg.output_dir, f"u_p{_p_tag(rec.p)}.dat"), rec.u)
    write_csv(os.path.join(cfg.output_dir, "solutions.csv"),
              ["p", "energy", "sup_norm", "peak_x", "peak_y", "log_mu2", "newton_steps",
               "residual"], rows)
    return 0


def cmd_oracle(cfg):
    ps = check_increasing(cfg.oracle.p_list, "p_list")
    sols = oracle_sweep(ps, cfg.oracle.ode_tol, cfg.jobs)
    header = ["p", "u0", "r0", "energy", "log_mu2", "err_estimate", "degenerate"]
    rows = [[s.p, s.u0, s.r0, s.energy, s.log_mu2, s.err_estimate, ""] for s in sols]
    e_rows = [(s.p, s.energy) for s in sols]
    u_rows = [(s.p, s.u0) for s in sols]
    if is_degenerate(e_rows) or is_degenerate(u_rows):
        last = sols[-1]
        rows.append(["extrapolated", last.u0, math.nan, last.energy, math.nan, math.nan, 1])
    else:
        e_lim, e_err = extrapolate(e_rows)
        u_lim, u_err = extrapolate(u_rows)
        rows.append(["extrapolated", u_lim, math.nan, e_lim, math.nan, max(e_err, u_err), 0])
    write_csv(os.path.join(cfg.output_dir, "oracle.csv"), header, rows)
    return 0


def cmd_bubble(cfg):
    bc = cfg.bubble
    ps = check_increasing(bc.p_select, "p_select")
    if bc.source == "oracle":
        _disk_or_fail(cfg, "bubble")
        grid = build_grid(cfg.domain, cfg.h)
        sources = [shoot(p, cfg.oracle.ode_tol) for p in ps]
        records = [record_from_radial(s, grid) for s in sources]
    else:
        grid = build_grid(cfg.domain, cfg.h)
        records = _grid_records(cfg, grid, ps)
        sources = records
    table = []
    unresolved = False
    for src, rec in zip(sources, records):
        peaks = detect_peaks(rec, bc.beta, bc.threshold)
        row = {"p": rec.p, "E_p": rec.energy, "sup_norm": rec.sup_norm, "n_peaks": peaks.n,
               "masses": peaks.masses, "log_mu2": rec.log_mu2, "tau_dev_R": math.nan,
               "rho_delta0": math.nan, "liouville_residual": math.nan, "unresolved": 0}
        try:
            prof = extract_bubble(src, bc.R, bc.spacing, bc.min_points_per_scale)
        except ScaleUnderflow as exc:
            logger.error("p=%s: %s", _p_tag(rec.p), exc)
            row["unresolved"] = 1
            unresolved = True
        else:
            row["tau_dev_R"] = prof.tau_deviation()
            row["liouville_residual"] = liouville_residual(prof).eq_residual
            rows = prof.dump_rows()
            write_csv(os.path.join(cfg.output_dir, f"bubble_p{_p_tag(rec.p)}.dat"),
                      ["y1", "y2", "tau", "log1p_y2"], rows)
            rep = average_inequality(src, bc.radii)
            row["rho_delta0"] = rep.rho_at(rep.delta0) if len(rep.rho) else math.nan
        table.append(row)
    n_m = max([len(r["masses"]) for r in table] + [1])
    header = (["p", "E_p", "sup_norm", "n_peaks"] + [f"m_{k + 1}" for k in range(n_m)]
              + ["log_mu2", "tau_dev_R", "rho_delta0", "liouville_residual", "unresolved"])
    out = []
    for r in table:
        masses = list(r["masses"]) + [None] * (n_m - len(r["masses"]))
        out.append([r["p"], r["E_p"], r["sup_norm"], r["n_peaks"]] + masses
                   + [r["log_mu2"], r["tau_dev_R"], r["rho_delta0"], r["liouville_residual"],
                      r["unresolved"]])
    write_csv(os.path.join(cfg.output_dir, "quantization.csv"), header, out)
    if unresolved:
        raise NumericalFailure("Unresolved: concentration scale below the grid spacing")
    return 0


def cmd_green(cfg):
    gc = cfg.green
    grid = build_grid(cfg.domain, cfg.h)
    robin = RobinMap(grid, gc.probe_spacing, jobs=cfg.jobs)
    write_csv(os.path.join(cfg.output_dir, "robin.csv"), ["x", "y", "robin"], robin.table)
    greens = GreenCache(grid)
    fd_step = 4 * grid.h if gc.fd_step is None else gc.fd_step
    rng = np.random.default_rng(cfg.seed)
    starts = default_starts(grid, gc.n, robin, rng, gc.n_random_starts)
    failure = None
    try:
        best = kr_stationary(grid, gc.n, starts, robin, fd_step, gc.kr_tol, greens=greens)
        converged = 1
    except NotConverged as exc:
        best, converged, failure = exc.best, 0, exc
    kr_rows = []
    if best is not None:
        for j, (x, g) in enumerate(zip(best.points, best.gradients)):
            kr_rows.append([gc.n, j + 1, x[0], x[1], g[0], g[1], float(np.hypot(*x)),
                            best.value, best.grad_norm, converged])
    write_csv(os.path.join(cfg.output_dir, "kr.csv"),
              ["n", "j", "x", "y", "g_x", "g_y", "radius", "value", "grad_norm",
               "converged"], kr_rows)
    conv_rows = []
    if gc.p_list:
        ps = check_increasing(gc.p_list, "green.p_list")
        if gc.source == "oracle":
            _disk_or_fail(cfg, "convloc")
            records = [record_from_radial(shoot(p, cfg.oracle.ode_tol), grid) for p in ps]
        else:
            records = _grid_records(cfg, grid, ps)
        for rec in records:
            peaks = detect_peaks(rec, cfg.bubble.beta, cfg.bubble.threshold)
            for row in convloc_check(rec, peaks.peaks, gc.test_points, greens=greens):
                conv_rows.append([rec.p, row.point[0], row.point[1], row.p_u, row.model,
                                  row.rel_error])
    write_csv(os.path.join(cfg.output_dir, "convloc.csv"),
              ["p", "y1", "y2", "p_u", "model", "rel_error"], conv_rows)
    if failure is not None:
        best_norm = best.grad_norm if best is not None else math.nan
        raise NumericalFailure(f"NotConverged: best grad_norm {best_norm:.6g}")
    return 0


COMMANDS = {"solve": cmd_solve, "oracle": cmd_oracle, "bubble": cmd_bubble,
            "green": cmd_green}


def _apply_overrides(cfg, args):
    kw = {}
    if args.h is not None:
        kw["h"] = args.h
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    if args.out is not None:
        kw["output_dir"] = args.out
    if args.p_targets is not None:
        pt = tuple(args.p_targets)
        check_increasing(pt, "p_targets")
        if args.command == "solve":
            kw["solve"] = replace(cfg.solve, p_targets=pt)
        elif args.command == "oracle":
            kw["oracle"] = replace(cfg.oracle, p_list=pt)
        elif args.command == "bubble":
            kw["bubble"] = replace(cfg.bubble, p_select=pt)
        else:
            kw["green"] = replace(cfg.green, p_list=pt)
    cfg = replace(cfg, **kw)
    check_scalar(cfg.h, "h", min_val=0, include_min=False)
    if not isinstance(cfg.jobs, int) or cfg.jobs < 1:
        raise ConfigError("jobs must be a positive integer")
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(prog="emdenlab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("solve", "grid continuation in p"),
                        ("oracle", "radial shooting sweep"),
                        ("bubble", "bubble profiles and quantization table"),
                        ("green", "Robin map, Kirchhoff-Routh points and far-field check")]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--p-targets", type=float, nargs="+", default=None,
                        help="exponents overriding the config list")
        sp.add_argument("--h", type=float, default=None, help="grid spacing")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        os.makedirs(cfg.output_dir, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"emdenlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, EmdenLabError) as exc:
        print(f"emdenlab {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
