"""Command-line interface.

Subcommands:

* ``run CONFIG``: integrate the scenario, write the log CSV plus a
  plotting script, print a summary (final tracking-error norm, input
  peak, wall time).
* ``check-gains CONFIG --bounds FILE``: evaluate the gain conditions
  against supplied bound constants; non-zero exit on violation.
* ``decompose MATRIX``: print the S, D, U factors of a matrix read from
  a whitespace-separated text file.
* ``analyze CONFIG LOG``: recompute the stability diagnostics along a
  logged run, write a diagnostics CSV, print a pass/fail summary.

Exit codes: 0 success, 1 validation failure, 2 runtime or numerical
failure.  ``RMC_LOG_DIR`` overrides the output directory for generated
files.
"""

import argparse
import concurrent.futures
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis as _analysis
from . import csvio
from .config import (ScenarioConfig, build_scenario, load_config,
                     output_directory, parse_config_text)
from .controller import BoundEstimates, check_alpha, validate_C, zeta_L
from .decomp import sdu_decompose
from .exceptions import ConfigError, RmcError
from .simulator import run_scenario

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _print_matrix(name, mat):
    print(f"{name} =")
    for row in np.atleast_2d(mat):
        print("  " + "  ".join(f"{v: .12g}" for v in row))


def _out_path(stem, suffix, explicit=None):
    if explicit is not None:
        return Path(explicit)
    return Path(output_directory()) / f"{stem}{suffix}"


def _cmd_run_single(config_path, out, deg):
    cfg = load_config(config_path)
    start = time.perf_counter()
    log = run_scenario(cfg)
    wall = time.perf_counter() - start

    analysis_cols = None
    if cfg.lyapunov_columns:
        built = build_scenario(cfg)
        report = _analysis.lemma2_report(log, built.plant, built.ref,
                                         built.gains, safety=cfg.safety,
                                         gamma1_grid=range(cfg.gamma_max + 1),
                                         gamma2_grid=range(cfg.gamma_max + 1))
        if report.P is None:
            raise RmcError("integral-inequality search infeasible; "
                           "cannot form the P column")
        analysis_cols = {"V1": report.V1, "L": report.L, "P": report.P,
                         "V": report.V}

    stem = Path(config_path).stem
    csv_path = _out_path(stem + "_log", ".csv", out)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csvio.write_log_csv(log, csv_path, deg=deg, analysis=analysis_cols)
    script_path = csv_path.with_name(csv_path.stem + "_plot.py")
    csvio.write_plot_script(csv_path, script_path, log.m)

    final_e1 = float(np.linalg.norm(log.e1[-1]))
    max_tau = float(np.abs(log.tau).max())
    print(f"run {config_path}: {len(log)} samples -> {csv_path}")
    print(f"  final ||e1|| = {final_e1:.6e}")
    print(f"  max |tau|    = {max_tau:.6e}")
    print(f"  wall time    = {wall:.2f} s")
    print(f"  plot script  = {script_path}")
    return EXIT_OK


def _batch_worker(args):
    config_path, deg = args
    return _cmd_run_single(config_path, None, deg)


def cmd_run(args):
    if args.batch:
        batch_dir = Path(args.batch)
        configs = sorted(batch_dir.glob("*.cfg"))
        if not configs:
            raise ConfigError(f"no .cfg files under {batch_dir}")
        # Scenarios are independent: no shared mutable state, one log per
        # scenario, so they may run concurrently.
        with concurrent.futures.ProcessPoolExecutor() as pool:
            results = list(pool.map(_batch_worker,
                                    [(str(c), args.deg) for c in configs]))
        return max(results)
    return _cmd_run_single(args.config, args.out, args.deg)


def _load_bounds(path, m):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read bounds {path}: {exc}") from None
    from .config import _Parser, _float  # shared line-level parser

    parser = _Parser(text, str(path))
    sections = parser.sections
    if set(sections) != {"bounds"}:
        raise ConfigError(f"{path}: expected exactly one [bounds] section")
    zeta_Nbar = None
    zeta_Omega = np.zeros((m, m))
    gamma1 = 0.0
    gamma2 = 0.0
    for key, (value, lineno) in sections["bounds"].items():
        if key == "zeta_Nbar":
            vals = [_float(v, path, key) for v in value.split()]
            if len(vals) != m:
                raise ConfigError(f"{path}:{lineno}: zeta_Nbar needs {m} entries")
            zeta_Nbar = np.array(vals)
        elif key.startswith("zeta_Omega_"):
            parts = key.split("_")
            try:
                i, j = int(parts[-2]), int(parts[-1])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: malformed key {key!r}") from None
            if not (1 <= i < j <= m):
                raise ConfigError(
                    f"{path}:{lineno}: zeta_Omega indices must satisfy 1 <= i < j <= {m}")
            zeta_Omega[i - 1, j - 1] = _float(value, path, key)
        elif key == "gamma1":
            gamma1 = _float(value, path, key)
        elif key == "gamma2":
            gamma2 = _float(value, path, key)
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [bounds]")
    if zeta_Nbar is None:
        raise ConfigError(f"{path}: [bounds] requires zeta_Nbar")
    return BoundEstimates(zeta_Nbar=zeta_Nbar, zeta_Omega=zeta_Omega,
                          gamma1=gamma1, gamma2=gamma2)


def cmd_check_gains(args):
    cfg = load_config(args.config)
    built = build_scenario(cfg)
    bounds = _load_bounds(args.bounds, cfg.m)
    alpha_check = check_alpha(built.gains.alpha)
    validation = validate_C(built.gains.C, bounds, built.gains.alpha)
    print(f"alpha condition (min eigenvalue >= 1/2): "
          f"{'pass' if alpha_check.passed else 'FAIL'} "
          f"(margin {alpha_check.margin:+.6g})")
    print(f"minimal C: {np.array2string(validation.C_min, precision=6)}")
    print(f"configured C: {np.array2string(built.gains.C, precision=6)}")
    for i, margin in enumerate(validation.margins, start=1):
        print(f"  C_{i} margin: {margin:+.6g} "
              f"({'pass' if margin >= 0 else 'FAIL'})")
    zl = zeta_L(bounds, built.gains.C, np.zeros(cfg.m))
    print(f"zeta_L at zero initial error: {zl:.6g}")
    ok = alpha_check.passed and validation.passed
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_decompose(args):
    try:
        g = np.loadtxt(args.matrix, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read matrix {args.matrix}: {exc}") from None
    factors = sdu_decompose(g)
    _print_matrix("S", factors.S)
    _print_matrix("D", factors.D)
    _print_matrix("U", factors.U)
    return EXIT_OK


def cmd_analyze(args):
    cfg = load_config(args.config)
    built = build_scenario(cfg)
    log = csvio.log_from_csv(args.log, built.plant, built.ref)
    grid = range(cfg.gamma_max + 1)
    report = _analysis.lemma2_report(log, built.plant, built.ref, built.gains,
                                     safety=cfg.safety, gamma1_grid=grid,
                                     gamma2_grid=grid)
    failures = []
    if not report.lemma1.feasible:
        failures.append("integral-inequality search infeasible on the gamma grid")
        print("analyze: no feasible (gamma1, gamma2); diagnostics unavailable")
        for line in failures:
            print("FAIL:", line)
        return EXIT_RUNTIME

    margins = np.column_stack(
        [_analysis.lemma1_margin_series(
            log.t, log.en[:, i], (log.r - built.gains.alpha * log.en)[:, i],
            report.lemma1.gamma1, report.lemma1.gamma2)
         for i in range(log.m)])
    out = _out_path(Path(args.log).stem + "_diagnostics", ".csv", args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csvio.write_diagnostics_csv(out, log.t, report.V1, report.L, report.P,
                                report.V, margins)
    print(f"analyze {args.log}: diagnostics -> {out}")
    print(f"  gamma1 = {report.lemma1.gamma1:g}, gamma2 = {report.lemma1.gamma2:g} "
          f"(margin {report.lemma1.margin:.6g})")
    print(f"  alpha margin  = {report.alpha_margin:+.6g}")
    print(f"  min C margin  = {np.min(report.C_used - report.C_min):+.6g}")
    print(f"  min P         = {report.min_P:.6g}")
    dV = np.diff(report.V)
    tol = 10.0 * log.dt * float(np.abs(dV).max()) if dV.size else 0.0
    print(f"  max V increase= {dV.max() if dV.size else 0.0:.3e} (tol {tol:.3e})")

    if report.alpha_margin < 0.0:
        failures.append("alpha condition violated")
    if not report.C_passed:
        failures.append("C below the minimal gain vector")
    if report.min_P < 0.0:
        failures.append("P dropped below zero")
    if dV.size and dV.max() > tol:
        failures.append("V increased beyond the discretization tolerance")
    if failures:
        for line in failures:
            print("FAIL:", line)
        return EXIT_RUNTIME
    print("all diagnostics pass")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rmc",
        description="Robust MIMO tracking-controller simulator and diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write its log")
    p_run.add_argument("config", nargs="?", help="scenario configuration file")
    p_run.add_argument("--out", help="log CSV path (default: <config>_log.csv)")
    p_run.add_argument("--deg", action="store_true",
                       help="write position-unit columns in degrees")
    p_run.add_argument("--batch", metavar="DIR",
                       help="run every .cfg under DIR concurrently")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check-gains", help="evaluate the gain conditions")
    p_check.add_argument("config")
    p_check.add_argument("--bounds", required=True,
                         help="bound-constants file ([bounds] section)")
    p_check.set_defaults(func=cmd_check_gains)

    p_dec = sub.add_parser("decompose",
                           help="print the S D U factors of a matrix file")
    p_dec.add_argument("matrix", help="text file, one whitespace-separated row per line")
    p_dec.set_defaults(func=cmd_decompose)

    p_an = sub.add_parser("analyze", help="stability diagnostics over a log CSV")
    p_an.add_argument("config")
    p_an.add_argument("log", help="log CSV produced by 'run'")
    p_an.add_argument("--out", help="diagnostics CSV path")
    p_an.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and not args.batch and not args.config:
        parser.error("run requires a CONFIG or --batch DIR")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RmcError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
