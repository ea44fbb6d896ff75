"""``obstacle-walk`` command line: ``run <config>``, ``check`` and ``list``.

Exit codes: 0 when every check passes, 2 when a check fails, 1 on errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import kernel, oracles, scaling
from .config import EXPERIMENTS, RunConfig, parse_config
from .errors import ObstacleWalkError
from .gaussian import SamplerConfig
from .obstacle import OBSTACLE_FAMILIES, discretize, obstacle_from_name, tilt_schedule
from .step_law import LAW_FACTORIES, centered_binomial, lazy_srw, law_from_name, uniform3

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
ORACLE_TOL = 1e-12
CHECK_MAX_N = 8


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_ERROR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="obstacle-walk", description="Random walks conditioned to stay above a concave obstacle.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    sub.add_parser("check", help="compare the kernel with exhaustive enumeration for n <= 8")
    sub.add_parser("list", help="list experiments, step laws and obstacle families")
    return parser


# --------------------------------------------------------------------------
# run


def run_experiment(cfg: RunConfig) -> scaling.ExponentReport:
    settings = scaling.KernelSettings(k_cap=cfg.k_cap, mass_tol=cfg.mass_tol, slope_margin=cfg.slope_margin,
                                      threads=cfg.threads)
    tol = {} if cfg.tolerance is None else {"tolerance": cfg.tolerance}
    if cfg.experiment in ("alpha_p", "free_field"):
        if cfg.experiment == "free_field":
            return scaling.free_field_experiment(n=cfg.free_field_n, beta=cfg.beta, sweeps=cfg.sweeps,
                                                 burn_in=cfg.burn_in, thin=cfg.thin or 4, seed=cfg.seed)
        sampler = SamplerConfig(method=cfg.gaussian_method, beta=cfg.beta, dx=cfg.dx, k_cap=cfg.k_cap,
                                sweeps=cfg.sweeps, burn_in=cfg.burn_in, thin=cfg.thin,
                                coupling_factor=cfg.coupling_factor, tail_budget=cfg.tail_budget, seed=cfg.seed)
        return scaling.alpha_p_experiment(cfg.p_grid, cfg.gaussian_n_grid, sampler, threads=cfg.threads, **tol)

    law = law_from_name(cfg.law)
    spec = obstacle_from_name(cfg.obstacle_family, cfg.obstacle_param)
    if cfg.experiment == "ld_correction":
        return scaling.ld_correction_experiment(law, spec, cfg.n_grid, settings, **tol)
    if cfg.experiment == "variance":
        return scaling.variance_experiment(law, spec, cfg.n_grid, settings=settings, **tol)
    if cfg.experiment == "tails":
        window = (cfg.lambda_min, cfg.lambda_max or scaling.default_tail_window(cfg.n)[1])
        lambdas = np.geomspace(window[0], window[1], cfg.lambda_count)
        return scaling.tail_experiment(law, spec, cfg.n, cfg.k, lambdas, window, settings, **tol)
    if cfg.experiment == "covariance":
        return scaling.covariance_experiment(law, spec, cfg.n, cfg.pair_i, cfg.pair_separations, settings)
    raise ValueError(f"unknown experiment {cfg.experiment!r}")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _clean(obj):
    """Replace non-finite floats by strings so report.json stays valid JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_outputs(report: scaling.ExponentReport, outdir: Path) -> list[Path]:
    """``rows.csv``, ``report.json``, one ``<check>.dat`` per fitted check, and ``plot.gp``."""
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    with open(outdir / "rows.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(scaling.CSV_COLUMNS)
        for row in report.rows:
            writer.writerow(row.csv_fields())
    written.append(outdir / "rows.csv")
    with open(outdir / "report.json", "w") as fh:
        json.dump(_clean(report.to_dict()), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    written.append(outdir / "report.json")

    plots = []
    for chk in report.checks:
        if chk.fit is None or not chk.points:
            continue
        path = outdir / f"{chk.name}.dat"
        with open(path, "w") as fh:
            fh.write(f"# {chk.name}: columns x, y, fitted y; slope {chk.fit.slope!r}, r2 {chk.fit.r2!r}\n")
            for x, y in chk.points:
                if chk.kind == "slope":
                    fitted = math.exp(chk.fit.intercept) * x**chk.fit.slope
                else:
                    fitted = chk.fit.intercept + chk.fit.slope * x
                fh.write(f"{x!r} {y!r} {fitted!r}\n")
        written.append(path)
        plots.append(chk)
    with open(outdir / "plot.gp", "w") as fh:
        fh.write("set terminal pngcairo size 800,600\n")
        for chk in plots:
            scale = "set logscale xy" if chk.kind == "slope" else "unset logscale"
            fh.write(f"\nset output '{chk.name}.png'\n{scale}\nset title '{chk.name}'\n")
            fh.write(f"plot '{chk.name}.dat' using 1:2 with points title 'measured', "
                     f"'' using 1:3 with lines title 'fit'\n")
    written.append(outdir / "plot.gp")
    return written


def print_summary(report: scaling.ExponentReport, out=None) -> None:
    out = out or sys.stdout
    for chk in report.checks:
        status = "PASS" if chk.passed else "FAIL"
        if chk.kind == "slope" and chk.fit:
            what = f"slope {chk.fit.slope:.4f} target {chk.target:.4f} +- {chk.tolerance:g}"
        elif chk.kind == "linear" and chk.fit:
            what = f"slope {chk.fit.slope:.4f} r2 {chk.fit.r2:.4f} (need > 0, >= {chk.min_r2:g})"
        else:
            what = json.dumps(_clean(chk.detail), default=_json_default)
        print(f"{status} {chk.name}: {what}", file=out)
    print(f"verdict: {'pass' if report.verdict else 'fail'}", file=out)


def cmd_run(path: str) -> int:
    cfg = parse_config(path)
    report = run_experiment(cfg)
    write_outputs(report, Path(cfg.output_dir))
    print_summary(report)
    return EXIT_PASS if report.verdict else EXIT_FAIL


# --------------------------------------------------------------------------
# check


def oracle_suite(max_n: int = CHECK_MAX_N, out=None) -> bool:
    """Kernel against enumeration for small ``n`` over a few laws and obstacles."""
    out = out or sys.stdout
    cases = [
        (uniform3(), obstacle_from_name("quadratic", 0.5)),
        (centered_binomial(2), obstacle_from_name("quadratic", 0.5)),
        (lazy_srw(0.5), obstacle_from_name("cosine", 0.5)),
    ]
    ok = True
    for law, spec in cases:
        for n in range(2, max_n + 1):
            profile = discretize(spec, n)
            schedule = tilt_schedule(law, profile)
            tables = kernel.build_tables(law, profile, schedule, check_mass=False)
            cmp = oracles.compare_with_kernel(law, profile, schedule, tables)
            consistency = tables.consistency_error()
            passed = cmp.max_rel_error <= ORACLE_TOL and abs(cmp.change_of_measure_gap) <= ORACLE_TOL \
                and consistency <= scaling.CONSISTENCY_TOL
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'} {law!r} {spec!r} n={n}: paths={cmp.paths} "
                  f"max_rel_error={cmp.max_rel_error:.2e} ({cmp.worst}) "
                  f"measure_gap={cmp.change_of_measure_gap:.2e} consistency={consistency:.2e}", file=out)
    return ok


def cmd_list() -> int:
    print("experiments: " + ", ".join(EXPERIMENTS))
    print("laws: " + ", ".join(LAW_FACTORIES))
    print("obstacles: " + ", ".join(f for f in OBSTACLE_FAMILIES if f != "p"))
    return EXIT_PASS


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "check":
            return EXIT_PASS if oracle_suite() else EXIT_FAIL
        return cmd_list()
    except (ObstacleWalkError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
