"""Command-line interface.

Exit codes: 0 success, 1 configuration or domain error, 2 numerical
failure, 3 a verification report failed.
"""

from __future__ import annotations

import argparse
import contextlib
import sys

from . import analytics
from .errors import DomainError, NumericalFailure
from .harness import (
    ComparisonReport,
    ExperimentConfig,
    estimate_pmf_mc,
    load_default_config,
    moment_check_inverse_stable,
    verify_all,
    write_table_csv,
)
from .model import JumpDistribution, multi_indices

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration (default: shipped desk-scale config)")
    common.add_argument("--out", help="output CSV path (default: standard output)")
    common.add_argument("--t", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--eta", type=float)
    common.add_argument("--nu", type=float)
    common.add_argument("--workers", type=int)

    p = argparse.ArgumentParser(prog="mfpp", description=(
        "Multivariate space-time fractional Poisson processes: "
        "state probabilities, transforms, dependence measures and checks."))
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("pmf", parents=[common], help="state probabilities for k <= kmax")
    g = sub.add_parser("pgf", parents=[common], help="probability generating function")
    g.add_argument("--u", type=float, nargs="+", required=True)
    sub.add_parser("compound-pmf", parents=[common], help="compound state probabilities")
    sub.add_parser("covariance", parents=[common], help="covariance matrix (eta = 1)")
    sub.add_parser("codifference", parents=[common], help="codifference matrix")
    sub.add_parser("levy", parents=[common], help="Levy point masses for 1 <= |k| <= |kmax|")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo pmf table")
    mo = sub.add_parser("moments", parents=[common], help="inverse-stable moment check")
    mo.add_argument("--k", type=int, nargs="+", default=[1, 2])
    sub.add_parser("verify", parents=[common], help="run the verification suite")
    return p


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else load_default_config()
    return cfg.with_overrides(t=args.t, seed=args.seed, samples=args.samples,
                              eta=args.eta, nu=args.nu, workers=args.workers)


def _pair_rows(m, fn):
    return [((j + 1, h + 1), fn(j, h)) for j in range(m) for h in range(m)]


def _write_pairs(rows, name, out, complex_values=False):
    if complex_values:
        out.write(f"j,h,{name}_re,{name}_im\n")
        for (j, h), v in rows:
            v = complex(v)
            out.write(f"{j},{h},{v.real!r},{v.imag!r}\n")
        return
    out.write(f"j,h,{name}\n")
    for (j, h), v in rows:
        out.write(f"{j},{h},{float(v)!r}\n")


def _run(args, out) -> int:
    cfg = _config(args)
    p, t, m = cfg.model, cfg.t, cfg.model.m
    cmd = args.command
    if cmd == "pmf":
        write_table_csv([(k, analytics.pmf(p, k, t)) for k in multi_indices(cfg.kmax)], m, fh=out)
    elif cmd == "pgf":
        u = tuple(args.u)
        if len(u) != m:
            raise DomainError(f"--u needs {m} values")
        val = analytics.pgf(p, u, t) if cfg.jumps is None else \
            analytics.compound_pgf(p, cfg.jumps, u, t)
        out.write(",".join([f"u{i + 1}" for i in range(m)] + ["G"]) + "\n")
        out.write(",".join(repr(x) for x in u + (val,)) + "\n")
    elif cmd == "compound-pmf":
        jumps = cfg.jumps or JumpDistribution.unit(m)
        write_table_csv([(k, analytics.compound_pmf(p, jumps, k, t))
                         for k in multi_indices(cfg.kmax)], m, fh=out)
    elif cmd == "covariance":
        _write_pairs(_pair_rows(m, lambda j, h: analytics.covariance(p, j, h, t)), "cov", out)
    elif cmd == "codifference":
        _write_pairs(_pair_rows(m, lambda j, h: analytics.codifference(p, j, h, t)), "tau", out,
                     complex_values=True)
    elif cmd == "levy":
        masses = analytics.levy_point_masses(p, sum(cfg.kmax), cfg.jumps)
        write_table_csv([(pm.k, pm.mass) for pm in masses], m, value_name="mass", fh=out)
    elif cmd == "simulate":
        emp, rep = estimate_pmf_mc(cfg)
        write_table_csv(sorted(emp.items()), m, fh=out)
        sys.stderr.write(rep.summary())
    elif cmd == "moments":
        rep = moment_check_inverse_stable(p.nu, t, args.k, cfg.samples, cfg.seed, cfg.workers,
                                          cfg.tolerances["moment_se"])
        return _report(rep, out)
    elif cmd == "verify":
        return _report(verify_all(cfg), out)
    return EXIT_OK


def _report(rep: ComparisonReport, out) -> int:
    rep.to_csv(out)
    sys.stderr.write(rep.summary())
    return EXIT_OK if rep.passed else EXIT_VERIFY


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; that code is reserved here
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        with contextlib.ExitStack() as stack:
            out = stack.enter_context(open(args.out, "w", encoding="utf-8", newline="")) \
                if args.out else sys.stdout
            return _run(args, out)
    except NumericalFailure as exc:
        sys.stderr.write(f"mfpp: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (DomainError, ValueError, OSError) as exc:
        sys.stderr.write(f"mfpp: error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
