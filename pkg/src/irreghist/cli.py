"""Command-line interface: ``irreghist {fit,pi0,simulate,sensitivity,pi0-experiment}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .grid import DataError, read_data
from .model import KPrior, ModelError
from .search import FitConfig, fit_detailed

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

GRID_NAMES = {"regular": "regular", "quantile": "quantile", "orderstat": "order_statistic"}


def _support(text: str):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi, got {text!r}") from None
    if not hi > lo:
        raise argparse.ArgumentTypeError(f"support needs lo < hi, got {text!r}")
    return lo, hi


def _k_prior(text: str) -> str:
    try:
        return KPrior.parse(text).label
    except ModelError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _int_list(text: str):
    return [int(v) for v in text.split(",") if v]


def _float_list(text: str):
    return [float(v) for v in text.split(",") if v]


def _emit(text: str, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _fit_config(args, support=None) -> FitConfig:
    return FitConfig(
        a=args.a, k_prior=args.k_prior, grid=GRID_NAMES[args.grid], support=support, exact=args.exact
    )


def _add_fit_options(p):
    p.add_argument("--grid", choices=sorted(GRID_NAMES), default="quantile", help="candidate mesh")
    p.add_argument("--a", type=_positive, default=5.0, help="Dirichlet concentration (default 5)")
    p.add_argument("--k-prior", type=_k_prior, default="uniform",
                   help="prior on the number of bins: uniform, power:M or poisson:L")
    p.add_argument("--exact", action="store_true", help="run the exact DP on the full mesh")


def cmd_fit(args) -> int:
    x = read_data(args.input)
    res = fit_detailed(x, _fit_config(args, args.support))
    est = res.estimate
    out = est.to_dict()
    out["support"] = [est.transform.lo, est.transform.hi]
    out["mesh_size"] = res.mesh.size
    if args.seed is not None:
        out["seed"] = args.seed
    if (est.transform.lo, est.transform.hi) == (0.0, 1.0):
        out["f_at_1"] = float(est.pdf(1.0))
    _emit(json.dumps(out, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_pi0(args) -> int:
    x = read_data(args.input)
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise DataError("p-values must lie in [0, 1]")
    est = fit_detailed(x, _fit_config(args, (0.0, 1.0))).estimate
    _emit(json.dumps({"pi0_hat": float(est.pdf(1.0)), "k": est.k, "n": int(x.size)}) + "\n", args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulation import ConfigError, load_campaign, run_campaign, summarize

    try:
        cfg = load_campaign(Path(args.config))
    except OSError as err:
        raise DataError(f"cannot read config: {err}") from None
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    report = run_campaign(cfg, workers=args.workers)
    _emit(report.to_csv(), args.output)
    if args.summary:
        Path(args.summary).write_text(json.dumps(summarize(report).to_dict(), indent=2) + "\n")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    from .simulation import plot_data, sensitivity_concentration, sensitivity_k_prior

    common = dict(densities=args.densities.split(","), ns=args.n, B=args.B, seed=args.seed,
                  workers=args.workers, grid=GRID_NAMES[args.grid])
    if args.kind == "k-prior":
        res = sensitivity_k_prior(**common)
    else:
        res = sensitivity_concentration(**common)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(res.rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(res.rows)
    _emit(buf.getvalue(), args.output)
    if args.plot:
        Path(args.plot).write_text(
            json.dumps(plot_data(res.rows, "n", "log_rel_risk", ("density", "setting")), indent=2) + "\n"
        )
    return EXIT_OK


def cmd_pi0_experiment(args) -> int:
    from .simulation import Pi0Entry, pi0_experiment

    for p in args.pi0:
        if not 0.0 <= p <= 1.0:
            raise DataError(f"pi0 must lie in [0, 1], got {p}")
    method = f"rih[grid={GRID_NAMES[args.grid]}]"
    rows = pi0_experiment(args.pi0, args.beta, args.n, args.B, args.seed, method, args.workers)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=[f.name for f in fields(Pi0Entry)], lineterminator="\n")
    writer.writeheader()
    writer.writerows(asdict(r) for r in rows)
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irreghist", description="Bayesian irregular histograms.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a histogram to a file of numbers")
    p.add_argument("input", help="one value per line")
    _add_fit_options(p)
    p.add_argument("--support", type=_support, help="fixed support lo,hi (default: data range)")
    p.add_argument("--seed", type=int, help="recorded in the output; the fit itself is deterministic")
    p.add_argument("-o", "--output", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pi0", help="estimate the null proportion from p-values as f(1)")
    p.add_argument("input", help="p-values, one per line")
    _add_fit_options(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_pi0)

    p = sub.add_parser("simulate", help="run a risk campaign from a JSON config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output", help="CSV output (default stdout)")
    p.add_argument("--summary", help="also write log-relative risks and median ranks as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensitivity", help="prior sensitivity experiments")
    p.add_argument("kind", choices=["k-prior", "concentration"])
    p.add_argument("--densities", default="gamma_3_3,beta_3_3,t3")
    p.add_argument("--n", type=_int_list, default=[100, 1000, 10000])
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--grid", choices=sorted(GRID_NAMES), default="quantile")
    p.add_argument("-o", "--output", help="CSV output (default stdout)")
    p.add_argument("--plot", help="write plot-data JSON here")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("pi0-experiment", help="RMSE of the f(1) null-proportion estimate")
    p.add_argument("--pi0", type=_float_list, default=[0.5, 0.8, 0.95])
    p.add_argument("--beta", type=_float_list, default=[2.0, 4.0, 10.0])
    p.add_argument("--n", type=_int_list, default=[200, 1000, 5000])
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--grid", choices=sorted(GRID_NAMES), default="quantile")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_pi0_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (ModelError, ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
