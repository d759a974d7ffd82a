"""Command-line interface: ``casbah {simulate,fit,summarize,study,priorprob}``.

Exit codes: 0 success, 2 input or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as cio
from .exceptions import InputError, NumericalError
from .gibbs import run_chain
from .model import prior_dissociative_probability, rho_moments
from .sim import generate, replicate_study, scenario
from .strata import STRATA, summarize

log = logging.getLogger("casbah")

EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _scenario_id(text):
    k = int(text)
    if k not in range(1, 6):
        raise argparse.ArgumentTypeError(f"scenario must be 1..5, got {k}")
    return k


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = scenario(args.scenario, n=args.n)
    data, truth = generate(spec, np.random.default_rng(args.seed))
    cio.write_observed(out / "data.csv", data)
    ids = np.arange(1, data.n + 1)
    cio._write_columns(out / "truth.csv", ["id", "p0", "p1", "y0", "y1", "stratum"],
                       [ids, truth.p0, truth.p1, truth.y0, truth.y1, truth.stratum],
                       ["%d"] + [cio.FLOAT_FMT] * 4 + ["%d"])
    print(f"wrote {data.n} units of scenario {args.scenario} to {out}")
    return 0


def cmd_fit(args):
    overrides = {"seed": args.seed} if args.seed is not None else None
    cfg = cio.parse_config(args.config, overrides)
    if args.standardize:
        cfg.standardize = True
    data, ids, covariates = cio.read_observed(args.data, cfg.covariates, cfg.standardize)
    data.check_fittable()
    cfg.covariates = tuple(covariates)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    draws = run_chain(data, cfg.hyper, cfg.gibbs)
    wall = time.perf_counter() - start
    cio.write_draws(out, draws)
    cio.write_observed(out / "observed.csv", data, ids, covariates)
    meta = {
        "seed": cfg.gibbs.seed,
        "config": cfg.echo(),
        "data": str(args.data),
        "n_units": data.n,
        "kept_iterations": len(draws),
        "versions": {"casbah": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
        "wall_time_seconds": round(wall, 3),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"kept {len(draws)} draws in {wall:.1f}s; wrote {out}")
    return 0


def _interval_rows(summary):
    return [[row.stratum.short, row.median, row.lo, row.hi, row.presence] for row in summary]


def cmd_summarize(args):
    draw_dir = Path(args.draws)
    if not draw_dir.is_dir() or not any(draw_dir.iterdir()):
        raise InputError(f"draws directory is missing or empty: {draw_dir}")
    draws = cio.read_draws(draw_dir)
    data, ids, covariates = cio.read_observed(draw_dir / "observed.csv")
    if draws.s0.shape[1] != data.n:
        raise InputError("draws and observed.csv disagree on the number of units")
    summary = summarize(draws, data, level=args.level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pct = int(round(100 * args.level))
    head = ["stratum", "median", f"lo{pct}", f"hi{pct}", "presence"]
    cio.write_csv(out / "pce.csv", head, _interval_rows(summary.tau_summary))
    cio.write_csv(out / "gap.csv", head, _interval_rows(summary.gap_summary))
    label_name = {int(s): s.short for s in STRATA}
    cio.write_csv(
        out / "strata_probs.csv", ["unit", "p_neg", "p_diss", "p_pos", "label"],
        [[int(u), *map(float, probs), label_name[int(lab)]]
         for u, probs, lab in zip(ids, summary.per_unit_probs, summary.point_partition)],
    )
    rows = []
    for s in STRATA:
        member = summary.point_partition == s
        means = data.x[member].mean(axis=0) if member.any() else np.full(data.p, np.nan)
        rows.append([s.short, int(member.sum()), *map(float, means)])
    cio.write_csv(out / "strata_covariates.csv", ["stratum", "n_units", *covariates], rows)
    for row in summary.tau_summary:
        if row.present:
            print(f"tau {row.stratum.short:>12}: {row.median:.4f} "
                  f"[{row.lo:.4f}, {row.hi:.4f}] presence {row.presence:.2f}")
        else:
            print(f"tau {row.stratum.short:>12}: not present")
    return 0


def cmd_study(args):
    overrides = {"seed": args.seed} if args.seed is not None else None
    cfg = cio.parse_config(args.config, overrides)
    spec = scenario(args.scenario, n=args.n)
    study = replicate_study(spec, args.replicates, cfg.gibbs, cfg.hyper, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in (("table1", study.table1()), ("table2", study.table2()),
                       ("table3", study.table3()), ("replicates", study.replicate_rows())):
        header = list(rows[0].keys())
        cio.write_csv(out / f"{name}.csv", header, [[r[h] for h in header] for r in rows])
    t1 = study.table1()
    t2 = study.table2()[0]
    print(f"scenario {args.scenario}: {len(study.ok)} fits, {study.failures} failures")
    print(f"  median bias E[P(1)-P(0)] {t1[0]['median']:.4f}, E[Y(1)-Y(0)] {t1[1]['median']:.4f}")
    print(f"  ARI mean {t2['mean']:.4f}")
    return 0


def _parse_grid(text):
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise InputError(f"--grid expects lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise InputError("--grid needs step > 0 and hi >= lo")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def cmd_priorprob(args):
    if args.grid:
        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for a in _parse_grid(args.grid):
            r1, r2 = rho_moments(a)
            rows.append([float(a), prior_dissociative_probability(r1, r2, args.L)])
        cio.write_csv(out / "figure1.csv", ["alpha_mean", "probability"], rows)
        print(f"wrote {len(rows)} points to {out / 'figure1.csv'}")
        return 0
    if args.alpha_mean is not None:
        if args.rho1 is not None or args.rho2 is not None:
            raise InputError("give either --alpha-mean or --rho1/--rho2, not both")
        r1, r2 = rho_moments(args.alpha_mean)
    elif args.rho1 is not None and args.rho2 is not None:
        r1, r2 = args.rho1, args.rho2
    else:
        raise InputError("need --alpha-mean, or both --rho1 and --rho2, or --grid")
    print(fmt_prob(prior_dissociative_probability(r1, r2, args.L)))
    return 0


def fmt_prob(p):
    return repr(float(p))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="casbah",
        description="Shared-atoms Bayesian mixture for principal stratification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log sampler progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulation-scenario dataset")
    p.add_argument("--scenario", type=_scenario_id, required=True, help="scenario 1..5")
    p.add_argument("--n", type=_nonneg_int, default=500, help="number of units (default 500)")
    p.add_argument("--seed", type=_nonneg_int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler on a data CSV")
    p.add_argument("--data", required=True, help="CSV with columns id,t,p,y,x1..xp")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True, help="output directory for draw files")
    p.add_argument("--seed", type=_nonneg_int, help="override the config seed")
    p.add_argument("--standardize", action="store_true", help="center and scale covariates")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="principal strata and effects from a draws directory")
    p.add_argument("--draws", required=True, help="directory written by 'fit'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--level", type=float, default=0.90, help="credible level (default 0.90)")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("study", help="replicate a simulation scenario and tabulate metrics")
    p.add_argument("--scenario", type=_scenario_id, required=True)
    p.add_argument("--replicates", type=_pos_int, default=20)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=_nonneg_int, default=500)
    p.add_argument("--jobs", type=_pos_int, default=1, help="worker processes")
    p.add_argument("--seed", type=_nonneg_int, help="master seed (overrides config)")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("priorprob", help="prior probability of the dissociative stratum")
    p.add_argument("--alpha-mean", type=float, help="mean of the stick linear predictor")
    p.add_argument("--rho1", type=float)
    p.add_argument("--rho2", type=float)
    p.add_argument("--L", type=_pos_int, default=20, help="truncation level (default 20)")
    p.add_argument("--grid", help="lo:hi:step over alpha-mean; writes figure1.csv")
    p.add_argument("--out", help="output directory for --grid (default: current directory)")
    p.set_defaults(func=cmd_priorprob)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
