"""Command-line entry point: ``marimpute <verb> ...``.

Exit status is 0 on success, 2 for configuration errors and 3 for data
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .analysis import Condition, UnsupportedSpec, check_condition, default_grid
from .bench import (ConfigError, ExperimentConfig, _jsonable, run_experiment, run_quantile_study,
                    write_quantile_study)
from .data import DataError, IncompleteData, MissingMask, read_csv, write_csv
from .fcs import FcsConfig, FcsError, impute
from .mechanisms import CATALOGUE, UnknownMechanism, generate, make_spec
from .models import ModelKind

EXIT_CONFIG = 2
EXIT_DATA = 3


def _params(text):
    if not text:
        return {}
    try:
        out = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON: {exc}") from None
    if not isinstance(out, dict):
        raise ConfigError("--params must be a JSON object")
    return out


def _spec(name, params):
    try:
        return make_spec(name, **params)
    except UnknownMechanism:
        raise ConfigError(f"unknown mechanism {name!r}; known: {', '.join(sorted(CATALOGUE))}") from None
    except TypeError as exc:
        raise ConfigError(f"bad mechanism parameters: {exc}") from None


def cmd_generate(args):
    spec = _spec(args.mechanism, _params(args.params))
    g = generate(spec, args.n, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    names = [f"x{j + 1}" for j in range(spec.d)]
    write_csv(os.path.join(args.out_dir, "complete.csv"), g.x.values, names)
    write_csv(os.path.join(args.out_dir, "incomplete.csv"),
              np.where(g.mask.entries, np.nan, g.x.values), names)
    print(json.dumps({"mechanism": spec.name, "n": args.n, "seed": args.seed,
                      "missing_rate": g.mask.missing_rate(), "out_dir": args.out_dir}))
    return 0


def cmd_impute(args):
    values, names = read_csv(args.input)
    data = IncompleteData(values, MissingMask(np.isnan(values)), names)
    try:
        kind = ModelKind(args.method)
    except ValueError:
        raise ConfigError(f"unknown method {args.method!r}") from None
    spec = _spec(args.mechanism, _params(args.mechanism_params)) if args.mechanism else None
    if kind is ModelKind.TRUE_SAMPLER and spec is None:
        raise ConfigError("true-sampler needs --mechanism")
    try:
        cfg = FcsConfig(iterations=args.iters, model=kind, params=_params(args.params),
                        chains=args.chains, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    run = impute(data, cfg, spec)
    if len(run.completed) == 1:
        write_csv(args.out, run.completed[0].values, names)
        return 0
    stem, ext = os.path.splitext(args.out)
    for k, c in enumerate(run.completed):
        write_csv(f"{stem}_{k}{ext or '.csv'}", c.values, names)
    return 0


def cmd_check(args):
    spec = _spec(args.mechanism, _params(args.params))
    try:
        condition = Condition(args.condition)
    except ValueError:
        raise ConfigError(f"unknown condition {args.condition!r}") from None
    try:
        grid = default_grid(spec, nodes=args.grid)
        report = check_condition(spec, condition, grid, tol=args.tol, j=args.j)
    except (UnsupportedSpec, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps(_jsonable(report.to_dict()), indent=2))
    return 0


def _experiment(args):
    cfg = ExperimentConfig.from_json(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if args.out_dir is not None:
        changes["output_dir"] = args.out_dir
    if getattr(args, "repetitions", None) is not None:
        changes["repetitions"] = args.repetitions
    if getattr(args, "iters", None) is not None:
        changes["iterations"] = args.iters
    return cfg.replace(**changes) if changes else cfg


def cmd_bench(args):
    cfg = _experiment(args)
    if cfg.output_dir is None:
        raise ConfigError("no output directory: set output_dir in the config or pass --out-dir")
    report = run_experiment(cfg, plot_data=args.plot_data)
    summary = {metric: [(m, report.mean(m, metric)) for m in order]
               for metric, order in report.ranking.items()}
    print(json.dumps(_jsonable({"ranking": summary, "out_dir": cfg.output_dir})))
    return 0


def cmd_quantile_study(args):
    cfg = _experiment(args)
    if cfg.output_dir is None:
        raise ConfigError("no output directory: set output_dir in the config or pass --out-dir")
    study = run_quantile_study(cfg, alpha=args.alpha, column=args.column)
    write_quantile_study(study, cfg.output_dir)
    print(json.dumps(_jsonable({k: study.mean(k) for k in study.estimates})))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="marimpute", description="MAR imputation experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="sample complete and masked data from a mechanism")
    g.add_argument("--mechanism", required=True)
    g.add_argument("--params", help="mechanism parameters as a JSON object")
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", required=True)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("impute", help="complete a CSV with NA cells by chained equations")
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--method", default=ModelKind.FOREST_SAMPLE.value,
                   help="one of " + ", ".join(k.value for k in ModelKind))
    i.add_argument("--params", help="model parameters as a JSON object")
    i.add_argument("--iters", type=int, default=10)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--chains", type=int, default=1)
    i.add_argument("--mechanism", help="mechanism name, needed by the true sampler")
    i.add_argument("--mechanism-params")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_impute)

    c = sub.add_parser("check", help="check a missingness condition by quadrature")
    c.add_argument("--mechanism", required=True)
    c.add_argument("--params")
    c.add_argument("--condition", required=True, help="one of " + ", ".join(x.value for x in Condition))
    c.add_argument("--grid", type=int, default=None, help="nodes per axis")
    c.add_argument("--j", type=int, default=None, help="column for OVERLAP (0-based)")
    c.add_argument("--tol", type=float, default=1e-6)
    c.set_defaults(func=cmd_check)

    for verb, func, helptext in (("bench", cmd_bench, "run a benchmark config"),
                                 ("quantile-study", cmd_quantile_study,
                                  "quantile estimation study on ex-fgm3")):
        b = sub.add_parser(verb, help=helptext)
        b.add_argument("--config", required=True)
        b.add_argument("--seed", type=int, default=None)
        b.add_argument("--jobs", type=int, default=None)
        b.add_argument("--out-dir", default=None)
        b.add_argument("--repetitions", type=int, default=None)
        b.add_argument("--iters", type=int, default=None)
        if verb == "bench":
            b.add_argument("--plot-data", action="store_true")
        else:
            b.add_argument("--alpha", type=float, default=0.1)
            b.add_argument("--column", type=int, default=0)
        b.set_defaults(func=func)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FcsError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
