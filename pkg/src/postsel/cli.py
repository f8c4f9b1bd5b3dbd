"""Command-line entry point.

Subcommands::

    postsel tmvn-sample   --spec SPEC.json -o draws.csv
    postsel normal-means  --data y.csv --config cfg.json -o estimates.csv
    postsel lasso-mle     --data xy.csv -o estimates.csv
    postsel simulate      --n 200 --p 50 --k 2 -o reps.csv
    postsel rerun         out.csv.manifest.json

Each run writes ``<output>.manifest.json`` next to its main output.  The
manifest records the resolved arguments (including the seed), so
``postsel rerun`` reproduces the outputs exactly.

Exit codes: 0 success, 1 internal error, 2 empty selection, 3 linear
algebra failure, 4 configuration or parse error.
"""

import argparse
import datetime
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .exceptions import (ConfigError, NoSelectionError, NotSelectedError, RankDeficientError,
                         ReplicateError, SingularCovarianceError)

EXIT_OK, EXIT_INTERNAL, EXIT_EMPTY, EXIT_LINALG, EXIT_CONFIG = 0, 1, 2, 3, 4
SEED_ENV = "POSTSEL_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None


def _check_seed(seed):
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")


def _manifest_path(output):
    return Path(f"{output}.manifest.json")


def _without_seed(argv):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--seed":
            skip = True
        elif not a.startswith("--seed="):
            out.append(a)
    return out


def _write_manifest(args, argv, seed, inputs, outputs, started, extra=None):
    resolved = _without_seed(argv) + ["--seed", str(seed)]
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config["seed"] = seed
    man = {
        "schema_version": io.SCHEMA_VERSION,
        "command": args.command,
        "argv": resolved,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()},
        "seed": seed,
        "version": _version(),
        "started": started,
        "finished": _now(),
        "inputs": {str(p): io.file_digest(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        man.update(extra)
    io.write_json(_manifest_path(outputs[0]), man)


def _alpha(value):
    a = float(value)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _positive_int(value):
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _ascent_options(args):
    from .ascent import AscentOptions
    kw = {"ci_level": 1.0 - args.alpha}
    if args.steps is not None:
        kw["n_steps"] = args.steps
    if args.samples is not None:
        kw["quantile_samples"] = args.samples
    return AscentOptions(**kw)


def cmd_tmvn_sample(args, argv):
    from .truncated_gaussian import feasible_point, sample_tmvn
    started = _now()
    seed = _resolve_seed(args.seed)
    _check_seed(seed)
    d = io.read_json(args.spec)
    if not isinstance(d, dict):
        raise io.ParseError(f"{args.spec}: expected a JSON object")
    spec, init = io.tmvn_spec_from_dict(d)
    if init is None:
        init = feasible_point(spec)
    draws = sample_tmvn(spec, init, args.samples, burn_in=args.burn_in, thin=args.thin,
                        rng=np.random.default_rng(seed))
    io.write_table(args.output, [f"x{j + 1}" for j in range(spec.dim)], draws)
    _write_manifest(args, argv, seed, [args.spec], [args.output], started)


def cmd_normal_means(args, argv):
    from .normal_means import fit_conditional_mle, naive_ci
    started = _now()
    seed = _resolve_seed(args.seed)
    _check_seed(seed)
    problem = io.normal_means_from_files(args.data, args.config)
    opts = _ascent_options(args)
    fit = fit_conditional_mle(problem, opts, np.random.default_rng(seed))
    M = fit.selected
    nlo, nhi = naive_ci(problem, args.alpha, M)
    header = ["index", "observed", "naive_lower", "naive_upper", "estimate", "ci_lower",
              "ci_upper", "score_residual", "score_stderr"]
    cols = [M, problem.y[M], nlo, nhi, fit.estimate[M], fit.ci_lower, fit.ci_upper,
            fit.score_residual, fit.score_stderr]
    h, table = io.read_table(args.data)
    if "mu" in h:
        header.append("true_mean")
        cols.append(table[M, h.index("mu")])
    io.write_table(args.output, header, zip(*cols))
    outputs = [args.output]
    if args.trajectory:
        io.write_table(args.trajectory, ["step"] + [f"mu_{j}" for j in M],
                       ([i + 1, *row] for i, row in enumerate(fit.trajectory)))
        outputs.append(args.trajectory)
    inputs = [args.data] + ([args.config] if args.config else [])
    _write_manifest(args, argv, seed, inputs, outputs, started,
                    {"selected": M.tolist(), "root_ratio": fit.root_ratio()})


def cmd_lasso_mle(args, argv):
    from .lasso_core import Dataset, cv_lambda, fit_lasso, refitted_ci, sigma2_lasso
    from .lasso_postsel import fit_lasso_mle
    started = _now()
    seed = _resolve_seed(args.seed)
    _check_seed(seed)
    cv_ss, fit_ss = np.random.SeedSequence(seed).spawn(2)
    sigma2 = None
    if args.sigma2 != "lasso":
        try:
            sigma2 = float(args.sigma2)
        except ValueError:
            raise ConfigError(f"--sigma2 must be 'lasso' or a number, got {args.sigma2!r}") from None
        if not (np.isfinite(sigma2) and sigma2 > 0):
            raise ConfigError("--sigma2 must be positive")
    X, y, names = io.read_xy(args.data)
    try:
        data = Dataset(X, y)
    except ValueError as exc:
        raise io.ParseError(f"{args.data}: {exc}") from exc
    if args.lam is not None:
        lam = args.lam
        if lam >= np.max(np.abs(X.T @ y)):
            raise NoSelectionError(f"empty model: lambda = {lam} >= ||X'y||_inf")
    else:
        lam = cv_lambda(data, folds=args.cv_folds, rule=args.lambda_rule,
                        rng=np.random.default_rng(cv_ss))
    lasso = fit_lasso(data, lam)
    M = lasso.active
    if M.size == 0:
        raise NoSelectionError(f"empty model: the lasso at lambda = {lam} selected nothing")
    sigma2 = sigma2_lasso(data, lasso) if sigma2 is None else sigma2
    opts = _ascent_options(args)
    fit = fit_lasso_mle(data, lam, sigma2, args.imputation, opts, np.random.default_rng(fit_ss),
                        lasso=lasso)
    rlo, rhi = refitted_ci(data, M, sigma2, args.alpha)
    header = ["variable", "index", "lasso", "refitted", "conditional", "ci_lower", "ci_upper",
              "refitted_lower", "refitted_upper", "score_residual", "score_stderr"]
    rows = [[names[j], j, fit.lasso_beta[i], fit.eta[i], fit.beta_hat[i], fit.ci_lower[i],
             fit.ci_upper[i], rlo[i], rhi[i], fit.score_residual[i], fit.score_stderr[i]]
            for i, j in enumerate(M)]
    io.write_table(args.output, header, rows)
    outputs = [args.output]
    if args.trajectory:
        io.write_table(args.trajectory, ["step"] + [names[j] for j in M],
                       ([i + 1, *row] for i, row in enumerate(fit.trajectory)))
        outputs.append(args.trajectory)
    _write_manifest(args, argv, seed, [args.data], outputs, started,
                    {"lambda": lam, "sigma2": sigma2, "selected": M.tolist(),
                     "root_ratio": fit.root_ratio(), "acceptance": fit.acceptance_stats})


def _sim_configs(args, seed):
    from .sim_harness import SimConfig
    if args.grid:
        d = io.read_json(args.grid)
        items = d.get("configs") if isinstance(d, dict) else d
        if not isinstance(items, list) or not items:
            raise io.ParseError(f"{args.grid}: expected a nonempty 'configs' list")
        configs = [SimConfig.from_dict(c) for c in items]
    elif args.config:
        d = io.read_json(args.config)
        if not isinstance(d, dict):
            raise io.ParseError(f"{args.config}: expected a JSON object")
        configs = [SimConfig.from_dict(d)]
    else:
        kw = {k: getattr(args, k) for k in ("n", "p", "k") if getattr(args, k) is not None}
        if len(kw) < 3:
            raise ConfigError("give --config, --grid, or all of --n --p --k")
        for k in ("rho", "snr", "reps", "lambda_rule", "cv_folds", "imputation"):
            if getattr(args, k) is not None:
                kw[k] = getattr(args, k)
        if args.methods:
            kw["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        if args.alpha is not None:
            kw["ci_level"] = 1.0 - args.alpha
        kw["seed"] = seed
        configs = [SimConfig(**kw)]
    for c in configs:
        if args.workers is not None:
            c.workers = args.workers
        if (args.grid or args.config) and args.seed is not None:
            c.seed = seed
    return configs


def cmd_simulate(args, argv):
    from .sim_harness import aggregate, run_simulation, write_aggregate_json, write_replicates_csv
    started = _now()
    seed = _resolve_seed(args.seed)
    _check_seed(seed)
    configs = _sim_configs(args, seed)
    out = Path(args.output)
    outputs, summary = [], []
    for i, cfg in enumerate(configs):
        csv_path = out if len(configs) == 1 else out.with_name(f"{out.stem}_{i}{out.suffix}")
        agg_path = csv_path.with_name(csv_path.stem + ".aggregate.json")
        results = run_simulation(cfg)
        agg = aggregate(results)
        write_replicates_csv(results, csv_path)
        write_aggregate_json(agg, agg_path, cfg)
        outputs += [csv_path, agg_path]
        summary.append({"coverage": agg.coverage, "n_null": agg.n_null,
                        "wall_time": float(sum(r.wall_time for r in results))})
        if not args.quiet:
            cov = ", ".join(f"{m} {v:.3f}" for m, v in agg.coverage.items())
            print(f"config {i}: {agg.n_reps} replicates, coverage: {cov or 'n/a'}", file=sys.stderr)
    inputs = [p for p in (args.grid, args.config) if p]
    _write_manifest(args, argv, seed, inputs, outputs, started,
                    {"summary": summary, "configs": [c.to_dict() for c in configs]})


def cmd_rerun(args, argv):
    man = io.read_json(args.manifest)
    try:
        rerun_argv = list(man["argv"])
    except (KeyError, TypeError):
        raise io.ParseError(f"{args.manifest}: no argv recorded") from None
    if args.output:
        rerun_argv += ["--output", args.output]
    return _dispatch(rerun_argv)


def build_parser():
    parser = _Parser(prog="postsel", description="Post-selection maximum likelihood inference.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, ascent=True):
        p.add_argument("-o", "--output", required=True, help="main output CSV")
        p.add_argument("--seed", type=int, default=None,
                       help=f"random seed (default: ${SEED_ENV}, else 0)")
        if ascent:
            p.add_argument("--alpha", type=_alpha, default=0.05, help="1 - confidence level")
            p.add_argument("--steps", type=_positive_int, default=None, help="ascent steps")
            p.add_argument("--samples", type=_positive_int, default=None,
                           help="draws for intervals and the score residual")
            p.add_argument("--trajectory", default=None, help="optional CSV of ascent iterates")

    p = sub.add_parser("tmvn-sample", help="Gibbs draws from a truncated multivariate normal")
    p.add_argument("--spec", required=True, help="JSON with mu, sigma, regions and optional init")
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--thin", type=_positive_int, default=1)
    common(p, ascent=False)
    p.set_defaults(func=cmd_tmvn_sample)

    p = sub.add_parser("normal-means", help="conditional MLE and intervals for selected means")
    p.add_argument("--data", required=True, help="CSV with column y (optional lower, upper, mu)")
    p.add_argument("--config", default=None, help="JSON with sigma and thresholds")
    common(p)
    p.set_defaults(func=cmd_normal_means)

    p = sub.add_parser("lasso-mle", help="conditional MLE and intervals after the lasso")
    p.add_argument("--data", required=True, help="CSV with the design columns and a y column")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed penalty")
    g.add_argument("--cv-folds", type=int, default=10, help="folds for choosing the penalty")
    p.add_argument("--lambda-rule", choices=("min", "1se"), default="min")
    p.add_argument("--sigma2", default="lasso", help="'lasso' or a positive number")
    p.add_argument("--imputation", choices=("zero", "plugin", "none"), default="zero")
    common(p)
    p.set_defaults(func=cmd_lasso_mle)

    p = sub.add_parser("simulate", help="replicated simulation of the lasso methods")
    p.add_argument("--config", default=None, help="simulation config JSON")
    p.add_argument("--grid", default=None, help="JSON with a list of configs run in turn")
    for name, typ in (("n", int), ("p", int), ("k", int), ("rho", float), ("snr", float),
                      ("reps", int), ("cv-folds", int)):
        p.add_argument(f"--{name}", type=typ, default=None)
    p.add_argument("--lambda-rule", choices=("min", "1se"), default=None)
    p.add_argument("--imputation", choices=("zero", "plugin", "none"), default=None)
    p.add_argument("--methods", default=None, help="comma list from lasso,refitted,conditional")
    p.add_argument("--alpha", type=_alpha, default=None)
    p.add_argument("--workers", type=_positive_int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("-o", "--output", required=True, help="replicate CSV (aggregate JSON beside it)")
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: ${SEED_ENV}, else 0)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", default=None, help="write to a different main output")
    p.set_defaults(func=cmd_rerun)
    return parser


def _exit_code(exc):
    if isinstance(exc, ReplicateError) and exc.__cause__ is not None:
        return _exit_code(exc.__cause__)
    if isinstance(exc, (NoSelectionError, NotSelectedError)):
        return EXIT_EMPTY
    if isinstance(exc, (RankDeficientError, SingularCovarianceError, np.linalg.LinAlgError)):
        return EXIT_LINALG
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    return EXIT_INTERNAL


def _dispatch(argv):
    args = build_parser().parse_args(argv)
    # rerun replays the stored argv, which already carries the seed
    if args.command == "rerun":
        return args.func(args, argv)
    args.func(args, [a for a in argv])
    return EXIT_OK


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return _dispatch(argv)
    except Exception as exc:  # noqa: BLE001 - mapped to the exit-code contract
        code = _exit_code(exc)
        label = "error" if code != EXIT_INTERNAL else "internal error"
        print(f"postsel: {label}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
