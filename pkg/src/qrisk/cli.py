"""``qrisk`` command line entry point.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from . import harness, oracle
from .cv import kfold_cv
from .dgp import Dataset, DgpSpec, sample
from .errors import NumericalError, QriskError
from .optimism import KAPPA_RULES, debiased_risk
from .solver import ModelSpec, fit


class UsageError(QriskError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _g(v):
    return format(float(v), ".17g")


def _header(args, names):
    lines = [f"# command = {args.command}"]
    for name in names:
        lines.append(f"# {name} = {getattr(args, name)}")
    return "\n".join(lines) + "\n"


def _load(path):
    with open(path, newline="") as fh:
        return Dataset.from_csv(fh)


def _model(args):
    try:
        return ModelSpec.parse(args.cols, intercept=args.intercept)
    except ValueError as err:
        raise UsageError(str(err)) from err


def cmd_simulate(args):
    data = sample(DgpSpec(args.dgp, args.n, args.p, args.seed))
    return _header(args, ["dgp", "n", "p", "seed"]) + data.to_csv()


def cmd_fit(args):
    data = _load(args.data)
    model = _model(args)
    f = fit(data, model, args.tau, tol=args.tol, max_iter=args.max_iter, crossover=args.crossover)
    names = (["theta_intercept"] if model.intercept else []) + [f"theta_z{i}" for i in model.indices]
    head = ["tau", "model", "objective", "duality_gap", "iterations"] + names
    vals = [_g(args.tau), model.label(), _g(f.objective), _g(f.duality_gap), str(f.iterations)]
    vals += [_g(t) for t in f.theta]
    return (_header(args, ["data", "tau", "cols", "intercept", "tol", "max_iter", "crossover"])
            + ",".join(head) + "\n" + ",".join(vals) + "\n")


def cmd_risk(args):
    data = _load(args.data)
    model = _model(args)
    f = fit(data, model, args.tau)
    rep = debiased_risk(data, model, f, h=args.bandwidth, kappa_rule=args.kappa_rule)
    est = rep.estimate
    head = "tau,model,h,in_sample,b_hat,pr_debiased,d0_min_eig"
    vals = [_g(args.tau), model.label(), _g(est.bandwidth.c), _g(rep.in_sample), _g(rep.b_hat),
            _g(rep.pr_debiased), _g(est.d0_min_eig)]
    return (_header(args, ["data", "tau", "cols", "intercept", "bandwidth", "kappa_rule"])
            + head + "\n" + ",".join(vals) + "\n")


def cmd_cv(args):
    data = _load(args.data)
    model = _model(args)
    est = kfold_cv(data, model, args.tau, args.k, args.seed)
    head = "tau,model,k,cv_risk,cv_optimism,in_sample"
    vals = [_g(args.tau), model.label(), str(est.k), _g(est.cv_risk), _g(est.cv_optimism), _g(est.in_sample)]
    return (_header(args, ["data", "tau", "cols", "intercept", "k", "seed"])
            + head + "\n" + ",".join(vals) + "\n")


def cmd_oracle(args):
    model = _model(args)
    spec = DgpSpec(args.dgp, args.n, args.p, args.seed)
    res = oracle.mc_risk(spec, model, args.tau, reps=args.reps, eval_samples=args.eval_samples,
                         seed=args.seed, workers=args.workers)
    head = "tau,model,n,reps,eval_samples,pr,pr_se,optimism,optimism_se"
    vals = [_g(args.tau), model.label(), str(args.n), str(res.reps), str(res.eval_samples),
            _g(res.pr), _g(res.pr_se), _g(res.optimism), _g(res.optimism_se)]
    return (_header(args, ["dgp", "tau", "cols", "intercept", "n", "p", "reps", "eval_samples", "seed"])
            + head + "\n" + ",".join(vals) + "\n")


def cmd_experiment(args):
    try:
        with open(args.config) as fh:
            cfg = harness.parse_config(fh.read(), seed=args.seed)
    except (OSError, ValueError) as err:
        raise UsageError(str(err)) from err
    if cfg.seed is None:
        raise UsageError("experiment needs a seed (config key 'seed' or --seed)")
    if args.out is None and cfg.out:
        args.out = cfg.out
    try:
        rows = harness.run_experiment(cfg, workers=args.workers)
    except harness.ExperimentFailure as err:
        _emit(args, harness.format_rows([], cfg, failure=str(err)))
        raise
    return harness.format_rows(rows, cfg)


def _add_model_flags(p):
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--cols", default="", help="comma-separated 1-based predictor columns")
    p.add_argument("--intercept", dest="intercept", action="store_true", default=True)
    p.add_argument("--no-intercept", dest="intercept", action="store_false")


def build_parser():
    parser = _Parser(prog="qrisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed_required=False, workers=False):
        p.add_argument("--out", default=None, help="write output here instead of stdout")
        if seed_required:
            p.add_argument("--seed", type=int, required=True)
        if workers:
            p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="draw a dataset from one of the designs")
    p.add_argument("--dgp", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, default=50)
    common(p, seed_required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a linear quantile regression")
    p.add_argument("--data", required=True)
    _add_model_flags(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--crossover", action="store_true")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("risk", help="de-biased predictive risk of one model")
    p.add_argument("--data", required=True)
    _add_model_flags(p)
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--kappa-rule", choices=KAPPA_RULES, default="literal")
    common(p)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("cv", help="k-fold cross-validated risk and optimism")
    p.add_argument("--data", required=True)
    _add_model_flags(p)
    p.add_argument("--k", type=int, default=10)
    common(p, seed_required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("oracle", help="Monte Carlo predictive risk and expected optimism")
    p.add_argument("--dgp", required=True)
    _add_model_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--reps", type=int, default=oracle.DEFAULT_REPS)
    p.add_argument("--eval-samples", type=int, default=oracle.DEFAULT_EVAL)
    common(p, seed_required=True, workers=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiment", help="run a replicated experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common(p, workers=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def _emit(args, text):
    if getattr(args, "out", None):
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        text = args.func(args)
    except UsageError as err:
        sys.stderr.write(str(err).rstrip("\n") + "\n")
        return 1
    except NumericalError as err:
        sys.stderr.write(f"qrisk: {err}\n")
        return 2
    except (ValueError, OSError) as err:
        sys.stderr.write(f"qrisk: {err}\n")
        return 1
    _emit(args, text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
