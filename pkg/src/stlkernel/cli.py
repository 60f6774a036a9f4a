"""Command-line driver: ``stlkernel <subcommand> ...``.

Every subcommand accepts ``--seed``, ``--config`` (a JSON object whose keys
fill in option defaults; explicit flags still win) and ``--out`` (stdout
when omitted). Library errors map to distinct exit codes; see
:mod:`stlkernel.errors`.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiment as ex
from . import kernel as K
from . import pac
from . import regression as reg
from . import semantics
from . import stl_ast as A
from .errors import StlKernelError
from .formula_sampler import SamplerParams, metadata, sample_formulae
from .ssa import BUILTIN_MODELS, load_model, simulate
from .trajectory import Mu0Params, dumps_csv, read_csv, sample_mu0, standardize

log = logging.getLogger("stlkernel")

SCHEMAS = {
    "cli": {"version": 1, "subcommands": [
        "sample-trajectories", "sample-formulae", "simulate", "robustness", "gram",
        "train", "predict", "evaluate", "pac-bound", "run-experiment"]},
    "trajectory-csv": {"version": 1, "header": "t,x0,...,x{n-1}",
                       "blocks": "'# trajectory k' comment line, then N+1 rows on a uniform grid"},
    "formula-list": {"version": 1, "layout": "one formula per line; blank and '#' lines ignored"},
    "gram": {"version": 1, "format": "stlkernel-gram/1",
             "layout": "JSON header line (config, bank_id, square, formulae, hashes, shape), "
                       "CSV rows, optional '# normalized' section with k0 rows"},
    "model": {"version": 1, "format": "stlkernel-krr/1",
              "fields": ["formulae", "alpha", "lambda", "config", "bank_id",
                         "gram_fingerprint", "label_kind"]},
    "metrics": {"version": 1, "fields": ["mse", "mae", "mre", "accuracy", "RE", "AE", "n",
                                         "n_zero_truth"],
                "quantiles": [name for name, _ in reg.QUANTILES]},
    "experiment-config": {"version": 1,
                          "fields": sorted(ex.ExperimentConfig.__dataclass_fields__),
                          "tasks": list(ex.TASKS)},
    "results": {"version": 1, "format": ex.RESULTS_FORMAT,
                "fields": ["format", "config", "switches", "repetitions", "failures", "aggregate"]},
    "pac": {"version": 1, "fields": ["Lambda", "delta", "m", "r", "M_bound", "empirical_risk",
                                     "classification_bound", "regression_bound",
                                     "target_slack", "min_samples"]},
}


# -- helpers ------------------------------------------------------------------------

def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_formulae(path):
    return A.parse_lines(Path(path).read_text())


def _formula_text(formulae) -> str:
    return "".join(A.to_text(f) + "\n" for f in formulae)


def _kernel_config(args) -> K.KernelConfig:
    return K.KernelConfig(variant=args.variant, sigma=args.sigma, timing=args.timing,
                          robustness_kind=args.robustness_kind, exp_mode=args.exp_mode,
                          time_range=args.time_range)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _read_values(path) -> np.ndarray:
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            values.append(float(line))
    return np.array(values)


def _values_text(values) -> str:
    return "".join(repr(float(v)) + "\n" for v in values)


# -- subcommands --------------------------------------------------------------------

def cmd_sample_trajectories(args):
    params = Mu0Params(a=args.a, b=args.b, delta=args.delta, m_start=args.m_start,
                       s_start=args.s_start, m_tv=args.m_tv, s_tv=args.s_tv, q=args.q,
                       dim=args.dim)
    bank = sample_mu0(params, args.count, args.seed)
    if args.standardize:
        bank = standardize(bank)
    _emit(dumps_csv(bank), args.out)


def cmd_sample_formulae(args):
    params = SamplerParams(p_leaf=args.p_leaf, t_max=args.t_max, dim=args.dim, seed=args.seed,
                           max_depth=args.max_depth)
    formulae = sample_formulae(params, args.count)
    header = "# " + json.dumps({**metadata(params), "seed": args.seed}) + "\n"
    _emit(header + _formula_text(formulae), args.out)


def cmd_simulate(args):
    bank = simulate(load_model(args.model), args.count, args.seed)
    if args.standardize:
        bank = standardize(bank)
    _emit(dumps_csv(bank), args.out)


def cmd_robustness(args):
    if bool(args.formula) == bool(args.formulae):
        raise SystemExit("robustness: give exactly one of --formula or --formulae")
    formulae = [A.parse(args.formula)] if args.formula else _read_formulae(args.formulae)
    bank = read_csv(args.trajectory)
    lines = []
    for f in formulae:
        if args.boolean:
            vals = [str(semantics.satisfies(f, xi, args.t)).lower() for xi in bank]
        else:
            vals = [repr(semantics.robustness(f, xi, args.t, args.kind)) for xi in bank]
        lines.append(",".join(vals))
    _emit("\n".join(lines) + "\n", args.out)


def cmd_gram(args):
    bank = read_csv(args.bank)
    fa = _read_formulae(args.formulae)
    fb = _read_formulae(args.formulae_b) if args.formulae_b else None
    config = _kernel_config(args)
    feats_a = K.Features(fa, bank, config)
    feats_b = None if fb is None else K.Features(fb, bank, config)
    clamped = feats_a.clamped + (0 if feats_b is None else feats_b.clamped)
    if clamped:
        print(f"note: {clamped} formula(e) needed windows clamped at the trajectory end",
              file=sys.stderr)
    _emit(K.dumps_gram(K.gram_from_features(feats_a, feats_b, config)), args.out)


def cmd_train(args):
    train_f = _read_formulae(args.formulae)
    label_bank = read_csv(args.label_bank)
    train = reg.make_labels(train_f, label_bank, args.label_kind, args.trajectory_index)
    config = _kernel_config(args)
    if args.val_formulae:
        if not args.kernel_bank:
            raise SystemExit("train: --val-formulae needs --kernel-bank")
        kernel_bank = read_csv(args.kernel_bank)
        val = reg.make_labels(_read_formulae(args.val_formulae), label_bank, args.label_kind,
                              args.trajectory_index)
        model, sel, _ = ex.tune_and_fit(train, val, kernel_bank, config,
                                        _floats(args.sigma_grid), _floats(args.lambda_grid))
        log.info("selected sigma=%s lambda=%s (validation mse %.4g)", sel.sigma, sel.lam, sel.mse)
    else:
        if args.gram:
            g = K.load_gram(args.gram)
        elif args.kernel_bank:
            g = K.gram(train_f, None, read_csv(args.kernel_bank), config)
        else:
            raise SystemExit("train: give --gram or --kernel-bank")
        model = reg.fit(train, g, args.lam)
    _emit(json.dumps(model.to_dict(), indent=1) + "\n", args.out)


def cmd_predict(args):
    model = reg.KrrModel.from_dict(json.loads(Path(args.model).read_text()))
    bank = read_csv(args.kernel_bank)
    preds = reg.predict(model, _read_formulae(args.formulae), bank)
    _emit(_values_text(preds), args.out)


def cmd_evaluate(args):
    preds = _read_values(args.predictions)
    if args.truths:
        truths = _read_values(args.truths)
    elif args.formulae and args.label_bank:
        truths = reg.make_labels(_read_formulae(args.formulae), read_csv(args.label_bank),
                                 args.label_kind, args.trajectory_index).labels
    else:
        raise SystemExit("evaluate: give --truths or --formulae with --label-bank")
    report = reg.evaluate(preds, truths, args.label_kind)
    _emit(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", args.out)


def cmd_pac_bound(args):
    data = pac.report(args.Lambda, args.delta, args.m, args.r, args.M_bound,
                      args.empirical_risk, args.target_slack)
    _emit(json.dumps(data, indent=1) + "\n", args.out)


def cmd_run_experiment(args):
    data = dict(args.config_data or {})
    for key in ("task", "model", "repetitions", "workers", "n_train", "n_val", "n_test",
                "kernel_bank_size", "label_bank_size"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = ex.ExperimentConfig.from_dict(data)
    results = ex.run_experiment(cfg)
    _emit(ex.dumps_results(results), args.out)
    if args.emit_quantiles_csv:
        Path(args.emit_quantiles_csv).write_text(ex.quantiles_csv(results))
    if results["failures"]:
        log.warning("%d of %d repetitions failed", results["failures"], cfg.repetitions)


# -- parser -------------------------------------------------------------------------

def _common(p, seed_default=0):
    p.add_argument("--seed", type=int, default=seed_default, help="random seed")
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--out", help="output path (default: stdout)")


def _kernel_opts(p):
    p.add_argument("--variant", default=K.EXPONENTIAL, choices=(K.RAW, K.NORMALIZED, K.EXPONENTIAL))
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--timing", default=K.UNTIMED, choices=(K.UNTIMED, K.TIMED))
    p.add_argument("--robustness-kind", default=semantics.NORMALIZED, choices=semantics.KINDS)
    p.add_argument("--exp-mode", default=K.PRINTED, choices=(K.PRINTED, K.GAUSSIAN))
    p.add_argument("--time-range", default="clamped", choices=("clamped", "unclamped"))


def _label_opts(p, required=True):
    p.add_argument("--label-kind", required=required, choices=reg.LABEL_KINDS)
    p.add_argument("--trajectory-index", type=int, default=0,
                   help="trajectory used for rho / rho_hat labels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stlkernel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--schema", action="store_true", help="print file and JSON schemas")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("sample-trajectories", help="draw trajectories from the base measure")
    _common(p)
    p.add_argument("--count", type=int, default=1000)
    defaults = Mu0Params()
    for name in ("a", "b", "delta", "m_start", "s_start", "m_tv", "s_tv", "q"):
        p.add_argument("--" + name.replace("_", "-"), type=float, default=getattr(defaults, name))
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--standardize", action="store_true")
    p.set_defaults(func=cmd_sample_trajectories)

    p = sub.add_parser("sample-formulae", help="draw random formulae")
    _common(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--p-leaf", type=float, default=0.5)
    p.add_argument("--t-max", type=int, default=10)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--max-depth", type=int, default=SamplerParams().max_depth)
    p.set_defaults(func=cmd_sample_formulae)

    p = sub.add_parser("simulate", help="Gillespie simulation of a reaction network")
    _common(p)
    p.add_argument("--model", required=True, help=f"JSON path or one of {', '.join(BUILTIN_MODELS)}")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--standardize", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("robustness", help="robustness or satisfaction on a trajectory CSV")
    _common(p)
    p.add_argument("--formula")
    p.add_argument("--formulae", help="file with one formula per line")
    p.add_argument("--trajectory", required=True, help="trajectory CSV (one or more blocks)")
    p.add_argument("--t", type=int, default=0, help="grid index")
    p.add_argument("--kind", default=semantics.STANDARD, choices=semantics.KINDS)
    p.add_argument("--boolean", action="store_true", help="print satisfaction instead")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("gram", help="kernel Gram matrix")
    _common(p)
    p.add_argument("--formulae", required=True)
    p.add_argument("--formulae-b", help="second formula list for a cross Gram matrix")
    p.add_argument("--bank", required=True, help="kernel trajectory bank CSV")
    _kernel_opts(p)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("train", help="fit kernel ridge regression")
    _common(p)
    p.add_argument("--formulae", required=True, help="training formulae")
    p.add_argument("--label-bank", required=True)
    _label_opts(p)
    p.add_argument("--kernel-bank")
    p.add_argument("--gram", help="precomputed square Gram matrix of the training formulae")
    p.add_argument("--val-formulae", help="tune sigma and lambda on these formulae")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-2)
    p.add_argument("--sigma-grid", default=",".join(map(str, reg.DEFAULT_SIGMA_GRID)))
    p.add_argument("--lambda-grid", default=",".join(map(str, reg.DEFAULT_LAMBDA_GRID)))
    _kernel_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict with a trained model")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--formulae", required=True)
    p.add_argument("--kernel-bank", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="error metrics of predictions")
    _common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--truths", help="file with one true value per line")
    p.add_argument("--formulae", help="compute truths from these formulae ...")
    p.add_argument("--label-bank", help="... on this bank")
    _label_opts(p, required=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pac-bound", help="PAC bounds and sample size")
    _common(p)
    p.add_argument("--lambda", dest="Lambda", type=float, required=True, help="RKHS norm cap")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--M", dest="M_bound", type=float, default=1.0)
    p.add_argument("--empirical-risk", type=float, default=0.0)
    p.add_argument("--target-slack", type=float)
    p.set_defaults(func=cmd_pac_bound)

    p = sub.add_parser("run-experiment", help="full train / tune / test pipeline")
    _common(p, seed_default=None)
    p.add_argument("--task", choices=ex.TASKS)
    p.add_argument("--model")
    for name in ("repetitions", "workers", "n_train", "n_val", "n_test",
                 "kernel_bank_size", "label_bank_size"):
        p.add_argument("--" + name.replace("_", "-"), type=int)
    p.add_argument("--emit-quantiles-csv", help="write the error-quantile table as CSV here")
    p.set_defaults(func=cmd_run_experiment)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.schema:
        print(json.dumps(SCHEMAS, indent=1))
        return 0
    if args.command is None:
        parser.print_help()
        return 1
    try:
        config_data = None
        if args.config:
            config_data = json.loads(Path(args.config).read_text())
            if not isinstance(config_data, dict):
                raise SystemExit("--config must hold a JSON object")
            if args.command != "run-experiment":
                sub = _subparser(parser, args.command)
                known = {a.dest for a in sub._actions}
                unknown = set(config_data) - known
                if unknown:
                    raise SystemExit(f"unknown config keys: {sorted(unknown)}")
                sub.set_defaults(**config_data)
                args = parser.parse_args(argv)
        args.config_data = config_data
        args.func(args)
    except StlKernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
