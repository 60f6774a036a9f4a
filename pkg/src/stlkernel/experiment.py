"""End-to-end regression experiments over random formulae.

One repetition samples formulae, builds a label bank and a kernel bank,
computes the Gram matrices, tunes (sigma, lambda) on a validation split,
fits, predicts on a test split and evaluates. Every random choice comes
from a named stream derived from the master seed and the repetition index,
so the per-repetition seeds printed in the results reproduce each step with
the standalone CLI subcommands.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import pac
from . import regression as reg
from .errors import StlKernelError
from .formula_sampler import OPERATORS, SamplerParams, sample_formulae
from .kernel import Features, KernelConfig, gram_from_features
from .rng import derive_seed
from .semantics import TT_ROBUSTNESS
from .ssa import load_model, simulate
from .trajectory import Mu0Params, sample_mu0, standardize

log = logging.getLogger(__name__)

RESULTS_FORMAT = "stlkernel-results/1"

SINGLE = "SingleTrajectory"
EXPECTED = "ExpectedRobustness"
SATISFACTION = "SatisfactionProbability"
CROSS = "CrossProcess"
TASKS = (SINGLE, EXPECTED, SATISFACTION, CROSS)

DEFAULT_LABELS = {
    SINGLE: (reg.RHO, reg.RHO_HAT),
    EXPECTED: (reg.EXPECTED, reg.EXPECTED_HAT),
    SATISFACTION: (reg.SAT_PROB,),
    CROSS: (reg.EXPECTED, reg.EXPECTED_HAT, reg.SAT_PROB),
}

STREAMS = ("formulae", "kernel_bank", "label_bank", "ssa")


@dataclass
class ExperimentConfig:
    task: str = EXPECTED
    labels: Optional[list] = None  # defaults per task, see DEFAULT_LABELS
    sampler: dict = field(default_factory=lambda: {"p_leaf": 0.5, "t_max": 10, "dim": 1})
    mu0: dict = field(default_factory=dict)
    model: Optional[str] = None  # SSA model (CrossProcess only)
    cross_kernel: str = "base"  # "base" = mu0 kernel bank, "custom" = the process itself
    kernel_bank_size: int = 1000
    label_bank_size: int = 5000
    n_train: int = 1000
    n_val: int = 200
    n_test: int = 1000
    kernel: dict = field(default_factory=dict)
    sigma_grid: list = field(default_factory=lambda: list(reg.DEFAULT_SIGMA_GRID))
    lambda_grid: list = field(default_factory=lambda: list(reg.DEFAULT_LAMBDA_GRID))
    repetitions: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        for name in ("n_train", "n_val", "n_test", "kernel_bank_size", "label_bank_size",
                     "repetitions", "workers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.task == CROSS and not self.model:
            raise ValueError("CrossProcess needs an SSA model")
        if self.cross_kernel not in ("base", "custom"):
            raise ValueError("cross_kernel must be 'base' or 'custom'")
        if self.labels is None:
            self.labels = list(DEFAULT_LABELS[self.task])
        for kind in self.labels:
            if kind not in reg.LABEL_KINDS:
                raise ValueError(f"unknown label kind {kind!r}")
        KernelConfig(**self.kernel)
        Mu0Params(**self.mu0)  # validates

    @property
    def kernel_config(self) -> KernelConfig:
        return KernelConfig(**self.kernel)

    def sampler_params(self, seed, dim=None) -> SamplerParams:
        opts = dict(self.sampler)
        if dim is not None:
            opts["dim"] = dim
        return SamplerParams(seed=seed, **opts)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**data)


def repetition_seeds(master, rep) -> dict:
    return {name: derive_seed(master, "repetition", rep, name) for name in STREAMS}


def switches(cfg: ExperimentConfig) -> dict:
    """Settings the results depend on that are easy to overlook."""
    kc = cfg.kernel_config
    return {
        "exp_mode": kc.exp_mode,
        "timed_normalization": "divide by |I| = N * delta",
        "time_range": kc.time_range,
        "operators": list(cfg.sampler.get("operators", OPERATORS)),
        "max_depth": cfg.sampler_params(0).max_depth,
        "validation": "fresh formulae, disjoint from train and test",
        "splits": "contiguous slices of one formula stream: train, validation, test",
        "tt_robustness": TT_ROBUSTNESS,
    }


def _banks(cfg: ExperimentConfig, seeds: dict):
    """Return ``(kernel_bank, label_bank, dim)`` for one repetition."""
    if cfg.task == CROSS:
        model = load_model(cfg.model)
        labels = standardize(simulate(model, cfg.label_bank_size, seeds["ssa"]))
        if cfg.cross_kernel == "custom":
            kernel = standardize(simulate(model, cfg.kernel_bank_size, seeds["kernel_bank"]))
        else:
            mu0 = Mu0Params(**{**cfg.mu0, "dim": model.dim})
            kernel = sample_mu0(mu0, cfg.kernel_bank_size, seeds["kernel_bank"])
        return kernel, labels, model.dim
    dim = int(cfg.sampler.get("dim", 1))
    mu0 = Mu0Params(**{**cfg.mu0, "dim": dim})
    kernel = sample_mu0(mu0, cfg.kernel_bank_size, seeds["kernel_bank"])
    count = 1 if cfg.task == SINGLE else cfg.label_bank_size
    labels = sample_mu0(mu0, count, seeds["label_bank"])
    return kernel, labels, dim


def split_formulae(cfg: ExperimentConfig, formulae):
    a, b = cfg.n_train, cfg.n_train + cfg.n_val
    return formulae[:a], formulae[a:b], formulae[b:b + cfg.n_test]


def tune_and_fit(train, val, kernel_bank, config, sigma_grid, lambda_grid,
                 train_features=None, val_features=None, square=None):
    """Select (sigma, lambda) on ``val`` and fit on ``train``.

    Returns ``(model, selection, gram)`` where ``gram`` is the training Gram
    matrix at the selected sigma.
    """
    if train_features is None:
        train_features = Features(train.formulae, kernel_bank, config)
    sel = reg.select_hyperparams(train, val, kernel_bank, config, sigma_grid, lambda_grid,
                                 train_features, val_features)
    if square is None:
        square = gram_from_features(train_features, None, config)
    chosen = config if sel.sigma is None else config.with_sigma(sel.sigma)
    K = square if chosen == config else square.with_config(chosen)
    model = reg.fit(train, K, sel.lam, features=train_features)
    return model, sel, K


def run_repetition(cfg: ExperimentConfig, rep: int) -> dict:
    seeds = repetition_seeds(cfg.seed, rep)
    record = {"repetition": rep, "seeds": seeds}
    try:
        kernel_bank, label_bank, dim = _banks(cfg, seeds)
        total = cfg.n_train + cfg.n_val + cfg.n_test
        formulae = sample_formulae(cfg.sampler_params(seeds["formulae"], dim), total)
        train_f, val_f, test_f = split_formulae(cfg, formulae)
        config = cfg.kernel_config
        feats = [Features(fs, kernel_bank, config) for fs in (train_f, val_f, test_f)]
        square = gram_from_features(feats[0], None, config)
        cross = gram_from_features(feats[2], feats[0], config)
        metrics = {}
        for kind in cfg.labels:
            train = reg.make_labels(train_f, label_bank, kind)
            val = reg.make_labels(val_f, label_bank, kind)
            test = reg.make_labels(test_f, label_bank, kind)
            model, sel, K = tune_and_fit(train, val, kernel_bank, config, cfg.sigma_grid,
                                         cfg.lambda_grid, feats[0], feats[1], square)
            Kx = cross if model.config == config else cross.with_config(model.config)
            pred = reg.predict_with_gram(model, Kx)
            report = reg.evaluate(pred, test.labels, kind).to_dict()
            report.update(sigma=sel.sigma, **{"lambda": sel.lam},
                          rkhs_norm=pac.rkhs_norm(model, K),
                          gram_fingerprint=model.gram_fingerprint)
            metrics[kind] = report
        record.update(status="ok", kernel_bank_id=kernel_bank.fingerprint,
                      label_bank_id=label_bank.fingerprint, metrics=metrics)
    except (StlKernelError, ValueError, ArithmeticError) as exc:
        log.warning("repetition %d failed: %s", rep, exc)
        record.update(status="error", error={"type": type(exc).__name__, "message": str(exc)})
    return record


def _run_one(args):
    cfg_dict, rep = args
    return run_repetition(ExperimentConfig.from_dict(cfg_dict), rep)


def aggregate(records, labels) -> dict:
    """Median and mean over repetitions of each summary statistic, per label kind."""
    out = {}
    ok = [r for r in records if r["status"] == "ok"]
    for kind in labels:
        reports = [r["metrics"][kind] for r in ok]
        if not reports:
            continue
        entry = {}
        for metric in ("mse", "mae", "mre", "accuracy", "rkhs_norm"):
            vals = [rep[metric] for rep in reports if rep.get(metric) is not None]
            if vals:
                entry[metric] = {"median": float(np.median(vals)), "mean": float(np.mean(vals))}
        for err in ("RE", "AE"):
            entry[err] = {}
            for name, _ in reg.QUANTILES:
                vals = [rep[err][name] for rep in reports]
                entry[err][name] = {"median": float(np.median(vals)), "mean": float(np.mean(vals))}
        out[kind] = entry
    return out


def run_experiment(cfg: ExperimentConfig) -> dict:
    jobs = [(cfg.to_dict(), rep) for rep in range(cfg.repetitions)]
    if cfg.workers > 1 and cfg.repetitions > 1:
        with multiprocessing.Pool(min(cfg.workers, cfg.repetitions)) as pool:
            records = pool.map(_run_one, jobs)
    else:
        records = [run_repetition(cfg, rep) for rep in range(cfg.repetitions)]
    records.sort(key=lambda r: r["repetition"])
    failures = sum(r["status"] != "ok" for r in records)
    resolved = replace(cfg).to_dict()
    resolved["kernel"] = cfg.kernel_config.to_dict()
    return {
        "format": RESULTS_FORMAT,
        "config": resolved,
        "switches": switches(cfg),
        "repetitions": records,
        "failures": failures,
        "aggregate": aggregate(records, cfg.labels),
    }


def dumps_results(results) -> str:
    return json.dumps(results, indent=1, sort_keys=True) + "\n"


def quantiles_csv(results, statistic="mean") -> str:
    """Error-quantile table as CSV: one row per (label kind, error type) with quantile columns."""
    names = [name for name, _ in reg.QUANTILES]
    lines = ["label,error," + ",".join(names)]
    for kind, entry in results["aggregate"].items():
        for err in ("RE", "AE"):
            cells = [repr(entry[err][n][statistic]) for n in names]
            lines.append(f"{kind},{err}," + ",".join(cells))
    return "\n".join(lines) + "\n"
