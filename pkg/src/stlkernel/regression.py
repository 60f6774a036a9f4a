"""Kernel ridge regression over formula space.

Labels are robustness-derived quantities of each formula on a label bank;
the kernel is evaluated on a separate kernel bank. A fitted model keeps the
kernel bank fingerprint and refuses to predict with any other bank.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from . import semantics
from . import stl_ast as A
from .errors import ConditioningError, FingerprintMismatchError
from .kernel import EXPONENTIAL, Features, GramMatrix, KernelConfig, gram_from_features

log = logging.getLogger(__name__)

RHO = "rho"
RHO_HAT = "rho_hat"
EXPECTED = "R"
EXPECTED_HAT = "R_hat"
SAT_PROB = "S"
LABEL_KINDS = (RHO, RHO_HAT, EXPECTED, EXPECTED_HAT, SAT_PROB)
SIGN_TASKS = (RHO, RHO_HAT)

QUANTILES = (("5perc", 0.05), ("1quart", 0.25), ("median", 0.5),
             ("3quart", 0.75), ("95perc", 0.95), ("99perc", 0.99))

DEFAULT_SIGMA_GRID = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
DEFAULT_LAMBDA_GRID = (1e-8, 1e-6, 1e-4, 1e-2)


@dataclass
class TrainingSet:
    formulae: list
    labels: np.ndarray
    label_kind: str
    label_bank_id: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        if len(self.formulae) != len(self.labels):
            raise ValueError("need exactly one label per formula")
        if not np.all(np.isfinite(self.labels)):
            raise ValueError("labels must be finite")
        if self.label_kind not in LABEL_KINDS:
            raise ValueError(f"unknown label kind {self.label_kind!r}")
        if self.label_kind == SAT_PROB and (self.labels.min() < 0 or self.labels.max() > 1):
            raise ValueError("satisfaction probabilities must lie in [0, 1]")

    def __len__(self):
        return len(self.formulae)


def make_labels(formulae, bank, label_kind, trajectory_index=0) -> TrainingSet:
    """Targets for each formula at t=0.

    ``rho``/``rho_hat`` use the single trajectory ``bank[trajectory_index]``;
    ``R``/``R_hat`` average robustness over the bank; ``S`` is the fraction
    of bank trajectories that satisfy the formula.
    """
    formulae = list(formulae)
    if label_kind in SIGN_TASKS:
        kind = semantics.STANDARD if label_kind == RHO else semantics.NORMALIZED
        one = bank.values[trajectory_index:trajectory_index + 1]
        labels = semantics.robustness_at_zero(formulae, one, kind)[0]
    elif label_kind in (EXPECTED, EXPECTED_HAT):
        kind = semantics.STANDARD if label_kind == EXPECTED else semantics.NORMALIZED
        labels = semantics.robustness_at_zero(formulae, bank, kind).mean(axis=0)
    elif label_kind == SAT_PROB:
        labels = semantics.satisfaction_at_zero(formulae, bank).mean(axis=0)
    else:
        raise ValueError(f"unknown label kind {label_kind!r}")
    return TrainingSet(formulae, labels, label_kind, bank.fingerprint)


@dataclass
class KrrModel:
    formulae: list
    alpha: np.ndarray
    lam: float
    config: KernelConfig
    bank_id: str
    gram_fingerprint: str = ""
    label_kind: str = ""
    features: Optional[Features] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "format": "stlkernel-krr/1",
            "formulae": [A.to_text(f) for f in self.formulae],
            "alpha": [float(a) for a in self.alpha],
            "lambda": self.lam,
            "config": self.config.to_dict(),
            "bank_id": self.bank_id,
            "gram_fingerprint": self.gram_fingerprint,
            "label_kind": self.label_kind,
        }

    @classmethod
    def from_dict(cls, data) -> "KrrModel":
        return cls(
            formulae=[A.parse(t) for t in data["formulae"]],
            alpha=np.array(data["alpha"], dtype=float),
            lam=float(data["lambda"]),
            config=KernelConfig.from_dict(data["config"]),
            bank_id=data["bank_id"],
            gram_fingerprint=data.get("gram_fingerprint", ""),
            label_kind=data.get("label_kind", ""),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "KrrModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def solve_krr(K, y, lam) -> np.ndarray:
    """Solve ``(K + lam I) alpha = y`` by Cholesky with a residual check."""
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ValueError("ridge strength must be nonnegative")
    system = K + lam * np.eye(len(K))
    try:
        factor = linalg.cho_factor(system, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise ConditioningError(
            f"K + {lam:g} I is not positive definite; try a larger ridge") from None
    alpha = linalg.cho_solve(factor, y)
    bound = 1e-8 * max(np.linalg.norm(y), np.finfo(float).tiny)
    residual = system @ alpha - y
    if np.linalg.norm(residual) > bound:
        # one step of iterative refinement before giving up
        alpha = alpha - linalg.cho_solve(factor, residual)
        residual = system @ alpha - y
        if not np.linalg.norm(residual) <= bound:
            raise ConditioningError(
                f"ill-conditioned system at ridge {lam:g} (residual "
                f"{np.linalg.norm(residual):.3g}); try a larger ridge")
    return alpha


def fit(train: TrainingSet, gram: GramMatrix, lam: float, features=None) -> KrrModel:
    if not gram.square or len(gram.formulae_a) != len(train):
        raise ValueError("fit needs the square Gram matrix of the training formulae")
    if gram.formulae_a is not train.formulae and gram.formulae_a != train.formulae:
        raise ValueError("Gram matrix was built on different formulae than the training set")
    alpha = solve_krr(gram.entries, train.labels, lam)
    return KrrModel(list(train.formulae), alpha, float(lam), gram.config, gram.bank_id,
                    gram.fingerprint(), train.label_kind, features)


def predict_with_gram(model: KrrModel, cross: GramMatrix) -> np.ndarray:
    """Predictions from a (test x train) cross Gram matrix."""
    if cross.bank_id != model.bank_id:
        raise FingerprintMismatchError(
            f"kernel bank {cross.bank_id} differs from the training bank {model.bank_id}")
    return cross.entries @ model.alpha


def predict(model: KrrModel, test_formulae, bank, test_features=None) -> np.ndarray:
    """``y_j = sum_i alpha_i k(train_i, test_j)`` on the model's kernel bank."""
    if bank.fingerprint != model.bank_id:
        raise FingerprintMismatchError(
            f"kernel bank {bank.fingerprint} differs from the training bank {model.bank_id}")
    train_features = model.features
    if train_features is None or train_features.bank_id != bank.fingerprint:
        train_features = Features(model.formulae, bank, model.config)
        model.features = train_features
    if test_features is None:
        test_features = Features(test_formulae, bank, model.config)
    cross = gram_from_features(test_features, train_features, model.config)
    return predict_with_gram(model, cross)


@dataclass
class Selection:
    sigma: Optional[float]
    lam: float
    mse: float
    table: list  # (sigma, lambda, validation mse or None if the solve failed)


def select_hyperparams(train: TrainingSet, validation: TrainingSet, bank, config: KernelConfig,
                       sigma_grid=DEFAULT_SIGMA_GRID, lambda_grid=DEFAULT_LAMBDA_GRID,
                       train_features=None, val_features=None) -> Selection:
    """Grid search minimizing validation MSE.

    Exact ties go to the larger ridge, then the larger sigma. Sigma is only
    swept for the exponential kernel.
    """
    if not lambda_grid or (config.variant == EXPONENTIAL and not sigma_grid):
        raise ValueError("hyperparameter grids must be non-empty")
    if train_features is None:
        train_features = Features(train.formulae, bank, config)
    if val_features is None:
        val_features = Features(validation.formulae, bank, config)
    square = gram_from_features(train_features, None, config)
    cross = gram_from_features(val_features, train_features, config)
    sigmas = list(sigma_grid) if config.variant == EXPONENTIAL else [None]
    best = None
    table = []
    for sigma in sigmas:
        if sigma is None:
            K, Kx = square.entries, cross.entries
        else:
            cfg = config.with_sigma(sigma)
            K, Kx = square.with_config(cfg).entries, cross.with_config(cfg).entries
        for lam in lambda_grid:
            try:
                alpha = solve_krr(K, train.labels, lam)
            except ConditioningError:
                table.append((sigma, lam, None))
                continue
            mse = float(np.mean((Kx @ alpha - validation.labels) ** 2))
            table.append((sigma, lam, mse))
            key = (mse, -lam, -(sigma or 0.0))
            if best is None or key < best[0]:
                best = (key, sigma, lam, mse)
    if best is None:
        raise ConditioningError("every (sigma, lambda) candidate gave a non-PD system")
    return Selection(best[1], best[2], best[3], table)


@dataclass
class MetricsReport:
    mse: float
    mae: float
    mre: float
    accuracy: Optional[float]
    re_quantiles: dict
    ae_quantiles: dict
    n: int
    n_zero_truth: int  # truths equal to zero, excluded from RE

    def to_dict(self) -> dict:
        return {
            "mse": self.mse, "mae": self.mae, "mre": self.mre, "accuracy": self.accuracy,
            "RE": dict(self.re_quantiles), "AE": dict(self.ae_quantiles),
            "n": self.n, "n_zero_truth": self.n_zero_truth,
        }

    @classmethod
    def from_dict(cls, data) -> "MetricsReport":
        return cls(data["mse"], data["mae"], data["mre"], data["accuracy"], dict(data["RE"]),
                   dict(data["AE"]), data["n"], data["n_zero_truth"])


def _quantiles(values) -> dict:
    if len(values) == 0:
        return {name: float("nan") for name, _ in QUANTILES}
    qs = np.quantile(values, [q for _, q in QUANTILES])
    return {name: float(v) for (name, _), v in zip(QUANTILES, qs)}


def relative_errors(predictions, truths) -> np.ndarray:
    """``|pred - truth| / |truth|`` with zero truths dropped."""
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    keep = truths != 0
    return np.abs(predictions[keep] - truths[keep]) / np.abs(truths[keep])


def evaluate(predictions, truths, task_kind=None) -> MetricsReport:
    predictions = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if predictions.shape != truths.shape or predictions.size == 0:
        raise ValueError("predictions and truths must be equally long and non-empty")
    err = predictions - truths
    ae = np.abs(err)
    re = relative_errors(predictions, truths)
    nonzero = truths != 0
    accuracy = None
    if task_kind in SIGN_TASKS:
        accuracy = float(np.mean(np.sign(predictions[nonzero]) == np.sign(truths[nonzero]))) \
            if nonzero.any() else float("nan")
    return MetricsReport(
        mse=float(np.mean(err ** 2)),
        mae=float(np.mean(ae)),
        mre=float(np.mean(re)) if re.size else float("nan"),
        accuracy=accuracy,
        re_quantiles=_quantiles(re),
        ae_quantiles=_quantiles(ae),
        n=int(predictions.size),
        n_zero_truth=int((~nonzero).sum()),
    )
