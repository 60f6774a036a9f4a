"""Generalization bounds for kernel predictors with a capped RKHS norm."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConditioningError
from .kernel import EXPONENTIAL, PRINTED, KernelConfig


@dataclass(frozen=True)
class PacInputs:
    Lambda: float
    delta: float
    m: int
    r: float = 1.0
    M_bound: Optional[float] = None
    empirical_risk: float = 0.0

    def __post_init__(self):
        if not self.Lambda > 0:
            raise ValueError("Lambda must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.M_bound is not None and self.M_bound < 0:
            raise ValueError("M_bound must be nonnegative")
        if not self.empirical_risk >= 0:
            raise ValueError("empirical risk must be nonnegative")


def _complexity(Lambda, r, m) -> float:
    return Lambda * r / math.sqrt(m)


def _confidence(delta, m) -> float:
    return 3.0 * math.sqrt(math.log(2.0 / delta) / (2.0 * m))


def classification_bound(p: PacInputs) -> float:
    """``L_hat + Lambda r / sqrt(m) + 3 sqrt(ln(2/delta) / (2m))``."""
    return p.empirical_risk + _complexity(p.Lambda, p.r, p.m) + _confidence(p.delta, p.m)


def regression_bound(p: PacInputs) -> float:
    """Bound on the squared loss; ``empirical_risk`` is the unsquared L_hat."""
    if p.M_bound is None:
        raise ValueError("regression bound needs M_bound")
    M = p.M_bound
    return (p.empirical_risk ** 2 + 4.0 * M * _complexity(p.Lambda, p.r, p.m)
            + M * _confidence(p.delta, p.m))


def slack(m, Lambda, delta, r=1.0) -> float:
    return _complexity(Lambda, r, m) + _confidence(delta, m)


def min_samples(target_slack, Lambda, delta, r=1.0) -> int:
    """Smallest m with ``slack(m) <= target_slack``; the slack is decreasing in m."""
    if not target_slack > 0:
        raise ValueError("target slack must be positive")
    PacInputs(Lambda, delta, 1, r)  # domain checks
    if slack(1, Lambda, delta, r) <= target_slack:
        return 1
    lo, hi = 1, 2
    while slack(hi, Lambda, delta, r) > target_slack:
        lo, hi = hi, hi * 2
    # invariant: slack(lo) > target >= slack(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if slack(mid, Lambda, delta, r) <= target_slack:
            hi = mid
        else:
            lo = mid
    return hi


def quadratic_form(alpha, K) -> float:
    alpha = np.asarray(alpha, dtype=float)
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape != (len(alpha), len(alpha)):
        raise ValueError(f"alpha of length {len(alpha)} does not match a {K.shape} Gram matrix")
    return float(alpha @ K @ alpha)


def rkhs_norm(model, gram=None) -> float:
    """``sqrt(alpha^T K alpha)`` of a fitted model over its training Gram matrix.

    ``model`` may be a KrrModel (then ``gram`` is its square GramMatrix) or
    plain ``(alpha, K)`` arrays passed as ``rkhs_norm(alpha, K)``.
    """
    if hasattr(model, "alpha"):
        alpha = model.alpha
        if gram is None or not getattr(gram, "square", True):
            raise ValueError("rkhs_norm needs the square training Gram matrix")
        K = getattr(gram, "entries", gram)
    else:
        alpha, K = model, gram
    q = quadratic_form(alpha, K)
    if q < -1e-8:
        raise ConditioningError(f"alpha^T K alpha = {q:.3g} < 0: Gram matrix is not PSD")
    return math.sqrt(max(q, 0.0))


def kernel_radius(config: Optional[KernelConfig]) -> float:
    """``r`` with ``k(f, f) <= r**2`` for the configured kernel."""
    if config is not None and config.variant == EXPONENTIAL and config.exp_mode == PRINTED:
        return math.exp(1.0 / (2.0 * config.sigma ** 2))
    return 1.0


def report(Lambda, delta, m, r=1.0, M_bound=1.0, empirical_risk=0.0, target_slack=None) -> dict:
    """Classification bound, regression bound and sample size in one dict."""
    p = PacInputs(Lambda, delta, m, r, M_bound, empirical_risk)
    target = slack(m, Lambda, delta, r) if target_slack is None else target_slack
    return {
        "Lambda": Lambda, "delta": delta, "m": m, "r": r, "M_bound": M_bound,
        "empirical_risk": empirical_risk,
        "classification_bound": classification_bound(p),
        "regression_bound": regression_bound(p),
        "target_slack": target,
        "min_samples": min_samples(target, Lambda, delta, r),
    }
