import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stlkernel import kernel as K
from stlkernel import pac
from stlkernel import regression as R
from stlkernel.errors import ConditioningError
from stlkernel.formula_sampler import SamplerParams, sample_formulae
from stlkernel.trajectory import Mu0Params, sample_mu0


def test_classification_example():
    b = pac.classification_bound(pac.PacInputs(40, 0.05, 650_000))
    assert b == pytest.approx(0.0547, abs=5e-5)
    assert abs(b - 0.05) < 0.01


def test_complexity_term_halves_when_m_quadruples():
    a = pac.classification_bound(pac.PacInputs(40, 0.05, 10_000))
    b = pac.classification_bound(pac.PacInputs(40, 0.05, 40_000))
    assert b == pytest.approx(a / 2, rel=1e-12)


@pytest.mark.parametrize("kw", [dict(delta=2.0), dict(delta=0.0), dict(Lambda=0.0), dict(m=0),
                                dict(m=1.5), dict(r=-1.0), dict(M_bound=-1.0)])
def test_input_validation(kw):
    args = dict(Lambda=1.0, delta=0.05, m=100)
    args.update(kw)
    with pytest.raises(ValueError):
        pac.PacInputs(**args)


def test_regression_bound_examples():
    assert pac.regression_bound(pac.PacInputs(1, 0.05, 10**6, M_bound=0, empirical_risk=0.3)) \
        == pytest.approx(0.09, rel=1e-15)
    b = pac.regression_bound(pac.PacInputs(40, 0.05, 10**6, M_bound=1.0))
    assert b == pytest.approx(0.16407, abs=5e-6)
    with pytest.raises(ValueError):
        pac.regression_bound(pac.PacInputs(1, 0.05, 10))


def test_min_samples_examples():
    assert pac.min_samples(10.0, 1, 0.05) == 1
    m = pac.min_samples(0.05, 40, 0.05)
    assert 6e5 <= m <= 9e5
    assert pac.slack(m, 40, 0.05) <= 0.05 < pac.slack(m - 1, 40, 0.05)
    with pytest.raises(ValueError):
        pac.min_samples(0.0, 1, 0.05)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 100), st.floats(1e-4, 0.5), st.floats(1e-3, 1.0))
def test_min_samples_is_minimal(Lambda, delta, target):
    m = pac.min_samples(target, Lambda, delta)
    assert pac.slack(m, Lambda, delta) <= target
    assert m == 1 or pac.slack(m - 1, Lambda, delta) > target


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 100), st.floats(1e-4, 0.5), st.integers(1, 10**7))
def test_bound_monotonicity(Lambda, delta, m):
    base = pac.classification_bound(pac.PacInputs(Lambda, delta, m))
    assert pac.classification_bound(pac.PacInputs(Lambda, delta, m + 1)) < base
    assert pac.classification_bound(pac.PacInputs(Lambda * 1.5, delta, m)) > base
    assert pac.classification_bound(pac.PacInputs(Lambda, delta / 2, m)) > base


def test_rkhs_norm_examples():
    assert pac.rkhs_norm(np.zeros(4), np.eye(4)) == 0.0
    assert pac.rkhs_norm([3.0], [[1.0]]) == 3.0
    with pytest.raises(ConditioningError):
        pac.rkhs_norm([1.0, 1.0], [[1.0, -2.0], [-2.0, 1.0]])
    with pytest.raises(ValueError):
        pac.rkhs_norm([1.0], np.eye(2))


def test_rkhs_norm_double_loop_and_permutation():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 30))
    Kmat = A @ A.T
    alpha = rng.standard_normal(30)
    loop = math.sqrt(sum(alpha[i] * alpha[j] * Kmat[i, j] for i in range(30) for j in range(30)))
    assert pac.rkhs_norm(alpha, Kmat) == pytest.approx(loop, rel=1e-10)
    perm = rng.permutation(30)
    assert pac.rkhs_norm(alpha[perm], Kmat[np.ix_(perm, perm)]) == pytest.approx(loop, rel=1e-10)


def test_rkhs_norm_of_fitted_model():
    bank = sample_mu0(Mu0Params(), 300, seed=4)
    fs = sample_formulae(SamplerParams(seed=5), 20)
    g = K.gram(fs, None, bank, K.KernelConfig(sigma=0.5))
    model = R.fit(R.TrainingSet(fs, np.linspace(-1, 1, 20), R.EXPECTED), g, 1e-2)
    expected = math.sqrt(model.alpha @ g.entries @ model.alpha)
    assert pac.rkhs_norm(model, g) == pytest.approx(expected, rel=1e-12)
    cross = K.gram(fs, fs[:3], bank, K.KernelConfig(sigma=0.5))
    with pytest.raises(ValueError):
        pac.rkhs_norm(model, cross)


def test_kernel_radius():
    assert pac.kernel_radius(None) == 1.0
    assert pac.kernel_radius(K.KernelConfig(variant=K.NORMALIZED)) == 1.0
    assert pac.kernel_radius(K.KernelConfig(sigma=1.0, exp_mode=K.GAUSSIAN)) == 1.0
    cfg = K.KernelConfig(sigma=0.5)
    assert pac.kernel_radius(cfg) ** 2 == pytest.approx(cfg.diagonal(), rel=1e-12)


def test_report_layout():
    rep = pac.report(40, 0.05, 650_000, target_slack=0.05)
    assert rep["classification_bound"] == pytest.approx(0.054667446667186065, rel=1e-12)
    assert rep["min_samples"] == pac.min_samples(0.05, 40, 0.05)
    assert rep["regression_bound"] > rep["classification_bound"]
