import math

import numpy as np
import pytest

import oracles
from stlkernel import kernel as K
from stlkernel import semantics as S
from stlkernel import stl_ast as A
from stlkernel.errors import DegenerateFormulaError, DimensionError, FingerprintMismatchError
from stlkernel.formula_sampler import SamplerParams, sample_formulae
from stlkernel.trajectory import Mu0Params, TrajectoryBank, sample_mu0

P = A.parse


@pytest.fixture(scope="module")
def bank():
    return sample_mu0(Mu0Params(), 1000, seed=21)


@pytest.fixture(scope="module")
def formulae():
    return sample_formulae(SamplerParams(seed=22), 100)


def test_k_raw_constant_trajectory():
    const = TrajectoryBank(np.full((1, 1, 11), 2.0))
    assert K.k_raw(P("(x0 >= 0)"), P("(x0 >= 1)"), const, kind=S.STANDARD) == 2.0


def test_k_raw_self_and_negation(bank):
    f = P("(F[0,5] (x0 >= 0.3))")
    kff = K.k_raw(f, f, bank)
    assert kff >= 0
    assert K.k_raw(f, A.Not(f), bank) == -kff
    rho = S.robustness_at_zero([f], bank, S.NORMALIZED)[:, 0]
    assert kff == pytest.approx(np.mean(rho ** 2), rel=1e-12)


def test_k_normalized_exact_values(bank):
    f = P("((x0 >= 0.1) U[0,4] (x0 <= 1.5))")
    assert K.k_normalized(f, f, bank) == 1.0
    assert K.k_normalized(f, A.Not(f), bank) == -1.0


def test_k_normalized_matches_definition_oracle():
    small = sample_mu0(Mu0Params(b=30), 10, seed=3)
    fs = sample_formulae(SamplerParams(seed=4, t_max=5), 10)
    for f, g in zip(fs[::2], fs[1::2]):
        for normalized in (False, True):
            kind = S.NORMALIZED if normalized else S.STANDARD
            rf = [oracles.robustness(f, xi.values, 0, normalized) for xi in small]
            rg = [oracles.robustness(g, xi.values, 0, normalized) for xi in small]
            fg = sum(a * b for a, b in zip(rf, rg)) / 10
            ff = sum(a * a for a in rf) / 10
            gg = sum(b * b for b in rg) / 10
            assert K.k_raw(f, g, small, kind=kind) == pytest.approx(fg, rel=1e-12, abs=1e-15)
            assert K.k_normalized(f, g, small, kind=kind) == pytest.approx(
                fg / math.sqrt(ff * gg), rel=1e-12, abs=1e-15)


def test_timed_raw_matches_riemann_sum():
    small = sample_mu0(Mu0Params(b=20, delta=0.5), 5, seed=7)
    f, g = P("(G[0,3] (x0 >= 0))"), P("(x0 <= 0.4)")
    N = small.n_steps
    total = 0.0
    for xi in small:
        for i in range(N + 1):
            total += oracles.robustness(f, xi.values, i, True) * oracles.robustness(g, xi.values, i, True)
    expected = total * small.delta / (N * small.delta) / len(small)
    assert K.k_raw(f, g, small, timing=K.TIMED) == pytest.approx(expected, rel=1e-12)


def test_timed_unclamped_range_drops_tail():
    small = sample_mu0(Mu0Params(b=20), 5, seed=8)
    f = P("(F[0,6] (x0 >= 0))")
    cfg = K.KernelConfig(variant=K.RAW, timing=K.TIMED, time_range="unclamped")
    feats = K.Features([f], small, cfg)
    m = feats.matrix.reshape(5, 21)
    assert np.all(m[:, 15:] == 0) and np.all(m[:, :15] != 0)


def test_exponential_values():
    one = np.array([[1.0]])
    assert K.exponentiate(one, 1.0)[0, 0] == pytest.approx(math.e, rel=1e-15)
    assert K.exponentiate(np.array([[0.5]]), 0.3)[0, 0] == 1.0
    assert K.exponentiate(np.array([[-1.0]]), 1.0)[0, 0] == pytest.approx(math.exp(-3), rel=1e-15)
    assert K.exponentiate(one, 0.7, K.GAUSSIAN)[0, 0] == 1.0


def test_k_exponential_scalar(bank):
    f, g = P("(x0 >= 0)"), P("(F[0,3] (x0 >= 0.5))")
    k0 = K.k_normalized(f, g, bank)
    assert K.k_exponential(f, g, bank, 0.5) == pytest.approx(math.exp(-(1 - 2 * k0) / 0.25))
    assert K.k_exponential(f, f, bank, 1.0) == pytest.approx(math.e)
    with pytest.raises(ValueError):
        K.k_exponential(f, g, bank, 0.0)


def test_one_by_one_gram(bank):
    g = K.gram([P("(x0 >= 0)")], None, bank, K.KernelConfig(variant=K.NORMALIZED))
    np.testing.assert_array_equal(g.entries, [[1.0]])


@pytest.mark.parametrize("variant", [K.RAW, K.NORMALIZED, K.EXPONENTIAL])
def test_gram_psd_and_symmetric(bank, formulae, variant):
    g = K.gram(formulae, None, bank, K.KernelConfig(variant=variant))
    E = g.entries
    assert np.max(np.abs(E - E.T)) <= 1e-12
    eig = np.linalg.eigvalsh(E)
    assert eig[0] >= -1e-8 * eig[-1]
    if variant == K.NORMALIZED:
        assert np.all(np.abs(np.diag(E) - 1) <= 1e-12)
        assert np.max(np.abs(E)) <= 1 + 1e-12
    if variant == K.EXPONENTIAL:
        np.testing.assert_array_equal(np.diag(E), math.e)


def test_gram_entries_match_scalar_kernel(bank, formulae):
    g = K.gram(formulae[:6], formulae[6:10], bank, K.KernelConfig(variant=K.EXPONENTIAL, sigma=0.5))
    for i in range(6):
        for j in range(4):
            assert g.entries[i, j] == pytest.approx(
                K.k_exponential(formulae[i], formulae[6 + j], bank, 0.5), rel=1e-12)


def test_gram_permutation_equivariance(bank, formulae):
    cfg = K.KernelConfig(variant=K.NORMALIZED)
    fs = formulae[:30]
    perm = np.random.default_rng(0).permutation(30)
    g = K.gram(fs, None, bank, cfg).entries
    gp = K.gram([fs[i] for i in perm], None, bank, cfg).entries
    np.testing.assert_allclose(gp, g[np.ix_(perm, perm)], rtol=0, atol=1e-14)


def test_with_config_equals_direct(bank, formulae):
    base = K.gram(formulae[:20], None, bank, K.KernelConfig(sigma=1.0))
    direct = K.gram(formulae[:20], None, bank, K.KernelConfig(sigma=0.2))
    np.testing.assert_array_equal(base.with_config(K.KernelConfig(sigma=0.2)).entries, direct.entries)
    with pytest.raises(ValueError):
        base.with_config(K.KernelConfig(variant=K.RAW))


def test_small_sigma_stays_finite(bank, formulae):
    g = K.gram(formulae[:20], None, bank, K.KernelConfig(sigma=0.05))
    assert np.all(np.isfinite(g.entries))


def test_degenerate_formula_named(bank):
    zero = TrajectoryBank(np.zeros((3, 1, 11)))
    fs = [P("(x0 >= 1)"), P("(x0 >= 0)")]
    with pytest.raises(DegenerateFormulaError) as info:
        K.gram(fs, None, zero, K.KernelConfig(variant=K.NORMALIZED))
    assert info.value.index == 1
    with pytest.raises(DegenerateFormulaError):
        K.k_normalized(fs[0], fs[1], zero, kind=S.STANDARD)
    # the raw kernel is still defined
    assert K.gram(fs, None, zero, K.KernelConfig(variant=K.RAW)).entries[1, 1] == 0.0


def test_dimension_mismatch(bank):
    with pytest.raises(DimensionError):
        K.gram([P("(x2 >= 1)")], None, bank, K.KernelConfig())


def test_mixing_banks_refused(bank, formulae):
    other = sample_mu0(Mu0Params(), 50, seed=99)
    cfg = K.KernelConfig()
    fa = K.Features(formulae[:3], bank, cfg)
    fb = K.Features(formulae[:3], other, cfg)
    with pytest.raises(FingerprintMismatchError):
        K.gram_from_features(fa, fb, cfg)


def test_monte_carlo_error_shrinks_like_inverse_sqrt():
    f, g = P("(F[0,5] (x0 >= 0.2))"), P("(G[0,3] (x0 <= 0.8))")

    # 120 banks per size keep the spread estimate itself within ~7%
    def spread(M, base):
        vals = [K.k_raw(f, g, sample_mu0(Mu0Params(b=20), M, seed=base + i)) for i in range(120)]
        return np.std(vals, ddof=1)

    ratio = spread(4000, 5000) / spread(1000, 1000)
    assert 0.4 <= ratio <= 0.6


def test_serialization_round_trip(bank, formulae, tmp_path):
    g = K.gram(formulae[:7], formulae[7:12], bank, K.KernelConfig(sigma=0.3, timing=K.TIMED))
    path = tmp_path / "g.txt"
    K.save_gram(g, path)
    back = K.load_gram(path)
    np.testing.assert_array_equal(back.entries, g.entries)
    np.testing.assert_array_equal(back.normalized, g.normalized)
    assert back.config == g.config and back.bank_id == g.bank_id
    assert back.formulae_a == g.formulae_a and back.formulae_b == g.formulae_b
    assert back.fingerprint() == g.fingerprint()
    header = path.read_text().splitlines()[0]
    assert K.formula_hash(formulae[0]) in header


def test_config_validation():
    for kw in (dict(variant="poly"), dict(sigma=0), dict(timing="sometimes"),
               dict(exp_mode="other"), dict(robustness_kind="x"), dict(time_range="all")):
        with pytest.raises(ValueError):
            K.KernelConfig(**kw)
    cfg = K.KernelConfig(sigma=0.5)
    assert K.KernelConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.diagonal() == math.exp(4.0)
    assert K.KernelConfig(variant=K.RAW).diagonal() is None


def test_eigen_floor_ratio():
    assert K.eigen_floor_ratio(np.diag([1.0, 4.0])) == 0.25
