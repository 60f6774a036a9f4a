import numpy as np
import pytest
from scipy import stats

from stlkernel.errors import CsvFormatError, DegenerateDimensionError, ModelError
from stlkernel.rng import make_rng
from stlkernel.trajectory import (Mu0Params, Trajectory, TrajectoryBank, draw_mu0, dumps_csv,
                                  loads_csv, mu0_path, read_csv, sample_mu0, standardize,
                                  write_csv)


def test_trajectory_basics():
    tr = Trajectory([[0.0, 1.0, 3.0]], t0=10.0, delta=0.5)
    assert tr.dim == 1 and tr.n_steps == 2
    np.testing.assert_array_equal(tr.times, [10.0, 10.5, 11.0])
    assert tr(10.75)[0] == pytest.approx(2.0)
    assert tr.total_variation()[0] == 3.0
    with pytest.raises(ValueError):
        tr.values[0, 0] = 5.0


@pytest.mark.parametrize("values, delta", [([[1.0]], 1.0), ([[0.0, np.nan]], 1.0),
                                           ([[0.0, 1.0]], 0.0)])
def test_trajectory_invariants(values, delta):
    with pytest.raises(ValueError):
        Trajectory(values, delta=delta)


def test_forced_monotone_path():
    rng = make_rng(0)
    splits = rng.uniform(0, 5.0, size=99)
    path = mu0_path(start=0.3, tv=5.0, s0=1.0, flips=np.zeros(100, dtype=bool), splits=splits)
    assert np.all(np.diff(path) >= 0)
    assert path[-1] - path[0] == pytest.approx(5.0, rel=1e-12)


def test_forced_flip_every_step_alternates():
    splits = np.linspace(0, 4, 5)[1:-1]
    path = mu0_path(0.0, 4.0, 1.0, np.ones(4, dtype=bool), splits)
    np.testing.assert_allclose(path, [0, -1, 0, -1, 0])


def test_total_variation_identity_every_sample():
    draw = draw_mu0(Mu0Params(dim=3), 10_000, make_rng(5))
    tv = np.abs(np.diff(draw.values, axis=-1)).sum(axis=-1)
    assert np.all(np.abs(tv - draw.tv) <= 1e-9 * draw.tv)
    np.testing.assert_array_equal(tv, draw.tv)


def test_total_variation_identity_tiny_budget():
    splits = make_rng(1).uniform(0, 1e-9, size=99)
    flips = make_rng(2).uniform(size=100) < 0.5
    path = mu0_path(start=-3.7, tv=1e-9, s0=1.0, flips=flips, splits=splits)
    tv = np.abs(np.diff(path)).sum()
    assert tv == pytest.approx(1e-9, rel=1e-6)
    assert path[0] == -3.7


def test_start_points_are_standard_normal():
    bank = sample_mu0(Mu0Params(), 10_000, seed=2024)
    res = stats.kstest(bank.values[:, 0, 0], "norm")
    assert res.pvalue > 0.01


def test_tv_budget_is_squared_normal():
    draw = draw_mu0(Mu0Params(), 10_000, make_rng(8))
    res = stats.kstest(draw.tv[:, 0], "chi2", args=(1,))
    assert res.pvalue > 0.01


def test_flip_rate_from_increment_signs():
    # 101 paths x 99 interior steps, counted from the values alone
    bank = sample_mu0(Mu0Params(q=0.1), 101, seed=3)
    inc = np.diff(bank.values[:, 0, :], axis=-1)
    changes = np.sign(inc[:, 1:]) != np.sign(inc[:, :-1])
    n = changes.size
    se = np.sqrt(0.1 * 0.9 / n)
    assert abs(changes.mean() - 0.1) <= 3 * se


def test_reported_flip_counts_match_values():
    params = Mu0Params(b=30, q=0.3)
    draw = draw_mu0(params, 50, make_rng(1))
    inc = np.diff(draw.values[:, 0, :], axis=-1)
    inner = (np.sign(inc[:, 1:]) != np.sign(inc[:, :-1])).sum(axis=-1)
    # the first flip is relative to s0, which the values do not reveal
    assert np.all((draw.flips[:, 0] - inner >= 0) & (draw.flips[:, 0] - inner <= 1))


def test_q_zero_gives_monotone_paths():
    bank = sample_mu0(Mu0Params(q=0.0), 200, seed=4)
    inc = np.diff(bank.values[:, 0, :], axis=-1)
    assert np.all((inc >= 0).all(axis=-1) | (inc <= 0).all(axis=-1))


def test_sampler_determinism_and_grid():
    p = Mu0Params(a=5.0, b=25.0, delta=0.5, dim=2)
    b1, b2 = sample_mu0(p, 7, seed=9), sample_mu0(p, 7, seed=9)
    assert dumps_csv(b1) == dumps_csv(b2)
    assert b1.fingerprint == b2.fingerprint
    assert b1.values.shape == (7, 2, 41)
    assert b1.times[0] == 5.0 and b1.times[-1] == 25.0
    assert sample_mu0(p, 7, seed=10).fingerprint != b1.fingerprint


@pytest.mark.parametrize("kw", [dict(delta=0), dict(b=-1), dict(q=1.5), dict(s_start=0),
                                dict(s_tv=-1), dict(dim=0), dict(b=10.5)])
def test_mu0_params_validation(kw):
    with pytest.raises(ModelError):
        Mu0Params(**kw)


def test_zero_count_rejected():
    with pytest.raises(ValueError):
        sample_mu0(Mu0Params(), 0, seed=1)


def test_standardize_two_constants():
    values = np.array([np.zeros((1, 5)), np.full((1, 5), 2.0)])
    out = standardize(TrajectoryBank(values))
    np.testing.assert_array_equal(out.values[0], -1.0)
    np.testing.assert_array_equal(out.values[1], 1.0)


def test_standardize_pooled_moments_and_idempotence():
    bank = sample_mu0(Mu0Params(dim=2, m_start=3.0, s_start=4.0), 300, seed=6)
    z = standardize(bank)
    np.testing.assert_allclose(z.values.mean(axis=(0, 2)), 0.0, atol=1e-9)
    np.testing.assert_allclose(z.values.std(axis=(0, 2)), 1.0, atol=1e-9)
    np.testing.assert_allclose(standardize(z).values, z.values, atol=1e-9)


def test_standardize_zero_variance():
    values = np.stack([np.vstack([np.arange(4.0), np.full(4, 7.0)])] * 3)
    with pytest.raises(DegenerateDimensionError):
        standardize(TrajectoryBank(values))


def test_csv_small_layout():
    bank = TrajectoryBank(np.array([[[1.0, 2.0, 3.0]]]))
    text = dumps_csv(bank)
    lines = text.splitlines()
    assert lines[0] == "t,x0"
    assert lines[1] == "# trajectory 0"
    assert len([l for l in lines if not l.startswith("#")]) == 4


def test_csv_round_trip_bit_identical(tmp_path):
    bank = sample_mu0(Mu0Params(dim=2, b=20), 5, seed=12)
    path = tmp_path / "bank.csv"
    write_csv(bank, path)
    back = read_csv(path)
    np.testing.assert_array_equal(back.values, bank.values)
    assert back.fingerprint == bank.fingerprint
    assert dumps_csv(back) == dumps_csv(bank)


def test_csv_without_block_markers():
    bank = loads_csv("t,x0,x1\n0,1,2\n1,3,4\n")
    assert bank.values.shape == (1, 2, 2)


@pytest.mark.parametrize("text, line", [
    ("t,x0\n0,1\n1,2,3\n", 3),
    ("t,x0\n0,1\n1,abc\n", 3),
    ("x0\n0,1\n", 1),
    ("", 1),
    ("t,x0\n0,1\n1,2\n3,3\n", 2),
])
def test_csv_errors(text, line):
    with pytest.raises(CsvFormatError) as info:
        loads_csv(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_csv_mismatched_blocks():
    text = "t,x0\n# trajectory 0\n0,1\n1,2\n# trajectory 1\n0,1\n2,2\n"
    with pytest.raises(CsvFormatError):
        loads_csv(text)


def test_bank_container_protocol():
    bank = sample_mu0(Mu0Params(b=10), 4, seed=0)
    assert len(bank) == 4 and len(bank.trajectories) == 4
    np.testing.assert_array_equal(bank[2].values, bank.values[2])
    rebuilt = TrajectoryBank.from_trajectories(list(bank))
    assert rebuilt.fingerprint == bank.fingerprint
    assert len(bank.subset([0, 3])) == 2
