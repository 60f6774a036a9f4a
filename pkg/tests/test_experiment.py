import pytest

from stlkernel import experiment as ex
from stlkernel import regression as reg


def _cfg(**kw):
    base = dict(task=ex.EXPECTED, n_train=60, n_val=30, n_test=40, kernel_bank_size=200,
                label_bank_size=200, repetitions=2, seed=5)
    base.update(kw)
    return ex.ExperimentConfig(**base)


def test_byte_identical_reruns():
    a = ex.dumps_results(ex.run_experiment(_cfg()))
    b = ex.dumps_results(ex.run_experiment(_cfg()))
    assert a == b
    assert a != ex.dumps_results(ex.run_experiment(_cfg(seed=6)))


def test_worker_pool_matches_serial():
    serial = ex.run_experiment(_cfg())
    pooled = ex.run_experiment(_cfg(workers=2))
    assert ex.dumps_results({**serial, "config": None}) == ex.dumps_results({**pooled, "config": None})


def test_repetition_seeds_distinct():
    s0, s1 = ex.repetition_seeds(1, 0), ex.repetition_seeds(1, 1)
    assert set(s0) == set(ex.STREAMS)
    assert len(set(s0.values()) | set(s1.values())) == 2 * len(ex.STREAMS)


def test_results_layout_and_aggregate():
    res = ex.run_experiment(_cfg())
    assert res["format"] == ex.RESULTS_FORMAT and res["failures"] == 0
    assert res["switches"]["tt_robustness"] == 1e6
    for rec in res["repetitions"]:
        for kind in ("R", "R_hat"):
            m = rec["metrics"][kind]
            assert m["rkhs_norm"] >= 0 and m["lambda"] in reg.DEFAULT_LAMBDA_GRID
    agg = res["aggregate"]["R"]
    vals = [r["metrics"]["R"]["RE"]["median"] for r in res["repetitions"]]
    assert agg["RE"]["median"]["mean"] == pytest.approx(sum(vals) / 2)
    csv = ex.quantiles_csv(res).splitlines()
    assert len(csv) == 1 + 2 * 2 and csv[1].startswith("R,RE,")


def test_error_records_are_structured():
    # every candidate diverges when the ridge is zero and all formulae coincide in the bank
    cfg = _cfg(lambda_grid=[0.0], kernel={"variant": "normalized"}, n_train=60,
               kernel_bank_size=1, repetitions=1)
    res = ex.run_experiment(cfg)
    rec = res["repetitions"][0]
    assert res["failures"] == 1 and rec["status"] == "error"
    assert set(rec["error"]) == {"type", "message"} and rec["error"]["type"]
    assert res["aggregate"] == {}


def test_config_validation():
    for kw in (dict(task="Nope"), dict(n_train=0), dict(task=ex.CROSS),
               dict(labels=["Q"]), dict(kernel={"sigma": -1}), dict(cross_kernel="x")):
        with pytest.raises(ValueError):
            _cfg(**kw)
    with pytest.raises(ValueError):
        ex.ExperimentConfig.from_dict({"bogus": 1})
    cfg = _cfg()
    assert ex.ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_single_trajectory_desk_accuracy():
    res = ex.run_experiment(_cfg(task=ex.SINGLE, n_train=200, n_val=100, n_test=200,
                                 kernel_bank_size=1000, repetitions=1))
    assert res["repetitions"][0]["metrics"]["rho_hat"]["accuracy"] >= 0.9


def test_satisfaction_desk_absolute_error():
    res = ex.run_experiment(_cfg(task=ex.SATISFACTION, n_train=200, n_val=100, n_test=200,
                                 kernel_bank_size=1000, label_bank_size=1000, repetitions=1))
    assert res["repetitions"][0]["metrics"]["S"]["AE"]["median"] <= 0.05


def test_cross_process_runs_both_kernels():
    for mode in ("base", "custom"):
        res = ex.run_experiment(_cfg(task=ex.CROSS, model="immigration", cross_kernel=mode,
                                     repetitions=1, label_bank_size=100))
        assert res["failures"] == 0
        assert set(res["repetitions"][0]["metrics"]) == {"R", "R_hat", "S"}
