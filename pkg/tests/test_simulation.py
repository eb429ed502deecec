import json

import numpy as np
import pytest

from corrcox import (FitConfig, ParamBox, StudyConfig, default_truth,
                     run_consistency_study, run_normality_study)
from corrcox.errors import ConvergenceError, UsageError
from corrcox.simulation import _normality_diagnostics, replicate_seed


def small_study(**kw):
    base = dict(sizes=(60, 120, 240), reps=4, seed=3, asym_reps=5000)
    base.update(kw)
    return StudyConfig.default(**base)


def test_consistency_report_shape():
    rep = run_consistency_study(small_study())
    assert [s["n"] for s in rep.sizes] == [60, 120, 240]
    for s in rep.sizes:
        assert s["failures"] == 0
        assert set(s["supnorm_trim"]) == {"0.1", "0.25", "0.5", "0.75", "0.9"}
        assert s["supnorm_trim"]["0.5"] <= s["supnorm_full"]["0.5"] + 1e-15
    assert "supnorm_trim_strictly_decreasing" in rep.trend
    assert rep.replicate_csv().splitlines()[0] == \
        "n,rep,beta_hat_1,supnorm_full,supnorm_trim,objective,stage"


def test_normality_report_has_floor_and_functionals():
    rep = run_normality_study(small_study(sizes=(150,), reps=5))
    s = rep.sizes[0]
    assert s["floor"]["violations"] == 0
    assert set(s["functional"]) == {"one", "t"}
    assert s["stage2"]["sandwich"][0][0] > 0
    assert rep.asymptotics["sigma_phi"]["one"]["residual"] < 1e-8
    assert len(rep.replicate_csv().splitlines()) == 1 + 2 * 5


def test_thread_count_does_not_change_results():
    a = run_consistency_study(small_study(threads=1))
    b = run_consistency_study(small_study(threads=3))
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    assert a.replicate_csv() == b.replicate_csv()


def test_substreams_are_distinct():
    draws = {tuple(np.random.default_rng(replicate_seed(0, i, r)).integers(0, 2**31, 2))
             for i in range(3) for r in range(50)}
    assert len(draws) == 150


def test_single_replicate_warns_without_nans():
    rep = run_normality_study(small_study(sizes=(80,), reps=1))
    assert rep.warnings
    text = json.dumps(rep.to_dict())
    assert "NaN" not in text


def test_zero_weight_function_has_zero_statistic():
    from corrcox import asymptotics as asy
    tr = default_truth()
    grid = asy.uniform_grid(1.0, 101)
    est_like = tr.hazard0
    assert asy.weighted_hazard_integral(est_like, np.zeros(101), grid, tr.censor) == 0.0
    tab = asy.build_tables(tr, 101, with_sigma=False)
    sol = asy.solve_fredholm(np.zeros(101), tab, tr, 1000, 0)
    assert sol.sigma_sq == 0.0


def test_too_many_failures_raise(monkeypatch):
    import corrcox.simulation as sim

    def boom(*a, **k):
        raise ConvergenceError("synthetic failure")

    monkeypatch.setattr(sim, "fit_stage1", boom)
    with pytest.raises(ConvergenceError) as info:
        sim.run_consistency_study(small_study())
    assert len(info.value.report.failures) == 12


def test_config_validation():
    with pytest.raises(UsageError):
        small_study(sizes=(100, 50, 200))
    with pytest.raises(UsageError):
        small_study(reps=0)
    with pytest.raises(UsageError):
        run_consistency_study(small_study(sizes=(50, 100)))
    with pytest.raises(UsageError):
        StudyConfig.from_dict({"sizes": [10], "reps": 1, "colour": "red"})


def test_config_from_dict_defaults():
    cfg = StudyConfig.from_dict({"sizes": [10, 20, 30], "reps": 2}, seed=5)
    assert cfg.seed == 5 and cfg.fit.lipschitz_L == 1.0
    assert StudyConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_error_free_and_tiny_error_studies_agree():
    tr0 = default_truth(error_sigma=0.0)
    tr1 = default_truth(error_sigma=1e-4)
    fit = FitConfig(param_box=ParamBox([-3.0], [3.0]), lipschitz_L=1.0, tau=1.0)
    meds = []
    for tr in (tr0, tr1):
        cfg = StudyConfig(truth=tr, sizes=(50, 100, 200), reps=6, fit=fit, seed=1)
        meds.append([s["beta_error"]["0.5"] for s in run_consistency_study(cfg).sizes])
    assert np.allclose(meds[0], meds[1], atol=2e-3)


def test_normality_diagnostics_on_normal_sample():
    z = np.random.default_rng(0).normal(size=500)
    d = _normality_diagnostics(z)
    assert d["ad_pass_1pct"] and abs(d["skew"]) < 0.3
    e = np.random.default_rng(0).exponential(size=500)
    assert not _normality_diagnostics(e)["ad_pass_1pct"]
