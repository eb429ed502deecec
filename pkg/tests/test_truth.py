import numpy as np
import pytest
from scipy import stats

from corrcox import CensorLaw, CovariateLaw, ErrorModel, Truth, sample_dataset
from corrcox.core.hazard import constant_hazard, linear_hazard, tent_transform
from corrcox.errors import ConditionError, DomainError


def exp1_truth(censor=CensorLaw(atom_weight=1.0), tau=50.0):
    return Truth(hazard0=constant_hazard(1.0, tau, lipschitz_L=1.0), beta0=[0.0],
                 covariate=CovariateLaw("finite", atoms=[-1.0, 1.0], probs=[0.5, 0.5]),
                 censor=censor, error_model=ErrorModel.none(), lipschitz_L=1.0)


def test_exponential_lifetimes_pass_ks():
    tr = exp1_truth()
    d = tr.draw(np.random.default_rng(0), 10_000)
    assert np.all(d["delta"] == (d["t"] <= tr.tau))
    stat = stats.kstest(d["t"], "expon").statistic
    assert stat < 1.63 / np.sqrt(10_000)


def test_censoring_identity_and_range(truth):
    d = truth.draw(np.random.default_rng(1), 5000)
    assert np.all((d["y"] >= 0) & (d["y"] <= truth.tau))
    assert np.array_equal(d["delta"], (d["t"] <= d["c"]).astype(int))
    assert np.array_equal(d["y"], np.minimum(d["t"], d["c"]))
    assert np.allclose(d["w"], d["x"] + d["u"])


def test_inverse_cumulative_is_exact(truth):
    t = np.linspace(0, 1, 101)
    back = truth.inverse_cumulative(truth.hazard0.cumulative(t))
    assert np.allclose(back, t, atol=1e-14)
    assert np.isinf(truth.inverse_cumulative(truth.hazard0.cumulative(1.0) + 0.1))


def test_inverse_cumulative_on_tent_hazard():
    h = tent_transform([0.2, 0.5, 0.8], [0.6, 0.4, 0.7], 1.0, 1.0, floor=0.1)
    tr = Truth(hazard0=h, beta0=[0.0], covariate=CovariateLaw("finite", atoms=[0.0], probs=[1.0]),
               censor=CensorLaw(atom_weight=1.0), error_model=ErrorModel.none(), lipschitz_L=1.0)
    t = np.linspace(0, 1, 57)
    assert np.allclose(tr.inverse_cumulative(h.cumulative(t)), t, atol=1e-13)


def test_conditional_survival_matches_empirical(truth):
    n = 100_000
    d = truth.draw(np.random.default_rng(2), n)
    grid = np.linspace(0.1, 1.0, 10)
    for x in (-1.0, 0.0, 1.0):
        sel = d["t"][d["x"][:, 0] == x]
        emp = (sel[:, None] > grid).mean(axis=0)
        theo = truth.conditional_survival(grid, [[x]])[:, 0]
        se = np.sqrt(theo * (1 - theo) / sel.size)
        assert np.all(np.abs(emp - theo) <= 3 * se + 1e-12)


def test_sampling_is_deterministic(truth):
    a = sample_dataset(truth, 100, 7)
    b = sample_dataset(truth, 100, 7)
    assert a.to_csv() == b.to_csv()


def test_censor_at_tau():
    tr = exp1_truth(tau=1.0)
    d = tr.draw(np.random.default_rng(3), 2000)
    assert np.all(d["c"] == 1.0)
    assert np.array_equal(d["delta"], (d["t"] <= 1.0).astype(int))


def test_censor_survival():
    c = CensorLaw(0.2, 1.0, 0.2)
    assert c.survival(0.0) == 1.0
    assert c.survival(0.6) == pytest.approx(0.6)
    assert c.survival(1.0) == pytest.approx(0.2)


def test_zero_hazard_violates_condition_vii():
    h = linear_hazard(0.0, 0.5, 1.0, lipschitz_L=1.0)
    tr = Truth(h, [0.5], CovariateLaw("finite", atoms=[-1.0, 1.0], probs=[0.5, 0.5]),
               CensorLaw(0.2, 1.0, 0.2), ErrorModel.none(), 1.0)
    with pytest.raises(ConditionError, match=r"\(vii\)"):
        tr.check_conditions()
    with pytest.raises(DomainError):
        sample_dataset(tr, 10, 0)


def test_degenerate_covariate_violates_condition_vi():
    tr = Truth(constant_hazard(1.0, 1.0, 1.0), [0.0], CovariateLaw("finite", atoms=[0.0], probs=[1.0]),
               CensorLaw(atom_weight=1.0), ErrorModel.none(), 1.0)
    with pytest.raises(ConditionError, match=r"\(vi\)"):
        tr.check_conditions()


def test_default_truth_satisfies_conditions(truth):
    assert truth.check_conditions(normality=True)


def test_round_trip(truth):
    back = Truth.from_dict(truth.to_dict())
    assert back.to_dict() == truth.to_dict()


def test_gaussian_quadrature_moments():
    law = CovariateLaw("gaussian", cov=[[0.5]])
    nodes, w = law.quadrature()
    assert w.sum() == pytest.approx(1.0)
    assert np.sum(w * np.exp(0.7 * nodes[:, 0])) == pytest.approx(np.exp(0.5 * 0.49 * 0.5), rel=1e-12)
