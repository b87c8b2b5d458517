import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import expit

from bregcal.simkit import (STUDY1_ESTIMATORS, MCReport, OutcomeModel, PropensityModel,
                            Scenario, Study1Config, Study2Config, ar1_cov, gen_population,
                            outcome_mean, parse_cell, propensity_logit, run_study1,
                            run_study2, study2_estimators, truncnorm_icdf)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(N=50)
    with pytest.raises(ValueError):
        Scenario(rho=1.0)
    with pytest.raises(ValueError):
        Scenario(p_extra=2)
    scn = Scenario("or1", "ps1")
    assert scn.or_model == OutcomeModel.OR1 and scn.ps_model == PropensityModel.PS1
    assert scn.p == 4 and Scenario(p_extra=50).p == 50


def test_model_formulas():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 4, size=(100, 4))
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    np.testing.assert_allclose(propensity_logit(X, "PS0"), -1 - 0.25 * x2 + 0.5 * x3)
    np.testing.assert_allclose(propensity_logit(X, "PS1"),
                               -1 - 0.25 * (x2 - 3) * (x3 - 4) + 0.5 * (x2 - 2.5) ** 4)
    np.testing.assert_allclose(outcome_mean(X, "OR0"), 1 + x1 - x2)
    np.testing.assert_allclose(outcome_mean(X, "OR1"),
                               1 + x1 - x2 + x1 * x2 + (x2 ** 2 - 1))


def test_truncated_normal_draws():
    pop = gen_population(Scenario(N=10_000, seed=1))
    assert pop.X.min() > 0 and pop.X.max() < 4
    assert 1.9 <= pop.X.mean() <= 2.1
    ref = stats.truncnorm(-2, 2, loc=2, scale=1)
    u = np.linspace(0.001, 0.999, 50)
    np.testing.assert_allclose(truncnorm_icdf(u), ref.ppf(u), atol=1e-10)
    # each column against the exact distribution
    for j in range(4):
        assert stats.kstest(pop.X[:, j], ref.cdf).pvalue > 1e-3


def test_ar1_population():
    pop = gen_population(Scenario(N=20_000, p_extra=5, rho=0.5, seed=2))
    np.testing.assert_allclose(ar1_cov(3, 0.5), [[1, .5, .25], [.5, 1, .5], [.25, .5, 1]])
    np.testing.assert_allclose(np.cov(pop.X.T), ar1_cov(5, 0.5), atol=0.04)
    np.testing.assert_allclose(pop.X.mean(axis=0), 2.0, atol=0.04)


def test_ps0_response_rate():
    tn = stats.truncnorm(-2, 2, loc=2, scale=1)
    rate, _ = integrate.dblquad(
        lambda x3, x2: expit(-1 - 0.25 * x2 + 0.5 * x3) * tn.pdf(x2) * tn.pdf(x3),
        0, 4, 0, 4, epsabs=1e-10)
    assert 0.25 <= rate <= 0.45
    pop = gen_population(Scenario(N=10_000, seed=3))
    sd = math.sqrt(rate * (1 - rate) / 10_000)
    assert 0.25 <= pop.delta.mean() <= 0.45
    assert abs(pop.delta.mean() - rate) <= 4 * sd
    np.testing.assert_allclose(pop.pi, expit(propensity_logit(pop.X, "PS0")))


def test_population_reproducible():
    a = gen_population(Scenario(seed=4))
    b = gen_population(Scenario(seed=4))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.delta, b.delta)
    assert not np.array_equal(a.y, gen_population(Scenario(seed=5)).y)


def test_report_decomposition():
    rng = np.random.default_rng(0)
    errors = rng.normal(0.3, 2.0, size=(200, 3))
    errors[5, 1] = np.nan
    rep = MCReport("x", ["a", "b", "c"], errors)
    for s in rep.summaries():
        assert s.rmse ** 2 == pytest.approx(s.bias ** 2 + s.se ** 2, rel=1e-9)
    b = rep.summary("b")
    assert b.failures == 1
    ok = errors[:, 1][np.isfinite(errors[:, 1])]
    assert b.bias == pytest.approx(ok.mean())
    assert b.mc_se == pytest.approx(ok.std(ddof=1) / math.sqrt(ok.size))
    rows = rep.rows()
    assert rows[0]["bias"] == pytest.approx(100 * rep.summary("a").bias)
    assert rep.to_csv().splitlines()[0] == "label,estimator,B,bias,se,rmse,mc_se,failures"
    assert "(1 failed)" in rep.table()


def test_parse_cell():
    assert parse_cell("ps1-or0") == (PropensityModel.PS1, OutcomeModel.OR0)
    with pytest.raises(ValueError):
        parse_cell("ps2-or0")


def test_study1_small_run_is_reproducible_and_order_independent():
    cfg = Study1Config(cells=("ps0-or1",), learners=("glm",), N=500, B=6, seed=7)
    a = run_study1(cfg)
    b = run_study1(cfg)
    c = run_study1(Study1Config(cells=("ps0-or1",), learners=("glm",), N=500, B=6,
                                seed=7, n_jobs=2))
    assert a[0].estimators == list(STUDY1_ESTIMATORS)
    assert a[0].to_csv() == b[0].to_csv() == c[0].to_csv()
    # ET is reported once; its DS twin agrees with it (checked in the solver tests)
    assert np.all(np.isfinite(a[0].errors))


def test_study2_small_run():
    cfg = Study2Config(N=600, p=10, B=3, generators=("el",), tau_grid=(1e-3, 1e-2),
                       seed=8)
    res = run_study2(cfg)
    names = study2_estimators(cfg)
    assert res.report.estimators == names
    assert names[:3] == ["IPW", "Full-EL", "Oracle-EL"]
    assert "SBC-lasso-qinf-EL" in names and len(names) == 3 + 6
    assert res.report.errors.shape == (3, len(names))
    rows = res.curve_rows()
    assert len(rows) == 2 * 3 * 2
    assert res.curves_csv().splitlines()[0] == "generator,pilot,q,tau,rmse,failures"
    assert run_study2(cfg).report.to_csv() == res.report.to_csv()


def test_bc_el_bias_below_ds_el_across_batches():
    # PS1/OR1 with glm: |bias| of BC-EL below DS-EL in at least 90% of seed batches
    wins = 0
    for batch in range(10):
        rep = run_study1(Study1Config(cells=("ps1-or1",), learners=("glm",), B=100,
                                      seed=100 + batch))[0]
        wins += abs(rep.summary("BC-EL").bias) < abs(rep.summary("DS-EL").bias)
    assert wins >= 9
