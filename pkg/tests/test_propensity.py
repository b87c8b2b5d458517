import numpy as np
import pytest

from bregcal.errors import DegenerateFoldError
from bregcal.propensity import (CLIP, Learner, NaturalSplineBasis, PropensityFit,
                                baseline_weights, fit_crossfitted, fit_logistic)
from bregcal.simkit import PropensityModel, Scenario, gen_population


def _ps0(N, seed):
    return gen_population(Scenario("or0", "ps0", N=N, seed=seed))


def test_constant_propensity_is_recovered():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5000, 3))
    delta = (rng.random(5000) < 0.5).astype(float)
    fit = fit_crossfitted(X, delta, K=5, learner="glm", seed=1)
    assert 0.45 <= fit.pi_hat.mean() <= 0.55


def test_folds_and_clipping():
    pop = _ps0(2000, 3)
    fit = fit_crossfitted(pop.X, pop.delta, K=5, seed=4)
    assert set(np.unique(fit.folds)) <= set(range(1, 6))
    assert fit.pi_hat.min() >= CLIP[0] and fit.pi_hat.max() <= CLIP[1]
    tight = fit_crossfitted(pop.X, pop.delta, K=5, seed=4, clip=(0.3, 0.4))
    assert tight.pi_hat.min() >= 0.3 and tight.pi_hat.max() <= 0.4


def test_leave_one_out_partition():
    pop = _ps0(150, 5)
    fit = fit_crossfitted(pop.X, pop.delta, K=150, seed=0)
    assert sorted(fit.folds) == list(range(1, 151))


def test_same_seed_same_fit():
    pop = _ps0(1000, 6)
    a = fit_crossfitted(pop.X, pop.delta, K=5, learner="spline", seed=9)
    b = fit_crossfitted(pop.X, pop.delta, K=5, learner="spline", seed=9)
    np.testing.assert_array_equal(a.pi_hat, b.pi_hat)
    np.testing.assert_array_equal(a.folds, b.folds)


@pytest.mark.parametrize("learner", list(Learner))
def test_out_of_fold_estimates_ignore_own_fold(learner):
    # changing fold-1 responses must leave fold-1 predictions untouched
    pop = _ps0(1500, 7)
    fit = fit_crossfitted(pop.X, pop.delta, K=4, learner=learner, seed=2)
    delta = pop.delta.copy()
    own = fit.folds == 1
    delta[own] = 1.0 - delta[own]
    refit = fit_crossfitted(pop.X, delta, K=4, learner=learner, seed=2)
    np.testing.assert_array_equal(refit.pi_hat[own], fit.pi_hat[own])
    assert not np.array_equal(refit.pi_hat[~own], fit.pi_hat[~own])


@pytest.mark.parametrize("K", [2, 5, 10])
def test_honesty_audit(K):
    pop = _ps0(1000, 8)
    fit = fit_crossfitted(pop.X, pop.delta, K=K, seed=1, audit=True)
    assert fit.audit(pop.X, pop.delta)
    # a fit whose training sets include the fold itself must be caught
    leaky = PropensityFit(fit.pi_hat, fit.folds, fit.learner, K,
                          training_digests={k: v | fit.training_digests[(k % K) + 1]
                                            for k, v in fit.training_digests.items()})
    assert not leaky.audit(pop.X, pop.delta)


def test_degenerate_fold():
    X = np.random.default_rng(0).normal(size=(40, 2))
    delta = np.zeros(40)
    delta[0] = 1.0
    with pytest.raises(DegenerateFoldError):
        fit_crossfitted(X, delta, K=40, seed=0)


def test_bad_arguments():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError):
        fit_crossfitted(X, np.ones(10), K=1)
    with pytest.raises(ValueError):
        fit_crossfitted(X, np.ones(9), K=2)


def test_ps0_coefficients_recovered():
    # mean estimate over replicates within 3 Monte Carlo SEs of the truth
    truth = np.array([-1.0, 0.0, -0.25, 0.5, 0.0])
    est = []
    for r in range(40):
        pop = _ps0(10_000, 100 + r)
        est.append(fit_logistic(np.column_stack([np.ones(pop.N), pop.X]), pop.delta))
    est = np.array(est)
    mc_se = est.std(axis=0, ddof=1) / np.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - truth) <= 3 * mc_se)


def test_logistic_matches_scipy_optimum():
    from scipy import optimize
    from scipy.special import expit
    pop = _ps0(3000, 11)
    X = np.column_stack([np.ones(pop.N), pop.X])
    b = fit_logistic(X, pop.delta)

    def nll(beta):
        eta = X @ beta
        return np.sum(np.logaddexp(0, eta) - pop.delta * eta)

    ref = optimize.minimize(nll, np.zeros(5), method="BFGS",
                            jac=lambda beta: X.T @ (expit(X @ beta) - pop.delta),
                            options={"gtol": 1e-10}).x
    np.testing.assert_allclose(b, ref, atol=1e-5)


def test_spline_basis_is_linear_beyond_boundary_knots():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 4, size=(500, 1))
    basis = NaturalSplineBasis(5).fit(x)
    hi = basis.knots_[0][-1]
    t = hi + np.array([[1.0], [2.0], [3.0]])
    B = basis.transform(t)
    np.testing.assert_allclose(B[2] - B[1], B[1] - B[0], atol=1e-9)
    lo = basis.knots_[0][0]
    t = lo - np.array([[1.0], [2.0], [3.0]])
    B = basis.transform(t)
    np.testing.assert_allclose(B[2] - B[1], B[1] - B[0], atol=1e-9)
    assert basis.transform(x).shape == (500, 1 + 5)


def test_spline_learner_captures_nonlinearity():
    scn = Scenario("or0", "ps1", N=6000, seed=12)
    pop = gen_population(scn)
    glm = fit_crossfitted(pop.X, pop.delta, K=5, learner="glm", seed=0)
    spl = fit_crossfitted(pop.X, pop.delta, K=5, learner="spline", seed=0)
    err = lambda f: np.mean((f.pi_hat - pop.pi) ** 2)
    assert err(spl) < err(glm)


def test_baseline_weights():
    delta = np.array([1, 0, 1, 1, 0, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(baseline_weights(np.full(10, 0.3), delta), 1.0)
    pi = np.full(20, 0.2)
    d = np.zeros(20)
    d[:2] = 1
    np.testing.assert_allclose(baseline_weights(pi, d), 0.5)
    # true-pi plug-in
    pop = _ps0(500, 13)
    w = baseline_weights(pop.pi, pop.delta)
    np.testing.assert_allclose(w, (pop.n / pop.N) / pop.pi[pop.delta == 1])
    with pytest.raises(ValueError):
        baseline_weights(pi, d, n=3)
