import numpy as np
import pytest
from scipy import optimize

from bregcal.entropy import get_generator
from bregcal.solver import CalibrationProblem, Scale

ALL_KEYS = ["sq", "kl", "skl", "el", "hd", "ce", "renyi:0.5", "renyi:1", "renyi:2"]

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def random_instance(key, n=200, p=5, seed=0, spread=0.3):
    """Feasible total-scale problem: targets are met by a perturbed baseline.

    The perturbed weights stay inside the generator's domain, so a solution
    exists.  Returns the problem and the generator.
    """
    gen = get_generator(key)
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    lo = gen.domain_lo if np.isfinite(gen.domain_lo) else 0.0
    w0 = lo + rng.uniform(0.5, 2.0, n)
    w_true = lo + (w0 - lo) * np.exp(rng.normal(scale=spread, size=n))
    return CalibrationProblem(X, w0, X.T @ w_true, Scale.TOTAL), gen


def planted_instance(key, n=200, p=5, seed=0, scale=0.3):
    """Total-scale problem whose exact solution ``lam_star`` is known.

    Targets are the totals of ``F'(g(w0) + X lam_star)``, so the solution lies
    inside the domain even for generators that are not steep.
    """
    gen = get_generator(key)
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    lo = gen.domain_lo if np.isfinite(gen.domain_lo) else 0.0
    w0 = lo + rng.uniform(0.5, 2.0, n)
    nu0 = gen.g(w0)
    lam = rng.normal(size=p)
    step = scale / np.max(np.abs(X @ lam))
    # shrink until every natural parameter and weight sits inside its domain
    while True:
        nu = nu0 + step * X @ lam
        if np.all(gen.in_dual_domain(nu)) and np.all(gen.in_domain(gen.Fprime(nu))):
            break
        step /= 2
    lam_star = step * lam
    w_star = gen.Fprime(nu0 + X @ lam_star)
    return CalibrationProblem(X, w0, X.T @ w_star, Scale.TOTAL), gen, lam_star


def intercept_only(gen, w0):
    """Bregman weights with only ``sum w = n`` imposed, by 1-D root finding."""
    nu0 = gen.g(w0)
    lo, hi = gen.dual_domain
    f = lambda l0: np.mean(gen.Fprime(nu0 + l0)) - 1.0
    a = max(-1.0, lo - nu0.min() + 1e-9) if np.isfinite(lo) else -1.0
    b = min(1.0, hi - nu0.max() - 1e-9) if np.isfinite(hi) else 1.0
    l0 = optimize.brentq(f, a, b, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    return gen.Fprime(nu0 + l0)


@pytest.fixture
def instance():
    return random_instance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
