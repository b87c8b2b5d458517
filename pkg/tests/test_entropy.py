import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from bregcal.entropy import (bregman_div, conjugacy_report, conjugate_div, eval_F,
                             eval_G, eval_ginv, eval_gprime, get_generator,
                             interior_grid)
from bregcal.errors import DomainError

from conftest import ALL_KEYS


def test_pointwise_values():
    assert eval_G(get_generator("kl"), 1.0) == 0.0
    assert eval_G(get_generator("sq"), 3.0) == 4.5
    # (w - 1) log(w - 1) - w log w at w = 2
    assert eval_G(get_generator("ce"), 2.0) == pytest.approx(1 * math.log(1) - 2 * math.log(2),
                                                             abs=1e-14)
    assert eval_ginv(get_generator("sq"), 5.0) == 5.0
    assert eval_ginv(get_generator("kl"), 1.0) == pytest.approx(1.0, abs=1e-15)
    assert eval_gprime(get_generator("ce"), 2.0) == pytest.approx(0.5, abs=1e-15)
    assert eval_F(get_generator("kl"), 1.0) == pytest.approx(1.0, abs=1e-15)
    assert eval_F(get_generator("hd"), 0.5) == pytest.approx(1.0, abs=1e-15)
    assert eval_F(get_generator("el"), -1.0) == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("key", ALL_KEYS)
def test_divergence_of_point_from_itself(key):
    gen = get_generator(key)
    w = 1.7 if key not in ("skl", "ce") else 2.7
    assert bregman_div(gen, w, w) == pytest.approx(0.0, abs=1e-14)
    nu = float(gen.g(w))
    assert conjugate_div(gen, nu, nu) == pytest.approx(0.0, abs=1e-14)


def test_divergence_values():
    assert bregman_div(get_generator("sq"), 3.0, 1.0) == pytest.approx(2.0)
    assert bregman_div(get_generator("kl"), 2.0, 1.0) == pytest.approx(2 * math.log(2) - 1,
                                                                      rel=1e-14)
    assert conjugate_div(get_generator("sq"), 2.0, 0.0) == pytest.approx(2.0)


def test_kl_conjugate_divergence_against_numeric_legendre():
    gen = get_generator("kl")

    def legendre(nu):
        res = optimize.minimize_scalar(lambda w: -(w * nu - w * math.log(w)),
                                       bounds=(1e-9, 50.0), method="bounded",
                                       options={"xatol": 1e-12})
        return -res.fun

    nu, nu0 = 1.0, 1.0 + math.log(2.0)
    # F'(nu0) by a central difference of the brute-force conjugate
    h = 1e-4
    slope = (legendre(nu0 + h) - legendre(nu0 - h)) / (2 * h)
    brute = legendre(nu) - legendre(nu0) - slope * (nu - nu0)
    assert conjugate_div(gen, nu, nu0) == pytest.approx(brute, rel=1e-6)


@pytest.mark.parametrize("key", ALL_KEYS)
def test_conjugacy_identities(key):
    rep = conjugacy_report(get_generator(key))
    assert rep["inverse_link"] <= 1e-10
    assert rep["fenchel_young"] <= 1e-10
    assert rep["curvature"] <= 1e-10


@pytest.mark.parametrize("key", ALL_KEYS)
def test_finite_differences(key):
    # step 1e-5 needs the point well away from the domain walls
    gen = get_generator(key)
    h, margin = 1e-5, 0.05
    w = interior_grid(gen, 200)
    w = w[(w > gen.domain_lo + margin) & (np.abs(w) < 40)]
    fd = (gen.G(w + h) - gen.G(w - h)) / (2 * h)
    np.testing.assert_allclose(fd, gen.g(w), rtol=1e-6, atol=1e-6)
    nu = gen.g(w)
    lo, hi = gen.dual_domain
    nu = nu[(nu > lo + margin) & (nu < hi - margin)]
    fd = (gen.F(nu + h) - gen.F(nu - h)) / (2 * h)
    np.testing.assert_allclose(fd, gen.Fprime(nu), rtol=1e-6, atol=1e-6)


def test_contrast_entropy_design_optimality():
    gen = get_generator("ce")
    w = np.linspace(1.0, 100.0, 500)[1:]
    # w^2 - w is exact in float for these grid points only up to rounding;
    # compare against the exact rational value.
    from fractions import Fraction
    exact = np.array([float(Fraction(x) ** 2 - Fraction(x)) for x in w])
    assert np.max(np.abs(gen.qweight(w) - exact)) <= 1e-12


@pytest.mark.parametrize("key", ALL_KEYS)
@settings(max_examples=60, deadline=None)
@given(u=st.floats(0.01, 0.99), v=st.floats(0.01, 0.99))
def test_fenchel_young_inequality(key, u, v):
    gen = get_generator(key)
    w = interior_grid(gen, 1000)[int(u * 999)]
    lo, hi = gen.dual_domain
    lo = max(lo, -30.0)
    hi = min(hi, 30.0)
    nu = lo + (hi - lo) * v
    assert gen.F(nu) + gen.G(w) >= w * nu - 1e-12 * max(1.0, abs(w * nu))


@pytest.mark.parametrize("key,bad", [("kl", 0.0), ("kl", -1.0), ("el", 1e-13),
                                     ("skl", 1.0), ("ce", 0.5), ("hd", 0.0)])
def test_domain_errors(key, bad):
    gen = get_generator(key)
    with pytest.raises(DomainError) as info:
        gen.G(bad)
    assert info.value.interval == (gen.domain_lo, gen.domain_hi)


def test_dual_domain_walls():
    with pytest.raises(DomainError):
        get_generator("el").F(0.0)
    with pytest.raises(DomainError):
        get_generator("hd").F(1.0)
    with pytest.raises(DomainError):
        get_generator("ce").F(0.0)


@pytest.mark.parametrize("alpha", ["0", "-1", "-0.5", "nan"])
def test_renyi_order_validation(alpha):
    with pytest.raises(ValueError):
        get_generator(f"renyi:{alpha}")


def test_keys():
    for key in ALL_KEYS:
        assert get_generator(key).name == key
    assert get_generator("ET").name == "kl"
    with pytest.raises(ValueError):
        get_generator("nope")
    with pytest.raises(ValueError):
        get_generator("renyi")
