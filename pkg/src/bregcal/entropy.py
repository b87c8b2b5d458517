"""Bregman generators with analytic conjugates.

A generator ``G`` is a strictly convex function on an open weight interval
``(domain_lo, domain_hi)``.  Its derivative ``g`` is the calibration link and
the derivative of the convex conjugate ``F`` is the inverse link, so that a
calibrated weight is ``F'(g(w0) + x @ lam)``.

All evaluators accept scalars or numpy arrays and raise :class:`DomainError`
when an argument sits outside (or within ``EDGE`` of the boundary of) the
relevant open interval.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

ArrayLike = Union[float, np.ndarray]

# Arguments closer than this to a finite endpoint are rejected.
EDGE = 1e-12


class GeneratorKind(enum.IntEnum):
    """Concrete generator families.  Integer values are the kernel codes."""

    SQUARED_LOSS = 0
    KULLBACK_LEIBLER = 1
    SHIFTED_KL = 2
    EMPIRICAL_LIKELIHOOD = 3
    SQUARED_HELLINGER = 4
    RENYI = 5
    CONTRAST_ENTROPY = 6


_KEYS = {
    "sq": GeneratorKind.SQUARED_LOSS,
    "kl": GeneratorKind.KULLBACK_LEIBLER,
    "et": GeneratorKind.KULLBACK_LEIBLER,
    "skl": GeneratorKind.SHIFTED_KL,
    "el": GeneratorKind.EMPIRICAL_LIKELIHOOD,
    "hd": GeneratorKind.SQUARED_HELLINGER,
    "ce": GeneratorKind.CONTRAST_ENTROPY,
}

_INF = math.inf

# (weight domain, dual domain) per kind; Renyi is filled in per instance.
_DOMAINS = {
    GeneratorKind.SQUARED_LOSS: ((-_INF, _INF), (-_INF, _INF)),
    GeneratorKind.KULLBACK_LEIBLER: ((0.0, _INF), (-_INF, _INF)),
    GeneratorKind.SHIFTED_KL: ((1.0, _INF), (-_INF, _INF)),
    GeneratorKind.EMPIRICAL_LIKELIHOOD: ((0.0, _INF), (-_INF, 0.0)),
    GeneratorKind.SQUARED_HELLINGER: ((0.0, _INF), (-_INF, 1.0)),
    GeneratorKind.RENYI: ((0.0, _INF), (0.0, _INF)),
    GeneratorKind.CONTRAST_ENTROPY: ((1.0, _INF), (-_INF, 0.0)),
}


def _check(x: ArrayLike, lo: float, hi: float, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    bad = ~((arr > lo + EDGE) & (arr < hi - EDGE))
    if np.any(bad):
        first = np.flatnonzero(np.atleast_1d(bad))[0]
        value = float(np.atleast_1d(arr)[first])
        raise DomainError(value, (lo, hi), what=what,
                          index=int(first) if arr.ndim else None)
    return arr


def _out(arr: np.ndarray, like: ArrayLike):
    return float(arr) if np.ndim(like) == 0 else arr


@dataclass(frozen=True)
class Generator:
    """A Bregman generator ``G`` together with its conjugate ``F``.

    Parameters
    ----------
    kind : GeneratorKind
    alpha : float, optional
        Renyi order; ignored for the other kinds.
    """

    kind: GeneratorKind
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind == GeneratorKind.RENYI:
            a = float(self.alpha)
            if not math.isfinite(a) or a in (0.0, -1.0):
                raise ValueError(f"Renyi order must be finite and not 0 or -1, got {a}")
            if a < 0:
                # g(w) = w**a is decreasing for a < 0, so G is not convex there.
                raise ValueError(f"Renyi order {a} < 0 gives a non-convex generator")

    # -- metadata -------------------------------------------------------
    @property
    def name(self) -> str:
        if self.kind == GeneratorKind.RENYI:
            return f"renyi:{self.alpha:g}"
        return {v: k for k, v in _KEYS.items() if k != "et"}[self.kind]

    @property
    def domain_lo(self) -> float:
        return _DOMAINS[self.kind][0][0]

    @property
    def domain_hi(self) -> float:
        return _DOMAINS[self.kind][0][1]

    @property
    def dual_domain(self) -> tuple[float, float]:
        return _DOMAINS[self.kind][1]

    @property
    def code(self) -> int:
        return int(self.kind)

    def in_domain(self, w: ArrayLike) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return (w > self.domain_lo + EDGE) & (w < self.domain_hi - EDGE)

    def in_dual_domain(self, nu: ArrayLike) -> np.ndarray:
        lo, hi = self.dual_domain
        nu = np.asarray(nu, dtype=float)
        return (nu > lo + EDGE) & (nu < hi - EDGE)

    def check_weights(self, w: ArrayLike) -> np.ndarray:
        return _check(w, self.domain_lo, self.domain_hi, f"{self.name} weight")

    def check_dual(self, nu: ArrayLike) -> np.ndarray:
        lo, hi = self.dual_domain
        return _check(nu, lo, hi, f"{self.name} natural parameter")

    # -- primal side ----------------------------------------------------
    def G(self, w: ArrayLike):
        x = self.check_weights(w)
        k = self.kind
        with np.errstate(all="ignore"):
            if k == GeneratorKind.SQUARED_LOSS:
                r = 0.5 * x * x
            elif k == GeneratorKind.KULLBACK_LEIBLER:
                r = x * np.log(x)
            elif k == GeneratorKind.SHIFTED_KL:
                r = (x - 1.0) * (np.log(x - 1.0) - 1.0)
            elif k == GeneratorKind.EMPIRICAL_LIKELIHOOD:
                r = -np.log(x)
            elif k == GeneratorKind.SQUARED_HELLINGER:
                r = (np.sqrt(x) - 1.0) ** 2
            elif k == GeneratorKind.RENYI:
                a = self.alpha
                r = x ** (a + 1.0) / (a + 1.0)
            else:
                r = (x - 1.0) * np.log(x - 1.0) - x * np.log(x)
        return _out(r, w)

    def g(self, w: ArrayLike):
        """Calibration link ``G'``."""
        x = self.check_weights(w)
        k = self.kind
        if k == GeneratorKind.SQUARED_LOSS:
            r = x.copy()
        elif k == GeneratorKind.KULLBACK_LEIBLER:
            r = np.log(x) + 1.0
        elif k == GeneratorKind.SHIFTED_KL:
            r = np.log(x - 1.0)
        elif k == GeneratorKind.EMPIRICAL_LIKELIHOOD:
            r = -1.0 / x
        elif k == GeneratorKind.SQUARED_HELLINGER:
            r = 1.0 - 1.0 / np.sqrt(x)
        elif k == GeneratorKind.RENYI:
            r = x ** self.alpha
        else:
            r = np.log1p(-1.0 / x)
        return _out(r, w)

    def gprime(self, w: ArrayLike):
        x = self.check_weights(w)
        k = self.kind
        if k == GeneratorKind.SQUARED_LOSS:
            r = np.ones_like(x)
        elif k == GeneratorKind.KULLBACK_LEIBLER:
            r = 1.0 / x
        elif k == GeneratorKind.SHIFTED_KL:
            r = 1.0 / (x - 1.0)
        elif k == GeneratorKind.EMPIRICAL_LIKELIHOOD:
            r = 1.0 / (x * x)
        elif k == GeneratorKind.SQUARED_HELLINGER:
            r = 0.5 * x ** -1.5
        elif k == GeneratorKind.RENYI:
            r = self.alpha * x ** (self.alpha - 1.0)
        else:
            r = 1.0 / (x * (x - 1.0))
        return _out(r, w)

    def qweight(self, w: ArrayLike):
        """``1 / g'(w)``, the regression weight induced by the generator.

        Written out analytically instead of inverting :meth:`gprime`; for the
        contrast entropy this is exactly ``w**2 - w``.
        """
        x = self.check_weights(w)
        k = self.kind
        if k == GeneratorKind.SQUARED_LOSS:
            r = np.ones_like(x)
        elif k == GeneratorKind.KULLBACK_LEIBLER:
            r = x.copy()
        elif k == GeneratorKind.SHIFTED_KL:
            r = x - 1.0
        elif k == GeneratorKind.EMPIRICAL_LIKELIHOOD:
            r = x * x
        elif k == GeneratorKind.SQUARED_HELLINGER:
            r = 2.0 * x * np.sqrt(x)
        elif k == GeneratorKind.RENYI:
            r = x ** (1.0 - self.alpha) / self.alpha
        else:
            r = x * (x - 1.0)
        return _out(r, w)

    def ginv(self, nu: ArrayLike):
        """Inverse calibration link; identical to :meth:`Fprime`."""
        return self.Fprime(nu)

    # -- dual side ------------------------------------------------------
    def F(self, nu: ArrayLike):
        v = self.check_dual(nu)
        k = self.kind
        if k == GeneratorKind.SQUARED_LOSS:
            r = 0.5 * v * v
        elif k == GeneratorKind.KULLBACK_LEIBLER:
            r = np.exp(v - 1.0)
        elif k == GeneratorKind.SHIFTED_KL:
            r = v + np.exp(v)
        elif k == GeneratorKind.EMPIRICAL_LIKELIHOOD:
            r = -1.0 - np.log(-v)
        elif k == GeneratorKind.SQUARED_HELLINGER:
            r = v / (1.0 - v)
        elif k == GeneratorKind.RENYI:
            a = self.alpha
            r = a / (a + 1.0) * v ** ((a + 1.0) / a)
        else:
            r = v - np.log(-np.expm1(v))
        return _out(r, nu)

    def Fprime(self, nu: ArrayLike):
        v = self.check_dual(nu)
        k = self.kind
        if k == GeneratorKind.SQUARED_LOSS:
            r = v.copy()
        elif k == GeneratorKind.KULLBACK_LEIBLER:
            r = np.exp(v - 1.0)
        elif k == GeneratorKind.SHIFTED_KL:
            r = 1.0 + np.exp(v)
        elif k == GeneratorKind.EMPIRICAL_LIKELIHOOD:
            r = -1.0 / v
        elif k == GeneratorKind.SQUARED_HELLINGER:
            r = 1.0 / (1.0 - v) ** 2
        elif k == GeneratorKind.RENYI:
            r = v ** (1.0 / self.alpha)
        else:
            r = -1.0 / np.expm1(v)
        return _out(r, nu)

    def Fsecond(self, nu: ArrayLike):
        v = self.check_dual(nu)
        k = self.kind
        if k == GeneratorKind.SQUARED_LOSS:
            r = np.ones_like(v)
        elif k == GeneratorKind.KULLBACK_LEIBLER:
            r = np.exp(v - 1.0)
        elif k == GeneratorKind.SHIFTED_KL:
            r = np.exp(v)
        elif k == GeneratorKind.EMPIRICAL_LIKELIHOOD:
            r = 1.0 / (v * v)
        elif k == GeneratorKind.SQUARED_HELLINGER:
            r = 2.0 / (1.0 - v) ** 3
        elif k == GeneratorKind.RENYI:
            a = self.alpha
            r = v ** (1.0 / a - 1.0) / a
        else:
            em = np.expm1(v)
            r = np.exp(v) / (em * em)
        return _out(r, nu)

    # -- divergences ----------------------------------------------------
    def bregman(self, w: ArrayLike, w0: ArrayLike):
        """``D_G(w || w0) = G(w) - G(w0) - g(w0) (w - w0)``."""
        w_arr = np.asarray(w, dtype=float)
        w0_arr = np.asarray(w0, dtype=float)
        r = self.G(w_arr) - self.G(w0_arr) - self.g(w0_arr) * (w_arr - w0_arr)
        r = np.maximum(r, 0.0)
        return float(r) if np.ndim(r) == 0 else r

    def conjugate_bregman(self, nu: ArrayLike, nu0: ArrayLike):
        """``D_F(nu || nu0)``."""
        v = np.asarray(nu, dtype=float)
        v0 = np.asarray(nu0, dtype=float)
        r = self.F(v) - self.F(v0) - self.Fprime(v0) * (v - v0)
        r = np.maximum(r, 0.0)
        return float(r) if np.ndim(r) == 0 else r

    def __str__(self) -> str:
        return self.name


def get_generator(key: str) -> Generator:
    """Look up a generator by its CLI key (``"kl"``, ``"renyi:0.5"`` ...)."""
    key = key.strip().lower()
    if key.startswith("renyi"):
        _, _, order = key.partition(":")
        if not order:
            raise ValueError("Renyi generator needs an order, e.g. 'renyi:2'")
        return Generator(GeneratorKind.RENYI, float(order))
    try:
        return Generator(_KEYS[key])
    except KeyError:
        raise ValueError(
            f"unknown generator {key!r}; expected one of "
            f"{sorted(_KEYS)} or 'renyi:<alpha>'") from None


GENERATOR_KEYS = ("sq", "kl", "skl", "el", "hd", "renyi:<alpha>", "ce")


# Functional aliases.

def eval_G(gen: Generator, w: ArrayLike):
    return gen.G(w)


def eval_g(gen: Generator, w: ArrayLike):
    return gen.g(w)


def eval_gprime(gen: Generator, w: ArrayLike):
    return gen.gprime(w)


def eval_ginv(gen: Generator, nu: ArrayLike):
    return gen.ginv(nu)


def eval_F(gen: Generator, nu: ArrayLike):
    return gen.F(nu)


def eval_Fprime(gen: Generator, nu: ArrayLike):
    return gen.Fprime(nu)


def eval_Fsecond(gen: Generator, nu: ArrayLike):
    return gen.Fsecond(nu)


def bregman_div(gen: Generator, w: ArrayLike, w0: ArrayLike):
    return gen.bregman(w, w0)


def conjugate_div(gen: Generator, nu: ArrayLike, nu0: ArrayLike):
    return gen.conjugate_bregman(nu, nu0)


def interior_grid(gen: Generator, size: int = 200) -> np.ndarray:
    """A grid of weights strictly inside the domain, used by the invariant checks."""
    lo, hi = gen.domain_lo, gen.domain_hi
    if math.isinf(lo) and math.isinf(hi):
        return np.linspace(-50.0, 50.0, size)
    return lo + np.geomspace(1e-3, 100.0, size)


def conjugacy_report(gen: Generator, size: int = 200) -> dict:
    """Worst-case errors of the inverse-link and Fenchel-Young identities."""
    w = interior_grid(gen, size)
    nu = gen.g(w)
    inv_err = np.abs(gen.Fprime(nu) - w) / np.maximum(1.0, np.abs(w))
    fy = w * nu
    fy_err = np.abs(gen.F(nu) + gen.G(w) - fy) / np.maximum(1.0, np.abs(fy))
    curv = np.abs(gen.Fsecond(nu) * gen.gprime(gen.Fprime(nu)) - 1.0)
    return {
        "generator": gen.name,
        "inverse_link": float(inv_err.max()),
        "fenchel_young": float(fy_err.max()),
        "curvature": float(curv.max()),
    }
