"""Exact Bregman calibration through the dual.

The primal problem

    minimize   sum_i D_G(w_i || w0_i)
    subject to sum_i w_i x_i = T

is solved by minimizing the convex dual

    l(lam) = sum_i F(g(w0_i) + x_i @ lam) - lam @ T + C(w0)

with a damped Newton method.  Weights come back through the inverse link
``w_i = F'(g(w0_i) + x_i @ lam)``.

The same machinery solves Deville-Sarndal calibration, which is a Bregman
problem in the ratio ``u_i = w_i / w0_i`` with unit-specific multipliers
``w0_i`` (see :func:`solve_ds`).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import kernels
from .entropy import Generator
from .errors import DomainError, InfeasibleError, MaxIterationsError

logger = logging.getLogger(__name__)

# Natural parameters must stay this far inside the dual domain.
DUAL_MARGIN = 1e-10


class Scale(str, enum.Enum):
    TOTAL = "total"
    MEAN = "mean"


@dataclass(frozen=True)
class CalibrationProblem:
    """Respondent auxiliaries, baseline weights and population targets.

    On the ``MEAN`` scale the constraint is ``n^{-1} sum_i w_i x_i = targets``
    (targets are population means); on the ``TOTAL`` scale it is
    ``sum_i w_i x_i = targets``.
    """

    X: np.ndarray
    w0: np.ndarray
    targets: np.ndarray
    scale: Scale = Scale.MEAN
    n_pop: int | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=float)))
        if X.shape[0] == 1 and np.ndim(self.X) == 1:
            X = X.T.copy()
        w0 = np.ascontiguousarray(np.asarray(self.w0, dtype=float).ravel())
        targets = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != w0.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but w0 has {w0.shape[0]} entries")
        if X.shape[1] != targets.shape[0]:
            raise ValueError(f"X has {X.shape[1]} columns but {targets.shape[0]} targets")
        if X.shape[0] == 0:
            raise ValueError("empty sample")
        zero_cols = np.flatnonzero(~np.any(X != 0.0, axis=0))
        if zero_cols.size:
            raise ValueError(f"auxiliary column {int(zero_cols[0])} is identically zero")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(w0)):
            raise ValueError("X and w0 must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "scale", Scale(self.scale))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def targets_total(self) -> np.ndarray:
        """Right-hand side of the constraint written as ``sum_i w_i x_i = T``."""
        if self.scale == Scale.TOTAL:
            return self.targets
        return self.n * self.targets

    def to_total(self) -> "CalibrationProblem":
        """Same constraints on the total scale, baseline multiplied by ``N/n``."""
        if self.scale == Scale.TOTAL:
            return self
        if self.n_pop is None:
            raise ValueError("n_pop is required to change scale")
        f = self.n_pop / self.n
        return CalibrationProblem(self.X, self.w0 * f, self.targets * self.n_pop,
                                  Scale.TOTAL, self.n_pop)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 100
    armijo: float = 1e-4
    shrink: float = 0.5
    max_halvings: int = 30


@dataclass(frozen=True)
class CalibrationResult:
    weights: np.ndarray
    lam: np.ndarray
    iterations: int
    grad_norm: float
    dual_value: float
    converged: bool
    history: tuple = field(default=(), repr=False)

    def imbalance(self, prob: CalibrationProblem) -> np.ndarray:
        return prob.X.T @ self.weights - prob.targets_total


@dataclass(frozen=True)
class _Dual:
    """Kernel-ready description of a dual objective."""

    gen: Generator
    X: np.ndarray
    offset: np.ndarray
    unit_scale: np.ndarray
    target: np.ndarray
    const: float

    def bounds(self):
        lo, hi = self.gen.dual_domain
        return lo + DUAL_MARGIN, hi - DUAL_MARGIN

    def evaluate(self, lam, want_hess=True):
        lo, hi = self.bounds()
        value, grad, hess, bad = kernels.dual_terms(
            self.gen.code, float(self.gen.alpha), self.offset, self.X,
            np.ascontiguousarray(lam, dtype=float), self.unit_scale, lo, hi, want_hess)
        if bad >= 0:
            return None, None, None, bad
        return value - lam @ self.target + self.const, grad - self.target, hess, -1

    def nu(self, lam):
        return self.offset + self.X @ lam

    def weights(self, lam):
        return self.unit_scale * kernels.link(self.gen.code, float(self.gen.alpha),
                                              self.nu(lam))


def _bc_dual(gen: Generator, prob: CalibrationProblem) -> _Dual:
    w0 = gen.check_weights(prob.w0)
    offset = np.ascontiguousarray(gen.g(w0), dtype=float)
    const = float(np.sum(gen.G(w0) - offset * w0))
    return _Dual(gen, prob.X, offset, np.ones(prob.n), prob.targets_total, const)


def _ds_dual(gen: Generator, prob: CalibrationProblem) -> _Dual:
    if not gen.in_domain(1.0):
        raise DomainError(1.0, (gen.domain_lo, gen.domain_hi),
                          what=f"{gen.name} weight ratio")
    if np.any(prob.w0 <= 0):
        raise DomainError(float(prob.w0[np.argmin(prob.w0)]), (0.0, np.inf),
                          what="baseline weight")
    g1 = float(gen.g(1.0))
    offset = np.full(prob.n, g1)
    const = -float(np.sum(prob.w0) * gen.F(g1))
    return _Dual(gen, prob.X, offset, np.ascontiguousarray(prob.w0), prob.targets_total,
                 const)


def _evaluate_or_raise(dual: _Dual, lam, want_hess=True):
    value, grad, hess, bad = dual.evaluate(lam, want_hess)
    if bad >= 0:
        nu = float(dual.nu(lam)[bad])
        raise DomainError(nu, dual.gen.dual_domain,
                          what=f"{dual.gen.name} natural parameter", index=bad)
    return value, grad, hess


def dual_value(gen: Generator, prob: CalibrationProblem, lam) -> float:
    """``l(lam)``; zero at ``lam = 0`` by the Fenchel-Young equality."""
    lam = np.asarray(lam, dtype=float)
    return _evaluate_or_raise(_bc_dual(gen, prob), lam, want_hess=False)[0]


def dual_grad(gen: Generator, prob: CalibrationProblem, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return _evaluate_or_raise(_bc_dual(gen, prob), lam, want_hess=False)[1]


def dual_hess(gen: Generator, prob: CalibrationProblem, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return _evaluate_or_raise(_bc_dual(gen, prob), lam)[2]


def _newton_direction(hess, grad):
    p = hess.shape[0]
    ridge = 0.0
    base = max(np.trace(hess) / p, np.finfo(float).tiny)
    for _ in range(12):
        try:
            c = linalg.cho_factor(hess + ridge * np.eye(p), check_finite=False)
            return -linalg.cho_solve(c, grad, check_finite=False)
        except linalg.LinAlgError:
            ridge = 1e-10 * base if ridge == 0.0 else ridge * 100.0
    return -grad / base


def _has_interior_point(dual: _Dual, margin: float = 1e-8) -> bool:
    """LP check for weights strictly inside the domain that meet the targets."""
    lo, hi = dual.gen.domain_lo, dual.gen.domain_hi
    s = dual.unit_scale
    lb = s * (lo + margin) if np.isfinite(lo) else np.full(s.size, -np.inf)
    ub = s * (hi - margin) if np.isfinite(hi) else np.full(s.size, np.inf)
    bounds = [(None if np.isinf(a) else a, None if np.isinf(b) else b)
              for a, b in zip(lb, ub)]
    res = optimize.linprog(np.zeros(s.size), A_eq=dual.X.T, b_eq=dual.target,
                           bounds=bounds, method="highs")
    return res.status != 2


def _newton(dual: _Dual, opts: SolverOptions) -> CalibrationResult:
    p = dual.X.shape[1]
    lam = np.zeros(p)
    value, grad, hess = _evaluate_or_raise(dual, lam)
    scale = max(1.0, float(np.max(np.abs(dual.target))))
    history = [value]
    gnorm = float(np.max(np.abs(grad)))
    it = 0
    for it in range(opts.max_iter + 1):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= opts.tol * scale:
            return CalibrationResult(dual.weights(lam), lam, it, gnorm, value, True,
                                     tuple(history))
        if it == opts.max_iter:
            break
        d = _newton_direction(hess, grad)
        slope = float(grad @ d)
        if slope >= 0:
            d = -grad
            slope = -float(grad @ grad)
        t = 1.0
        # roundoff in the summed dual scales with its largest terms
        slack = 1e3 * np.finfo(float).eps * (
            1.0 + abs(value) + abs(dual.const) + abs(float(lam @ dual.target)))
        accepted = False
        for _ in range(opts.max_halvings):
            cand = lam + t * d
            v_c, g_c, h_c, bad = dual.evaluate(cand)
            if bad < 0:
                if v_c <= value + opts.armijo * t * slope:
                    accepted = True
                elif v_c <= value + slack and np.max(np.abs(g_c)) < gnorm:
                    # Armijo is below roundoff here; accept on gradient progress.
                    accepted = True
            if accepted:
                break
            t *= opts.shrink
        if not accepted:
            w = dual.weights(lam)
            if _has_interior_point(dual):
                why = "the minimizer lies on the boundary of the weight domain"
            else:
                why = "no weights inside the weight domain meet the targets"
            raise InfeasibleError(
                f"line search failed after {opts.max_halvings} halvings "
                f"(max imbalance {gnorm:.3g}); {why} for generator {dual.gen.name}",
                imbalance=grad.copy(),
                result=CalibrationResult(w, lam, it, gnorm, value, False, tuple(history)))
        lam, value, grad, hess = cand, v_c, g_c, h_c
        history.append(value)
    result = CalibrationResult(dual.weights(lam), lam, it, gnorm, value, False,
                               tuple(history))
    if not _has_interior_point(dual):
        # the dual is unbounded below, which Newton only sees as slow descent
        raise InfeasibleError(
            f"no weights inside the {dual.gen.name} domain meet the targets "
            f"(max imbalance {gnorm:.3g} after {opts.max_iter} iterations)",
            imbalance=grad.copy(), result=result)
    raise MaxIterationsError(
        f"no convergence in {opts.max_iter} Newton iterations "
        f"(max imbalance {gnorm:.3g})", result=result)


def solve(gen: Generator, prob: CalibrationProblem,
          opts: SolverOptions | None = None) -> CalibrationResult:
    """Bregman calibration weights for ``prob`` under generator ``gen``.

    Raises
    ------
    DomainError
        A baseline weight lies outside the generator's domain.
    InfeasibleError
        The line search cannot make progress while keeping every natural
        parameter inside the dual domain.
    MaxIterationsError
        The gradient did not reach the tolerance in ``opts.max_iter`` steps.
    """
    return _newton(_bc_dual(gen, prob), opts or SolverOptions())


def solve_ds(gen: Generator, prob: CalibrationProblem,
             opts: SolverOptions | None = None) -> CalibrationResult:
    """Deville-Sarndal weights minimizing ``sum_i w0_i D_G(w_i/w0_i || 1)``.

    The stationarity condition gives ``w_i = w0_i F'(g(1) + x_i @ lam)``, so
    the dual is the Bregman dual with offset ``g(1)`` and unit multipliers
    ``w0_i``.  For generators with ``g(1) = 0`` this is the usual
    ``sum_i w0_i G(w_i / w0_i)`` objective.
    """
    return _newton(_ds_dual(gen, prob), opts or SolverOptions())


def verify_dual_identity(gen: Generator, prob: CalibrationProblem, lam_probe,
                         result: CalibrationResult) -> float:
    """Residual of ``l(lam) - l(lam_hat) = sum_i D_F(nu_i(lam) || nu_i(lam_hat))``."""
    lam_probe = np.asarray(lam_probe, dtype=float)
    lhs = dual_value(gen, prob, lam_probe) - dual_value(gen, prob, result.lam)
    offset = gen.g(prob.w0)
    rhs = np.sum(gen.conjugate_bregman(offset + prob.X @ lam_probe,
                                       offset + prob.X @ result.lam))
    return abs(lhs - float(rhs))
