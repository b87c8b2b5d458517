"""Point estimators built on calibrated weights."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .entropy import Generator
from .solver import (CalibrationProblem, CalibrationResult, Scale, SolverOptions,
                     solve, solve_ds)


class Target(str, enum.Enum):
    MEAN = "mean"
    TOTAL = "total"


def ipw(y, w0, target: Target = Target.MEAN) -> float:
    """Inverse probability weighted estimator; Hajek-normalized for the mean."""
    y = np.asarray(y, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    if y.size == 0:
        raise ValueError("empty sample")
    if y.shape != w0.shape:
        raise ValueError("y and w0 must have the same length")
    if Target(target) == Target.TOTAL:
        return float(w0 @ y)
    return float(w0 @ y / w0.sum())


def _needs_total_scale(gen: Generator, prob: CalibrationProblem) -> bool:
    # Generators whose domain starts at 1 cannot take mean-scale baselines below 1.
    return (prob.scale == Scale.MEAN and gen.domain_lo >= 1.0
            and np.any(~gen.in_domain(prob.w0)) and prob.n_pop is not None)


def _rescaled(result: CalibrationResult, factor: float) -> CalibrationResult:
    return replace(result, weights=result.weights * factor)


def bc_weights(gen: Generator, prob: CalibrationProblem,
               opts: SolverOptions | None = None) -> CalibrationResult:
    """Bregman calibration on the problem's own scale.

    Mean-scale problems for generators with domain ``w > 1`` (contrast
    entropy, shifted KL) are solved on the total scale, where the baseline
    ``1/pi`` exceeds one, and the weights are mapped back by ``n/N``.
    """
    if _needs_total_scale(gen, prob):
        res = solve(gen, prob.to_total(), opts)
        return _rescaled(res, prob.n / prob.n_pop)
    return solve(gen, prob, opts)


def ds_weights(gen: Generator, prob: CalibrationProblem,
               opts: SolverOptions | None = None) -> CalibrationResult:
    return solve_ds(gen, prob, opts)


def _weighted(prob: CalibrationProblem, weights, y) -> float:
    y = np.asarray(y, dtype=float)
    if y.shape != weights.shape:
        raise ValueError(f"y has {y.size} entries but the sample has {weights.size}")
    total = float(weights @ y)
    return total / prob.n if prob.scale == Scale.MEAN else total


def bc_estimate(gen: Generator, prob: CalibrationProblem, y,
                opts: SolverOptions | None = None) -> float:
    """``n^{-1} sum w_i y_i`` on the mean scale, ``sum w_i y_i`` on the total scale."""
    return _weighted(prob, bc_weights(gen, prob, opts).weights, y)


def ds_estimate(gen: Generator, prob: CalibrationProblem, y,
                opts: SolverOptions | None = None) -> float:
    return _weighted(prob, ds_weights(gen, prob, opts).weights, y)


@dataclass(frozen=True)
class WeightedRegCoef:
    beta: np.ndarray
    qhat: np.ndarray

    def residuals(self, X, y) -> np.ndarray:
        return np.asarray(y, dtype=float) - np.asarray(X, dtype=float) @ self.beta


def weighted_reg_coef(X, y, qhat) -> WeightedRegCoef:
    """Solve ``sum q_i x_i (y_i - x_i' b) = 0`` for ``b``.

    Computed by least squares on the ``sqrt(q)``-scaled design, which also
    covers rank-deficient ``X`` (minimum-norm solution).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    qhat = np.asarray(qhat, dtype=float)
    if np.any(qhat < 0):
        raise ValueError("regression weights must be non-negative")
    r = np.sqrt(qhat)
    beta, *_ = np.linalg.lstsq(X * r[:, None], y * r, rcond=None)
    return WeightedRegCoef(beta, qhat)


def generator_coef(gen: Generator, X, y, weights) -> WeightedRegCoef:
    """Regression coefficient with ``q_i = 1/g'(w_i)``."""
    return weighted_reg_coef(X, y, gen.qweight(weights))


def dp_estimate(pop_X, X, y, w_star, beta) -> float:
    """Debiased prediction: population prediction plus weighted residual mean.

    ``pop_X`` is either the ``N x p`` frame or the vector of population means.
    """
    beta = beta.beta if isinstance(beta, WeightedRegCoef) else np.asarray(beta, float)
    pop_X = np.asarray(pop_X, dtype=float)
    xbar = pop_X.mean(axis=0) if pop_X.ndim == 2 else pop_X
    X = np.asarray(X, dtype=float)
    resid = np.asarray(y, dtype=float) - X @ beta
    return float(xbar @ beta + np.asarray(w_star, dtype=float) @ resid / X.shape[0])
