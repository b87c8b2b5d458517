"""Variance estimators and normal-theory intervals for calibration estimators."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse, stats

from .errors import UnsupportedWithoutFrame
from .estimate import WeightedRegCoef


class VarianceMethod(str, enum.Enum):
    DESIGN = "design"
    ETA = "eta"
    SAMPLE_ONLY = "sample-only"


class JointKind(str, enum.Enum):
    POISSON = "poisson"
    USER = "user"


@dataclass(frozen=True)
class JointInclusion:
    """Second-order inclusion probabilities for the sampled units.

    ``PoissonIndependent`` needs no matrix (``pi_ij = pi_i pi_j`` off the
    diagonal).  A user matrix must be symmetric with ``pi_i`` on the diagonal.
    """

    kind: JointKind = JointKind.POISSON
    matrix: np.ndarray | None = None

    @classmethod
    def poisson(cls):
        return cls(JointKind.POISSON)

    @classmethod
    def from_matrix(cls, matrix, pi=None, atol=1e-12):
        m = np.asarray(matrix.toarray() if sparse.issparse(matrix) else matrix, float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("joint inclusion matrix must be square")
        if not np.allclose(m, m.T, atol=atol):
            raise ValueError("joint inclusion matrix must be symmetric")
        if np.any(m <= 0) or np.any(m > 1):
            raise ValueError("joint inclusion probabilities must lie in (0, 1]")
        if pi is not None and not np.allclose(np.diag(m), pi, atol=atol):
            raise ValueError("diagonal of the joint inclusion matrix must equal pi")
        return cls(JointKind.USER, m)

    @classmethod
    def from_triples(cls, triples, pi):
        """Build from ``(i, j, pi_ij)`` rows; unlisted pairs default to ``pi_i pi_j``."""
        pi = np.asarray(pi, dtype=float)
        m = np.outer(pi, pi)
        np.fill_diagonal(m, pi)
        for i, j, v in triples:
            m[int(i), int(j)] = m[int(j), int(i)] = float(v)
        return cls.from_matrix(m, pi)


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    method: VarianceMethod
    estimate: float
    ci_low: float
    ci_high: float
    clipped: bool = False

    @property
    def se(self) -> float:
        return float(np.sqrt(self.value))

    def as_dict(self) -> dict:
        return {"variance": self.value, "se": self.se, "method": self.method.value,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "clipped": self.clipped}


def _interval(estimate, value, method, level=0.95, clipped=False):
    z = stats.norm.ppf(0.5 + level / 2.0)
    half = z * np.sqrt(max(value, 0.0))
    return VarianceEstimate(float(value), VarianceMethod(method), float(estimate),
                            float(estimate - half), float(estimate + half), clipped)


def _beta(beta):
    return beta.beta if isinstance(beta, WeightedRegCoef) else np.asarray(beta, float)


def var_design(X, y, pi, joint: JointInclusion | None, beta, N: int,
               estimate: float = 0.0, level: float = 0.95) -> VarianceEstimate:
    """Design-based variance estimator of the calibration mean estimator.

    ``N^{-2} sum_{i,j in S} (pi_ij - pi_i pi_j)/pi_ij * (e_i/pi_i)(e_j/pi_j)``
    with ``e = y - X beta``.  Under Poisson sampling only the diagonal remains.
    """
    X = np.asarray(X, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("inclusion probabilities must be positive")
    e = (np.asarray(y, dtype=float) - X @ _beta(beta)) / pi
    joint = joint or JointInclusion.poisson()
    if joint.kind == JointKind.POISSON:
        value = float(np.sum((1.0 - pi) * e * e)) / N**2
        return _interval(estimate, value, VarianceMethod.DESIGN, level)
    m = joint.matrix
    delta = (m - np.outer(pi, pi)) / m
    np.fill_diagonal(delta, 1.0 - pi)
    value = float(e @ delta @ e) / N**2
    clipped = False
    if value < 0:
        warnings.warn(f"design variance estimate {value:.3g} is negative; clipped to 0",
                      RuntimeWarning, stacklevel=2)
        value, clipped = 0.0, True
    return _interval(estimate, value, VarianceMethod.DESIGN, level, clipped)


def var_missing_eta(pop_X, X, y, w_hat, beta, N: int, n: int, delta=None,
                    estimate: float = 0.0, level: float = 0.95) -> VarianceEstimate:
    """Linearization variance ``N^{-2} sum_i (eta_i - eta_bar)^2`` over the frame.

    ``eta_i = x_i' b + (N/n) w_i delta_i (y_i - x_i' b)``.  ``pop_X`` holds all
    ``N`` units; ``delta`` marks the respondent rows (whose order must match
    ``X``, ``y`` and ``w_hat``).  Without ``delta`` the respondents are taken
    to be the first ``n`` rows of ``pop_X``.
    """
    if pop_X is None:
        raise UnsupportedWithoutFrame(
            "eta variance needs unit-level auxiliaries for the whole population")
    pop_X = np.asarray(pop_X, dtype=float)
    if pop_X.ndim != 2 or pop_X.shape[0] != N:
        raise UnsupportedWithoutFrame(
            f"population frame must have N={N} rows, got shape {pop_X.shape}")
    b = _beta(beta)
    eta = pop_X @ b
    resp = np.zeros(N, dtype=bool)
    if delta is None:
        resp[:n] = True
    else:
        resp = np.asarray(delta).astype(bool)
    resid = np.asarray(y, dtype=float) - np.asarray(X, dtype=float) @ b
    eta[resp] += (N / n) * np.asarray(w_hat, dtype=float) * resid
    value = float(np.sum((eta - eta.mean()) ** 2)) / N**2
    return _interval(estimate, value, VarianceMethod.ETA, level)


def var_sample_only(X_resp, y, pi_hat, beta, mu_hat: float, N: int,
                    level: float = 0.95) -> VarianceEstimate:
    """Variance of the mean estimator from respondent quantities alone.

    The bracket ``N^{-1} sum_S (y - mu)^2 / pi + N^{-1} sum_S (1/pi)(1/pi - 1) e^2``
    estimates the unit-level variance; it is divided by ``N`` so the result
    is on the same scale as :func:`var_missing_eta`.
    """
    d = 1.0 / np.asarray(pi_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    e = y - np.asarray(X_resp, dtype=float) @ _beta(beta)
    sigma2 = (np.sum(d * (y - mu_hat) ** 2) + np.sum(d * (d - 1.0) * e * e)) / N
    return _interval(mu_hat, float(sigma2) / N, VarianceMethod.SAMPLE_ONLY, level)
