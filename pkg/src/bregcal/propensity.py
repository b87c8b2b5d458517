"""Cross-fitted estimation of response propensities.

Fold labels are drawn i.i.d. uniform over ``1..K`` for every population unit.
For each fold the learner is trained on ``(x, delta)`` of the other folds
only and predicts the held-out units.  Predictions are clipped to keep the
implied weights bounded.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import DegenerateFoldError, SingularFitError

CLIP = (0.01, 0.99)
RIDGE_GRID = (1e-4, 1e-2, 1.0)


class Learner(str, enum.Enum):
    GLM = "glm"
    SPLINE = "spline"
    LASSO_GLM = "lasso-glm"


def _deviance(y, eta):
    # -2 log-likelihood of a logistic model, stable for large |eta|.
    return 2.0 * float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def fit_logistic(X, y, ridge: float = 0.0, max_iter: int = 50, tol: float = 1e-10):
    """Logistic regression by IRLS with step halving.

    ``X`` must already contain an intercept column in position 0; the ridge
    penalty ``ridge/2 * |beta[1:]|^2`` is applied to the mean deviance / 2.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    pen = np.full(p, ridge)
    pen[0] = 0.0

    def objective(b):
        return _deviance(y, X @ b) / (2.0 * n) + 0.5 * float(pen @ (b * b))

    beta = np.zeros(p)
    ybar = y.mean()
    if 0.0 < ybar < 1.0:
        beta[0] = np.log(ybar / (1.0 - ybar))
    obj = objective(beta)
    for _ in range(max_iter):
        mu = expit(X @ beta)
        w = mu * (1.0 - mu)
        grad = X.T @ (y - mu) / n - pen * beta
        hess = (X * w[:, None]).T @ X / n + np.diag(pen)
        try:
            step = linalg.solve(hess, grad, assume_a="pos", check_finite=False)
        except (linalg.LinAlgError, ValueError):
            step, *_ = np.linalg.lstsq(hess, grad, rcond=None)
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            new_obj = objective(cand)
            if np.isfinite(new_obj) and new_obj <= obj + 1e-14 * abs(obj):
                break
            t *= 0.5
        else:
            break
        beta = cand
        if abs(obj - new_obj) < tol:
            obj = new_obj
            break
        obj = new_obj
    if not np.all(np.isfinite(beta)):
        raise SingularFitError("logistic fit diverged")
    return beta


def _with_intercept(X):
    return np.column_stack([np.ones(X.shape[0]), X])


class NaturalSplineBasis:
    """Per-covariate natural cubic spline basis with quantile knots.

    Each covariate contributes itself plus ``n_knots`` truncated-power
    natural-spline terms built from ``n_knots`` interior quantile knots and the
    two boundary knots.  Columns are standardized with training moments.
    """

    def __init__(self, n_knots: int = 5):
        self.n_knots = n_knots

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        qs = np.linspace(0.0, 1.0, self.n_knots + 2)
        self.knots_ = [np.unique(np.quantile(col, qs)) for col in X.T]
        raw = self._raw(X)
        self.mean_ = raw.mean(axis=0)
        sd = raw.std(axis=0)
        self.sd_ = np.where(sd > 0, sd, 1.0)
        return self

    @staticmethod
    def _column(x, knots):
        cols = [x]
        K = len(knots)
        if K < 3:
            return cols
        last, prev = knots[-1], knots[-2]

        def d(k):
            return (np.maximum(x - knots[k], 0.0) ** 3
                    - np.maximum(x - last, 0.0) ** 3) / (last - knots[k])

        d_prev = d(K - 2)
        for k in range(K - 2):
            cols.append(d(k) - d_prev)
        return cols

    def _raw(self, X):
        cols = []
        for j, knots in enumerate(self.knots_):
            cols.extend(self._column(X[:, j], knots))
        return np.column_stack(cols)

    def transform(self, X):
        return (self._raw(np.asarray(X, dtype=float)) - self.mean_) / self.sd_


class _GlmModel:
    def fit(self, X, y):
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd_ = np.where(sd > 0, sd, 1.0)
        self.beta_ = fit_logistic(_with_intercept((X - self.mean_) / self.sd_), y)
        return self

    def predict(self, X):
        return expit(_with_intercept((X - self.mean_) / self.sd_) @ self.beta_)


class _SplineModel:
    def __init__(self, seed, n_knots=5, grid=RIDGE_GRID, cv=3):
        self.seed = seed
        self.n_knots = n_knots
        self.grid = grid
        self.cv = cv

    def fit(self, X, y):
        self.basis_ = NaturalSplineBasis(self.n_knots).fit(X)
        Z = _with_intercept(self.basis_.transform(X))
        rng = np.random.default_rng(self.seed)
        folds = rng.integers(self.cv, size=len(y))
        scores = []
        for ridge in self.grid:
            dev = 0.0
            for k in range(self.cv):
                test = folds == k
                train = ~test
                if test.sum() == 0 or np.unique(y[train]).size < 2:
                    continue
                b = fit_logistic(Z[train], y[train], ridge)
                dev += _deviance(y[test], Z[test] @ b)
            scores.append(dev)
        self.ridge_ = self.grid[int(np.argmin(scores))]
        self.beta_ = fit_logistic(Z, y, self.ridge_)
        return self

    def predict(self, X):
        return expit(_with_intercept(self.basis_.transform(X)) @ self.beta_)


class _LassoGlmModel:
    """L1-penalized logistic selection followed by an unpenalized refit."""

    def __init__(self, seed, cv=3):
        self.seed = seed
        self.cv = cv

    def fit(self, X, y):
        from sklearn.linear_model import LogisticRegressionCV

        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd_ = np.where(sd > 0, sd, 1.0)
        Z = (X - self.mean_) / self.sd_
        sel = LogisticRegressionCV(Cs=8, cv=self.cv, penalty="l1", solver="liblinear",
                                   scoring="neg_log_loss", random_state=self.seed)
        sel.fit(Z, y)
        self.support_ = np.flatnonzero(np.abs(sel.coef_.ravel()) > 0)
        self.beta_ = fit_logistic(_with_intercept(Z[:, self.support_]), y)
        return self

    def predict(self, X):
        Z = (X - self.mean_) / self.sd_
        return expit(_with_intercept(Z[:, self.support_]) @ self.beta_)


def make_model(learner: Learner | str, seed: int = 0):
    learner = Learner(learner)
    if learner == Learner.GLM:
        return _GlmModel()
    if learner == Learner.SPLINE:
        return _SplineModel(seed)
    return _LassoGlmModel(seed)


def _row_digests(X, delta, rows):
    out = set()
    for i in rows:
        h = hashlib.sha256(X[i].tobytes())
        h.update(np.float64(delta[i]).tobytes())
        out.add(h.hexdigest())
    return frozenset(out)


@dataclass(frozen=True)
class PropensityFit:
    pi_hat: np.ndarray
    folds: np.ndarray
    learner: str
    K: int
    clip: tuple = CLIP
    training_digests: dict = field(default_factory=dict, repr=False)

    def audit(self, X_pop, delta) -> bool:
        """True when no fold's own records appear among its training rows."""
        if not self.training_digests:
            raise ValueError("fit was made without audit=True")
        X_pop = np.asarray(X_pop, dtype=float)
        delta = np.asarray(delta, dtype=float)
        for k, digests in self.training_digests.items():
            own = _row_digests(X_pop, delta, np.flatnonzero(self.folds == k))
            if own & digests:
                return False
        return True


def fit_crossfitted(X_pop, delta, K: int = 5, learner: Learner | str = Learner.GLM,
                    seed: int = 0, clip=CLIP, audit: bool = False) -> PropensityFit:
    """Out-of-fold propensity estimates for all ``N`` units.

    Fold labels are in ``1..K``.  With ``audit=True`` the fit also records a
    digest of every training row per fold so :meth:`PropensityFit.audit` can
    confirm honesty.
    """
    X_pop = np.asarray(X_pop, dtype=float)
    if X_pop.ndim == 1:
        X_pop = X_pop[:, None]
    delta = np.asarray(delta, dtype=float)
    N = X_pop.shape[0]
    if K < 2:
        raise ValueError("cross-fitting needs K >= 2")
    if delta.shape != (N,):
        raise ValueError("delta must have one entry per population unit")
    rng = np.random.default_rng(seed)
    if K >= N:
        folds = rng.permutation(N) % K + 1
    else:
        folds = rng.integers(1, K + 1, size=N)
    pi_hat = np.empty(N)
    digests = {}
    for k in range(1, K + 1):
        test = folds == k
        if not test.any():
            continue
        train = ~test
        y_tr = delta[train]
        if y_tr.size == 0 or np.unique(y_tr).size < 2:
            raise DegenerateFoldError(
                f"training complement of fold {k} has a single response class")
        model = make_model(learner, seed=seed + k).fit(X_pop[train], y_tr)
        pi_hat[test] = model.predict(X_pop[test])
        if audit:
            digests[k] = _row_digests(X_pop, delta, np.flatnonzero(train))
    pi_hat = np.clip(pi_hat, clip[0], clip[1])
    return PropensityFit(pi_hat, folds, Learner(learner).value, K, tuple(clip), digests)


def baseline_weights(fit: PropensityFit | np.ndarray, delta, n: int | None = None,
                     N: int | None = None) -> np.ndarray:
    """Mean-scale baseline weights ``(n/N) / pi_hat`` for respondents, in row order."""
    pi = fit.pi_hat if isinstance(fit, PropensityFit) else np.asarray(fit, dtype=float)
    delta = np.asarray(delta).astype(bool)
    n = int(delta.sum()) if n is None else n
    N = delta.size if N is None else N
    if n != int(delta.sum()):
        raise ValueError(f"n={n} does not match the {int(delta.sum())} respondents")
    return (n / N) / pi[delta]
