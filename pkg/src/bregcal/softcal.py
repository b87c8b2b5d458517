"""Soft (regularized) Bregman calibration.

Exact balance is kept on the intercept, ``sum_i w_i = n``, while the
standardized covariates only need to balance up to a weighted
``l_q``-tolerance.  The Lagrangian dual is

    l(lam0, lam) = sum_i F(g(w0_i) + lam0 + xt_i @ lam) - n lam0 + C(w0)
                   + n || (tau_1 lam_1, ..., tau_p lam_p) ||_{q*}

with ``1/q + 1/q* = 1``.  It is minimized by accelerated proximal gradient
(FISTA with backtracking and restarts) on the per-unit scaled objective,
followed by a Newton polish on the identified smooth manifold.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import kernels
from .entropy import Generator
from .errors import DomainError, InfeasibleError, MaxIterationsError, SingularFitError
from .solver import DUAL_MARGIN

logger = logging.getLogger(__name__)

INF = math.inf


def holder_conjugate(q: float) -> float:
    q = float(q)
    if q == 1.0:
        return INF
    if math.isinf(q):
        return 1.0
    if q <= 1.0:
        raise ValueError(f"norm order must be >= 1, got {q}")
    return q / (q - 1.0)


def parse_q(q) -> float:
    if isinstance(q, str):
        q = q.strip().lower()
        if q in ("inf", "infinity", "oo"):
            return INF
    q = float(q)
    if q not in (1.0, 2.0, INF):
        raise ValueError(f"q must be one of 1, 2, inf; got {q}")
    return q


@dataclass(frozen=True)
class Standardizer:
    """Finite-population centering and scaling of auxiliary columns."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def from_population(cls, pop_X) -> "Standardizer":
        pop_X = np.asarray(pop_X, dtype=float)
        sd = pop_X.std(axis=0)
        if np.any(sd <= 0):
            raise ValueError(f"constant population column {int(np.argmin(sd))}")
        return cls(pop_X.mean(axis=0), sd)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.sd

    def verify(self, pop_X, atol: float = 1e-8) -> None:
        Z = self.transform(pop_X)
        if (np.max(np.abs(Z.mean(axis=0))) > atol
                or np.max(np.abs(Z.var(axis=0) - 1.0)) > atol):
            raise ValueError("columns are not standardized with population moments")


@dataclass(frozen=True)
class SoftProblem:
    """Respondent standardized covariates, baselines and tolerances.

    ``tau`` entries may be ``inf`` (coordinate left unconstrained, its
    multiplier fixed at zero).
    """

    Xt: np.ndarray
    w0: np.ndarray
    q: float
    tau: np.ndarray
    N: int

    def __post_init__(self):
        Xt = np.ascontiguousarray(np.atleast_2d(np.asarray(self.Xt, dtype=float)))
        w0 = np.ascontiguousarray(np.asarray(self.w0, dtype=float).ravel())
        tau = np.asarray(self.tau, dtype=float).ravel()
        if tau.size == 1 and Xt.shape[1] != 1:
            tau = np.full(Xt.shape[1], float(tau[0]))
        if Xt.shape[0] != w0.size:
            raise ValueError("Xt and w0 disagree on the number of respondents")
        if Xt.shape[1] != tau.size:
            raise ValueError(f"{tau.size} tolerances for {Xt.shape[1]} covariates")
        if np.any(~(tau > 0)):
            raise ValueError("tolerances must be positive (inf allowed)")
        object.__setattr__(self, "Xt", Xt)
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "q", parse_q(self.q))

    @property
    def n(self) -> int:
        return self.Xt.shape[0]

    @property
    def p(self) -> int:
        return self.Xt.shape[1]

    @property
    def q_star(self) -> float:
        return holder_conjugate(self.q)

    @classmethod
    def from_frame(cls, X_resp, pop_X, w0, q, tau, standardizer=None):
        std = standardizer or Standardizer.from_population(pop_X)
        return cls(std.transform(X_resp), w0, q, tau, np.asarray(pop_X).shape[0])


@dataclass(frozen=True)
class SoftOptions:
    tol: float = 1e-8
    max_iter: int = 20000
    polish: bool = True


@dataclass(frozen=True)
class SoftResult:
    weights: np.ndarray
    lambda0: float
    lam: np.ndarray
    active_set: np.ndarray
    kkt_gap: float
    iterations: int
    dual_value: float = float("nan")
    converged: bool = True

    def balance(self, prob: SoftProblem) -> np.ndarray:
        """``N^{-1} sum_i w_i xt_i``."""
        return prob.Xt.T @ self.weights / prob.N


# -- penalty and its proximal map ----------------------------------------------

def weighted_norm(lam, tau, q_star: float) -> float:
    """``|| tau * lam ||_{q*}`` treating entries with ``lam == 0`` as zero."""
    lam = np.asarray(lam, dtype=float)
    tau = np.asarray(tau, dtype=float)
    nz = lam != 0
    v = np.abs(tau[nz] * lam[nz])
    if v.size == 0:
        return 0.0
    if q_star == 1.0:
        return float(v.sum())
    if q_star == 2.0:
        return float(np.sqrt(v @ v))
    return float(v.max())


def _project_weighted_l1(v, a, radius=1.0):
    """Euclidean projection onto ``{u : sum_k a_k |u_k| <= radius}``."""
    if np.sum(a * np.abs(v)) <= radius:
        return v.copy()
    ratio = np.abs(v) / a
    order = np.argsort(-ratio)
    r, aa, av = ratio[order], a[order], (a * np.abs(v))[order]
    cum_av = np.cumsum(av)
    cum_aa = np.cumsum(aa * aa)
    theta = (cum_av - radius) / cum_aa
    # largest j with r_j > theta_j
    ok = np.flatnonzero(r > theta)
    # the first index always qualifies in exact arithmetic
    th = theta[ok[-1]] if ok.size else theta[0]
    return np.sign(v) * np.maximum(np.abs(v) - th * a, 0.0)


def prox_penalty(v, tau, q_star: float, t: float):
    """``argmin_u 0.5 |u - v|^2 + t || tau * u ||_{q*}``."""
    v = np.asarray(v, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if v.size == 0:
        return v.copy()
    if q_star == 1.0:
        return np.sign(v) * np.maximum(np.abs(v) - t * tau, 0.0)
    if q_star == 2.0:
        # zero iff ||v / tau||_2 <= t; otherwise u_k = v_k s / (s + t tau_k^2)
        # where s = ||tau * u||_2 solves sum (tau_k v_k / (s + t tau_k^2))^2 = 1.
        if np.sqrt(np.sum((v / tau) ** 2)) <= t:
            return np.zeros_like(v)
        tv = tau * v
        tt2 = t * tau * tau

        def eq(s):
            return np.sum((tv / (s + tt2)) ** 2) - 1.0

        hi = float(np.sqrt(tv @ tv))
        s = optimize.brentq(eq, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                            maxiter=500) if eq(hi) < 0 else hi
        return v * (s / (s + tt2))
    # q* = inf: Moreau decomposition with the dual ball {sum |u_k| / tau_k <= 1}
    return v - t * _project_weighted_l1(v / t, 1.0 / tau)


# -- the smooth part -------------------------------------------------------------

@dataclass
class _Smooth:
    """Per-unit scaled smooth part ``(1/n)(sum F(nu) + C) - lam0``."""

    gen: Generator
    Xa: np.ndarray      # [1, Xt restricted to finite-tau columns]
    offset: np.ndarray
    const: float
    n: int
    evals: int = field(default=0)

    @classmethod
    def build(cls, gen: Generator, prob: SoftProblem, cols):
        w0 = gen.check_weights(prob.w0)
        offset = np.ascontiguousarray(gen.g(w0), dtype=float)
        const = float(np.sum(gen.G(w0) - offset * w0))
        Xa = np.ascontiguousarray(np.column_stack([np.ones(prob.n), prob.Xt[:, cols]]))
        return cls(gen, Xa, offset, const, prob.n)

    def __call__(self, theta, want_hess=False):
        lo, hi = self.gen.dual_domain
        self.evals += 1
        value, grad, hess, bad = kernels.dual_terms(
            self.gen.code, float(self.gen.alpha), self.offset, self.Xa,
            np.ascontiguousarray(theta), np.ones(self.n), lo + DUAL_MARGIN,
            hi - DUAL_MARGIN, want_hess)
        if bad >= 0:
            return None, None, None
        value = (value + self.const) / self.n - theta[0]
        grad = grad / self.n
        grad[0] -= 1.0
        if hess is not None:
            hess = hess / self.n
        return value, grad, hess

    def weights(self, theta):
        return kernels.link(self.gen.code, float(self.gen.alpha),
                            self.offset + self.Xa @ theta)


def soft_dual_value(gen: Generator, prob: SoftProblem, lambda0: float, lam) -> float:
    """Unscaled dual objective, smooth Bregman part plus Holder penalty."""
    lam = np.asarray(lam, dtype=float)
    finite = np.isfinite(prob.tau)
    if np.any(lam[~finite] != 0):
        raise ValueError("multipliers of infinite-tolerance covariates must be zero")
    sm = _Smooth.build(gen, prob, np.arange(prob.p))
    theta = np.concatenate([[float(lambda0)], lam])
    value, _, _ = sm(theta)
    if value is None:
        nu = sm.offset + sm.Xa @ theta
        bad = int(np.flatnonzero(~gen.in_dual_domain(nu))[0])
        raise DomainError(float(nu[bad]), gen.dual_domain,
                          what=f"{gen.name} natural parameter", index=bad)
    return prob.n * value + prob.n * weighted_norm(lam[finite], prob.tau[finite],
                                                   prob.q_star)


# -- solver ------------------------------------------------------------------------

class _Composite:
    def __init__(self, smooth: _Smooth, tau, q_star):
        self.f = smooth
        self.tau = tau
        self.q_star = q_star

    def h(self, theta):
        return weighted_norm(theta[1:], self.tau, self.q_star)

    def prox(self, v, t):
        out = v.copy()
        out[1:] = prox_penalty(v[1:], self.tau, self.q_star, t)
        return out

    def gap(self, theta, grad):
        """Natural residual ``|theta - prox_h(theta - grad f)|_inf``."""
        return float(np.max(np.abs(theta - self.prox(theta - grad, 1.0))))


def _intercept_newton(smooth: _Smooth, theta, tol=1e-14, max_iter=100):
    """Solve ``mean(w) = 1`` for the intercept with the other multipliers fixed."""
    theta = theta.copy()
    for _ in range(max_iter):
        value, grad, hess = smooth(theta, want_hess=True)
        if value is None:
            raise InfeasibleError("intercept update left the dual domain")
        g0 = grad[0]
        if abs(g0) <= tol:
            break
        step = -g0 / hess[0, 0]
        t = 1.0
        for _ in range(60):
            cand = theta.copy()
            cand[0] += t * step
            v_c, g_c, _ = smooth(cand)
            if v_c is not None and v_c <= value + 1e-4 * t * step * g0 + 1e-15:
                break
            t *= 0.5
        else:
            break
        theta = cand
    return theta


def _fista(comp: _Composite, theta, opts: SoftOptions, gap_target: float):
    f = comp.f
    value, grad, _ = f(theta)
    if value is None:
        raise InfeasibleError("starting point is outside the dual domain")
    L = max(1.0, float(np.max(np.abs(grad))))
    y, theta_prev, tk = theta.copy(), theta.copy(), 1.0
    obj = value + comp.h(theta)
    gap = comp.gap(theta, grad)
    it = 0
    for it in range(1, opts.max_iter + 1):
        fy, gy, _ = f(y)
        if fy is None:
            y, tk = theta.copy(), 1.0
            fy, gy = value, grad
        for _ in range(80):
            cand = comp.prox(y - gy / L, 1.0 / L)
            fc, gc, _ = f(cand)
            if fc is not None:
                d = cand - y
                if fc <= fy + gy @ d + 0.5 * L * (d @ d) + 1e-15 * abs(fy):
                    break
            L *= 2.0
        else:
            raise InfeasibleError("proximal step cannot stay inside the dual domain")
        new_obj = fc + comp.h(cand)
        if new_obj > obj:
            # function-value restart
            y, tk = theta.copy(), 1.0
            L *= 0.9
            continue
        theta_prev, theta = theta, cand
        value, grad, obj = fc, gc, new_obj
        tk_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = theta + ((tk - 1.0) / tk_next) * (theta - theta_prev)
        tk = tk_next
        L *= 0.95
        if it % 10 == 0 or it < 10:
            gap = comp.gap(theta, grad)
            if gap <= gap_target:
                break
    return theta, comp.gap(theta, grad), it


def _newton_reparam(comp: _Composite, theta, P, c, phi, max_iter=50):
    """Minimize ``f(P phi) + c @ phi`` by damped Newton; returns ``P phi``."""
    f = comp.f
    value, grad, hess = f(P @ phi, want_hess=True)
    if value is None:
        return None
    obj = value + c @ phi
    for _ in range(max_iter):
        gphi = P.T @ grad + c
        if np.max(np.abs(gphi)) <= 1e-15:
            break
        H = P.T @ hess @ P
        try:
            with warnings.catch_warnings():
                # badly scaled columns are expected; the KKT gap decides acceptance
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                step = -linalg.solve(H, gphi, assume_a="pos", check_finite=False)
        except (linalg.LinAlgError, ValueError):
            return None
        t = 1.0
        for _ in range(40):
            cand = phi + t * step
            v_c, g_c, h_c = f(P @ cand, want_hess=True)
            if v_c is not None and v_c + c @ cand <= obj + 1e-4 * t * (gphi @ step) + 1e-15:
                break
            t *= 0.5
        else:
            break
        phi, value, grad, hess = cand, v_c, g_c, h_c
        new_obj = value + c @ phi
        if obj - new_obj < 1e-16 * max(1.0, abs(obj)) and t < 1:
            obj = new_obj
            break
        obj = new_obj
    return P @ phi


def _polish(comp: _Composite, theta):
    """Newton on the smooth manifold the proximal iterate has identified."""
    lam = theta[1:]
    tau = comp.tau
    m = lam.size
    if comp.q_star == 1.0:
        act = np.flatnonzero(lam != 0)
        P = np.zeros((m + 1, act.size + 1))
        P[0, 0] = 1.0
        P[act + 1, np.arange(1, act.size + 1)] = 1.0
        c = np.concatenate([[0.0], tau[act] * np.sign(lam[act])])
        phi = np.concatenate([[theta[0]], lam[act]])
        out = _newton_reparam(comp, theta, P, c, phi)
        if out is None or np.any(np.sign(out[1:][act]) != np.sign(lam[act])):
            return None
        return out
    if comp.q_star == INF:
        scaled = np.abs(tau * lam)
        M = scaled.max() if m else 0.0
        if M == 0.0:
            return _intercept_newton(comp.f, theta)
        tied = np.flatnonzero(scaled >= M * (1.0 - 1e-12))
        free = np.setdiff1d(np.arange(m), tied)
        P = np.zeros((m + 1, free.size + 2))
        P[0, 0] = 1.0
        P[tied + 1, 1] = np.sign(lam[tied]) / tau[tied]
        P[free + 1, 2 + np.arange(free.size)] = 1.0
        c = np.zeros(free.size + 2)
        c[1] = 1.0
        phi = np.concatenate([[theta[0], M], lam[free]])
        out = _newton_reparam(comp, theta, P, c, phi)
        if out is None:
            return None
        new = out[1:]
        M_new = tau[tied[0]] * new[tied[0]] * np.sign(lam[tied[0]])
        if M_new < 0 or np.any(np.abs(tau[free] * new[free]) > M_new):
            return None
        return out
    # q* = 2: smooth wherever lam != 0
    if not np.any(lam != 0):
        return _intercept_newton(comp.f, theta)
    return _newton_l2(comp, theta)


def _newton_l2(comp: _Composite, theta, max_iter=50):
    f, tau = comp.f, comp.tau
    t2 = tau * tau

    def total(th):
        v, g, h = f(th, want_hess=True)
        if v is None:
            return None, None, None
        lam = th[1:]
        s = math.sqrt(float(np.sum(t2 * lam * lam)))
        if s == 0.0:
            return None, None, None
        g = g.copy()
        g[1:] += t2 * lam / s
        h = h.copy()
        u = t2 * lam
        h[1:, 1:] += np.diag(t2) / s - np.outer(u, u) / s**3
        return v + s, g, h

    obj, grad, hess = total(theta)
    if obj is None:
        return None
    for _ in range(max_iter):
        if np.max(np.abs(grad)) <= 1e-15:
            break
        try:
            step = -linalg.solve(hess, grad, assume_a="pos", check_finite=False)
        except (linalg.LinAlgError, ValueError):
            return None
        t = 1.0
        for _ in range(40):
            cand = theta + t * step
            o_c, g_c, h_c = total(cand)
            if o_c is not None and o_c <= obj + 1e-4 * t * (grad @ step) + 1e-15:
                break
            t *= 0.5
        else:
            break
        improvement = obj - o_c
        theta, obj, grad, hess = cand, o_c, g_c, h_c
        if improvement < 1e-16 * max(1.0, abs(obj)) and t < 1:
            break
    return theta


def solve_soft(gen: Generator, prob: SoftProblem,
               opts: SoftOptions | None = None) -> SoftResult:
    """Soft Bregman calibration weights.

    The KKT gap reported is the natural residual of the per-unit scaled dual
    (unit proximal step); the intercept condition ``sum w = n`` is enforced
    by a final one-dimensional Newton solve.
    """
    opts = opts or SoftOptions()
    finite = np.flatnonzero(np.isfinite(prob.tau))
    smooth = _Smooth.build(gen, prob, finite)
    comp = _Composite(smooth, prob.tau[finite], prob.q_star)

    theta = np.zeros(finite.size + 1)
    theta = _intercept_newton(smooth, theta)
    iters = 0
    if finite.size:
        value, grad, _ = smooth(theta)
        gap = comp.gap(theta, grad)
        rounds = 0
        while gap > opts.tol and rounds < 50:
            rounds += 1
            theta, gap, it = _fista(comp, theta, opts, max(opts.tol, min(1e-4, gap * 1e-3)))
            iters += it
            if opts.polish:
                cand = _polish(comp, theta)
                if cand is not None:
                    v_c, g_c, _ = smooth(cand)
                    if v_c is not None:
                        gap_c = comp.gap(cand, g_c)
                        if gap_c < gap:
                            theta, gap = cand, gap_c
            if iters >= opts.max_iter:
                break
        theta = _intercept_newton(smooth, theta)
        value, grad, _ = smooth(theta)
        gap = comp.gap(theta, grad)
        if gap > max(opts.tol, 1e-6):
            w = smooth.weights(theta)
            raise MaxIterationsError(
                f"soft calibration KKT gap {gap:.3g} after {iters} iterations",
                result=_result(prob, finite, theta, w, gap, iters, smooth, comp, False))
    else:
        value, grad, _ = smooth(theta)
        gap = abs(float(grad[0]))
    w = smooth.weights(theta)
    return _result(prob, finite, theta, w, gap, iters, smooth, comp, True)


def _result(prob, finite, theta, w, gap, iters, smooth, comp, converged):
    lam = np.zeros(prob.p)
    lam[finite] = theta[1:]
    value = smooth(theta)[0]
    dual = prob.n * (value + comp.h(theta)) if value is not None else float("nan")
    return SoftResult(w, float(theta[0]), lam, np.flatnonzero(lam != 0), float(gap),
                      iters, float(dual), converged)


# -- tolerances and pilots ---------------------------------------------------------

def adaptive_tau(beta_pilot, tau_global: float) -> np.ndarray:
    """Outcome-guided tolerances ``tau / |beta_k|`` (``inf`` where ``beta_k = 0``)."""
    if not tau_global > 0:
        raise ValueError("global tolerance must be positive")
    b = np.abs(np.asarray(beta_pilot, dtype=float))
    out = np.full(b.shape, INF)
    nz = b > 0
    out[nz] = tau_global / b[nz]
    return out


def _ols(X, y):
    Xa = np.column_stack([np.ones(X.shape[0]), X])
    beta, _, rank, _ = np.linalg.lstsq(Xa, y, rcond=None)
    if rank < Xa.shape[1]:
        raise SingularFitError(
            f"OLS pilot is rank deficient (rank {rank} < {Xa.shape[1]}); "
            "use the lasso-refit pilot instead")
    return beta


def lasso_refit(X, y, n_folds: int = 5, n_alphas: int = 60, seed: int = 0):
    """Post-lasso OLS with the penalty chosen by K-fold CV and the one-SE rule.

    Returns ``(coef, support, alpha)``; ``coef`` excludes the intercept.
    """
    from sklearn.linear_model import lasso_path

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    mu, sd = X.mean(axis=0), X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / sd
    yc = y - y.mean()
    alpha_max = np.max(np.abs(Z.T @ yc)) / n
    if alpha_max == 0:
        return np.zeros(p), np.array([], dtype=int), 0.0
    alphas = np.geomspace(alpha_max, alpha_max * 1e-3, n_alphas)
    rng = np.random.default_rng(seed)
    folds = rng.permutation(n) % n_folds
    errs = np.zeros((n_folds, n_alphas))
    for k in range(n_folds):
        tr, te = folds != k, folds == k
        zm, ym = Z[tr].mean(axis=0), y[tr].mean()
        _, coefs, _ = lasso_path(Z[tr] - zm, y[tr] - ym, alphas=alphas)
        pred = (Z[te] - zm) @ coefs + ym
        errs[k] = np.mean((y[te][:, None] - pred) ** 2, axis=0)
    mean, se = errs.mean(axis=0), errs.std(axis=0, ddof=1) / np.sqrt(n_folds)
    best = int(np.argmin(mean))
    # alphas decrease along the path: the first index within one SE is the largest
    chosen = int(np.flatnonzero(mean <= mean[best] + se[best])[0])
    _, coefs, _ = lasso_path(Z - Z.mean(axis=0), yc, alphas=alphas[: chosen + 1])
    support = np.flatnonzero(coefs[:, -1] != 0)
    coef = np.zeros(p)
    if support.size:
        coef[support] = _ols(X[:, support], y)[1:]
    return coef, support, float(alphas[chosen])


def pilot_coef(X_resp, y, method: str = "ols", seed: int = 0) -> np.ndarray:
    """Pilot slopes for the adaptive tolerances (intercept fitted and dropped)."""
    X = np.asarray(X_resp, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[0] <= 2:
        raise ValueError("pilot needs more than two respondents")
    method = method.lower()
    if method == "ols":
        if X.shape[1] + 1 >= X.shape[0]:
            raise SingularFitError(
                f"OLS pilot needs n > p + 1 (n={X.shape[0]}, p={X.shape[1]}); "
                "use the lasso-refit pilot instead")
        return _ols(X, y)[1:]
    if method in ("lasso", "lassorefit", "lasso-refit"):
        return lasso_refit(X, y, seed=seed)[0]
    raise ValueError(f"unknown pilot method {method!r}")


# -- cross-validated tolerance -----------------------------------------------------

@dataclass(frozen=True)
class TauSelection:
    tau: float
    grid: np.ndarray
    criterion: np.ndarray
    failures: dict

    def curve_rows(self):
        return [{"tau": float(t), "criterion": float(c)}
                for t, c in zip(self.grid, self.criterion)]


def default_tau_grid(size: int = 20) -> np.ndarray:
    return np.geomspace(1e-5, 1e-1, size)


def cv_select_tau(gen: Generator, prob_builder, y, grid=None, K_cv: int = 5,
                  seed: int = 0, beta=None, opts: SoftOptions | None = None) -> TauSelection:
    """Pick the global tolerance minimizing a cross-validated error criterion.

    ``prob_builder(tau, rows)`` returns the :class:`SoftProblem` for global
    tolerance ``tau`` on respondent rows ``rows`` (all rows when ``None``).
    For each ``tau`` the criterion is the delete-a-fold jackknife variance of
    the soft-calibrated mean plus its sample-only variance estimate.
    """
    from .inference import var_sample_only

    grid = default_tau_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("tau grid is empty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("tau grid must be sorted")
    y = np.asarray(y, dtype=float)
    n = y.size
    if grid.size == 1:
        return TauSelection(float(grid[0]), grid, np.array([np.nan]), {})
    folds = np.random.default_rng(seed).permutation(n) % K_cv
    crit = np.full(grid.size, np.inf)
    failures = {}
    for j, tau in enumerate(grid):
        try:
            full = prob_builder(tau, None)
            res = solve_soft(gen, full, opts)
            mu_all = float(res.weights @ y) / n
            sq = 0.0
            for k in range(K_cv):
                rows = np.flatnonzero(folds != k)
                sub = prob_builder(tau, rows)
                r_k = solve_soft(gen, sub, opts)
                sq += (float(r_k.weights @ y[rows]) / rows.size - mu_all) ** 2
            Xa = np.column_stack([np.ones(n), full.Xt])
            b = beta if beta is not None else np.linalg.lstsq(Xa, y, rcond=None)[0]
            pi_hat = (n / full.N) / full.w0
            v = var_sample_only(Xa, y, pi_hat, b, mu_all, full.N).value
            crit[j] = sq * (K_cv - 1) / K_cv + v
        except (InfeasibleError, MaxIterationsError, DomainError) as exc:
            failures[float(tau)] = str(exc)
    if not np.isfinite(crit).any():
        lines = "; ".join(f"tau={t:g}: {m}" for t, m in failures.items())
        raise InfeasibleError(f"every tau in the grid failed: {lines}")
    return TauSelection(float(grid[int(np.argmin(crit))]), grid, crit, failures)
