"""Data-generating processes and Monte Carlo drivers for the two simulation studies.

Study 1 draws four i.i.d. covariates from a normal(2, 1) truncated to (0, 4);
study 2 draws ``p`` correlated normal(2, AR-1) covariates.  Outcomes follow
OR0 (linear) or OR1 (interaction and square), response follows a logistic
model PS0 (linear) or PS1 (nonlinear).  Each replicate regenerates the whole
population; every estimator in a replicate sees the same data.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, ndtr, ndtri

from .entropy import get_generator
from .errors import CalibrationError
from .estimate import bc_weights, ds_weights, ipw
from .propensity import baseline_weights, fit_crossfitted
from .solver import CalibrationProblem, Scale
from .softcal import (SoftProblem, Standardizer, adaptive_tau, pilot_coef,
                      solve_soft)

logger = logging.getLogger(__name__)

THREADS_ENV = "BREGCAL_THREADS"


class OutcomeModel(str, enum.Enum):
    OR0 = "OR0"
    OR1 = "OR1"


class PropensityModel(str, enum.Enum):
    PS0 = "PS0"
    PS1 = "PS1"


def _as_enum(cls, value):
    return value if isinstance(value, cls) else cls(str(value).upper())


@dataclass(frozen=True)
class Scenario:
    """One population design.

    ``p_extra = 0`` selects study 1 (four truncated-normal covariates);
    ``p_extra > 0`` selects study 2 with that many AR-1 correlated covariates.
    """

    or_model: OutcomeModel = OutcomeModel.OR0
    ps_model: PropensityModel = PropensityModel.PS0
    N: int = 2000
    p_extra: int = 0
    rho: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "or_model", _as_enum(OutcomeModel, self.or_model))
        object.__setattr__(self, "ps_model", _as_enum(PropensityModel, self.ps_model))
        if self.N < 100:
            raise ValueError(f"population size must be at least 100, got {self.N}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.p_extra < 0 or 0 < self.p_extra < 3:
            raise ValueError("study 2 needs at least 3 covariates")

    @property
    def p(self) -> int:
        return self.p_extra if self.p_extra else 4


@dataclass(frozen=True)
class Population:
    X: np.ndarray
    y: np.ndarray
    pi: np.ndarray
    delta: np.ndarray

    @property
    def N(self) -> int:
        return self.y.size

    @property
    def n(self) -> int:
        return int(self.delta.sum())

    @property
    def mu(self) -> float:
        return float(self.y.mean())


def truncnorm_icdf(u, mean=2.0, sd=1.0, lo=0.0, hi=4.0):
    """Inverse-CDF draw from a truncated normal, one uniform per value."""
    a, b = ndtr((lo - mean) / sd), ndtr((hi - mean) / sd)
    z = ndtri(a + np.asarray(u) * (b - a))
    return np.clip(mean + sd * z, np.nextafter(lo, hi), np.nextafter(hi, lo))


def ar1_cov(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def outcome_mean(X, model: OutcomeModel) -> np.ndarray:
    x1, x2 = X[:, 0], X[:, 1]
    m = 1.0 + x1 - x2
    if OutcomeModel(model) == OutcomeModel.OR1:
        m = m + x1 * x2 + (x2 ** 2 - 1.0)
    return m


def propensity_logit(X, model: PropensityModel) -> np.ndarray:
    x2, x3 = X[:, 1], X[:, 2]
    if PropensityModel(model) == PropensityModel.PS0:
        return -1.0 - 0.25 * x2 + 0.5 * x3
    return -1.0 - 0.25 * (x2 - 3.0) * (x3 - 4.0) + 0.5 * (x2 - 2.5) ** 4


def gen_population(scn: Scenario, rng=None) -> Population:
    """Draw ``(x, y, pi, delta)`` for every unit of the population.

    The draw order is fixed (covariates, noise, response uniforms) so a given
    generator state always yields the same population.
    """
    rng = np.random.default_rng(scn.seed) if rng is None else rng
    N, p = scn.N, scn.p
    if scn.p_extra:
        L = np.linalg.cholesky(ar1_cov(p, scn.rho))
        X = 2.0 + rng.standard_normal((N, p)) @ L.T
    else:
        X = truncnorm_icdf(rng.random((N, p)))
    y = outcome_mean(X, scn.or_model) + rng.standard_normal(N)
    pi = expit(propensity_logit(X, scn.ps_model))
    delta = (rng.random(N) < pi).astype(float)
    return Population(X, y, pi, delta)


# -- Monte Carlo summaries ---------------------------------------------------------

@dataclass(frozen=True)
class EstimatorSummary:
    name: str
    bias: float
    se: float
    rmse: float
    mc_se: float
    failures: int = 0

    def scaled(self, factor: float = 100.0) -> dict:
        return {"estimator": self.name, "bias": self.bias * factor,
                "se": self.se * factor, "rmse": self.rmse * factor,
                "mc_se": self.mc_se * factor, "failures": self.failures}


@dataclass
class MCReport:
    """Per-estimator bias, SE and RMSE of ``mu_hat - mu`` across replicates.

    ``se`` uses divisor ``B`` so that ``rmse**2 == bias**2 + se**2``;
    ``mc_se`` is the Monte Carlo standard error of the bias.  Tables are
    reported multiplied by 100.
    """

    label: str
    estimators: list
    errors: np.ndarray          # B x E matrix of mu_hat - mu (nan on failure)
    runtime: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def B(self) -> int:
        return self.errors.shape[0]

    def summary(self, name: str) -> EstimatorSummary:
        j = self.estimators.index(name)
        e = self.errors[:, j]
        ok = e[np.isfinite(e)]
        if ok.size == 0:
            nan = float("nan")
            return EstimatorSummary(name, nan, nan, nan, nan, int(e.size))
        bias = float(ok.mean())
        se = float(np.sqrt(np.mean((ok - bias) ** 2)))
        rmse = float(np.sqrt(np.mean(ok ** 2)))
        mc_se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else float("nan")
        return EstimatorSummary(name, bias, se, rmse, mc_se, int(e.size - ok.size))

    def summaries(self) -> list:
        return [self.summary(name) for name in self.estimators]

    def rows(self, factor: float = 100.0) -> list:
        return [dict(label=self.label, B=self.B, **s.scaled(factor))
                for s in self.summaries()]

    def to_csv(self, factor: float = 100.0) -> str:
        buf = io.StringIO()
        fields = ["label", "estimator", "B", "bias", "se", "rmse", "mc_se", "failures"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in self.rows(factor):
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
        return buf.getvalue()

    def table(self, factor: float = 100.0) -> str:
        lines = [f"{self.label}  (B={self.B}, x{factor:g})",
                 f"{'estimator':<22}{'bias':>9}{'se':>9}{'rmse':>9}{'mc_se':>9}"]
        for s in self.summaries():
            d = s.scaled(factor)
            lines.append(f"{s.name:<22}{d['bias']:>9.3f}{d['se']:>9.3f}"
                         f"{d['rmse']:>9.3f}{d['mc_se']:>9.3f}"
                         + (f"  ({s.failures} failed)" if s.failures else ""))
        return "\n".join(lines)


def _replicate_seed(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), *[int(k) for k in keys]])


def _n_jobs(n_jobs):
    if n_jobs is None:
        n_jobs = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(n_jobs))


def _map(fn, args, n_jobs):
    # Results come back in argument order, so reports do not depend on scheduling.
    if n_jobs == 1 or len(args) < 2:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, args, chunksize=max(1, len(args) // (4 * n_jobs))))


def _try(fn):
    try:
        return fn()
    except CalibrationError as exc:
        logger.debug("replicate estimator failed: %s", exc)
        return float("nan")


# -- study 1 -------------------------------------------------------------------------

STUDY1_ESTIMATORS = ("IPW", "ET", "DS-EL", "BC-EL", "DS-HD", "BC-HD")
STUDY1_CELLS = ("ps0-or0", "ps0-or1", "ps1-or0", "ps1-or1")


def parse_cell(cell: str):
    ps, outcome = cell.lower().split("-")
    return PropensityModel(ps.upper()), OutcomeModel(outcome.upper())


@dataclass(frozen=True)
class Study1Config:
    cells: tuple = STUDY1_CELLS
    learners: tuple = ("glm", "spline")
    N: int = 2000
    B: int = 200
    K: int = 5
    seed: int = 2024
    n_jobs: int | None = None

    @classmethod
    def full_scale(cls, **kw):
        return cls(N=10000, B=500, **kw)


def _study1_replicate(args):
    cell_index, cell, learners, N, K, seed, rep = args
    ps, outcome = parse_cell(cell)
    ss = _replicate_seed(seed, 1, cell_index, rep)
    pop_seed, fold_seed = ss.spawn(2)
    pop = gen_population(Scenario(outcome, ps, N), np.random.default_rng(pop_seed))
    fold_int = int(fold_seed.generate_state(1)[0])
    resp = pop.delta.astype(bool)
    Z = np.column_stack([np.ones(N), pop.X])
    targets = Z.mean(axis=0)
    y = pop.y[resp]
    out = {}
    for learner in learners:
        fit = fit_crossfitted(pop.X, pop.delta, K=K, learner=learner, seed=fold_int)
        w0 = baseline_weights(fit, pop.delta)
        prob = CalibrationProblem(Z[resp], w0, targets, Scale.MEAN, N)
        n = prob.n
        row = [ipw(y, w0)]
        for key in ("ET", "DS-EL", "BC-EL", "DS-HD", "BC-HD"):
            if key == "ET":
                method, gen = "BC", get_generator("kl")
            else:
                method, gen = key.split("-")[0], get_generator(key.split("-")[1].lower())
            solver = bc_weights if method == "BC" else ds_weights
            row.append(_try(lambda: float(solver(gen, prob).weights @ y) / n))
        out[learner] = np.asarray(row) - pop.mu
    return out


def run_study1(config: Study1Config | None = None) -> list:
    """Monte Carlo for study 1; one :class:`MCReport` per (cell, learner)."""
    config = config or Study1Config()
    reports = []
    for ci, cell in enumerate(config.cells):
        parse_cell(cell)
        start = time.perf_counter()
        args = [(STUDY1_CELLS.index(cell), cell, tuple(config.learners), config.N,
                 config.K, config.seed, r) for r in range(config.B)]
        results = _map(_study1_replicate, args, _n_jobs(config.n_jobs))
        elapsed = time.perf_counter() - start
        for learner in config.learners:
            errors = np.vstack([res[learner] for res in results])
            reports.append(MCReport(f"{cell}/{learner}", list(STUDY1_ESTIMATORS), errors,
                                    elapsed / len(config.learners),
                                    {"cell": cell, "learner": learner, "N": config.N,
                                     "K": config.K, "seed": config.seed}))
    return reports


# -- study 2 -------------------------------------------------------------------------

@dataclass(frozen=True)
class Study2Config:
    N: int = 2000
    p: int = 50
    rho: float = 0.5
    B: int = 200
    K: int = 5
    tau: float = 5e-4
    generators: tuple = ("el", "kl", "hd")
    qs: tuple = (1.0, 2.0, math.inf)
    pilots: tuple = ("ols", "lasso")
    learner: str = "lasso-glm"
    tau_grid: tuple = ()
    seed: int = 2024
    n_jobs: int | None = None

    @classmethod
    def full_scale(cls, **kw):
        return cls(N=10000, p=500, B=500, **kw)


def _qlabel(q: float) -> str:
    return "inf" if math.isinf(q) else f"{q:g}"


def _gen_label(key: str) -> str:
    return {"kl": "ET", "el": "EL", "hd": "HD"}.get(key, key.upper())


def study2_estimators(config: Study2Config) -> list:
    names = ["IPW"]
    for key in config.generators:
        g = _gen_label(key)
        names += [f"Full-{g}", f"Oracle-{g}"]
        for pilot in config.pilots:
            names += [f"SBC-{pilot}-q{_qlabel(q)}-{g}" for q in config.qs]
    return names


def _study2_replicate(args):
    config, rep = args
    ss = _replicate_seed(config.seed, 2, rep)
    pop_seed, fold_seed = ss.spawn(2)
    scn = Scenario(OutcomeModel.OR0, PropensityModel.PS0, config.N, config.p, config.rho)
    pop = gen_population(scn, np.random.default_rng(pop_seed))
    fold_int = int(fold_seed.generate_state(1)[0])
    N, resp = pop.N, pop.delta.astype(bool)
    y = pop.y[resp]
    fit = fit_crossfitted(pop.X, pop.delta, K=config.K, learner=config.learner,
                          seed=fold_int)
    w0 = baseline_weights(fit, pop.delta)
    n = w0.size
    Z = np.column_stack([np.ones(N), pop.X])
    full = CalibrationProblem(Z[resp], w0, Z.mean(axis=0), Scale.MEAN, N)
    oracle = CalibrationProblem(Z[resp][:, :3], w0, Z[:, :3].mean(axis=0), Scale.MEAN, N)
    std = Standardizer.from_population(pop.X)
    Xt = std.transform(pop.X[resp])
    betas = {}
    for pilot in config.pilots:
        betas[pilot] = _try(lambda: pilot_coef(Xt, y, pilot, seed=fold_int))

    def sbc(gen, q, beta, tau):
        if np.isscalar(beta):
            return float("nan")
        prob = SoftProblem(Xt, w0, q, adaptive_tau(beta, tau), N)
        return float(solve_soft(gen, prob).weights @ y) / n

    row = [ipw(y, w0)]
    curve = []
    for key in config.generators:
        gen = get_generator(key)
        row.append(_try(lambda: float(bc_weights(gen, full).weights @ y) / n))
        row.append(_try(lambda: float(bc_weights(gen, oracle).weights @ y) / n))
        for pilot in config.pilots:
            for q in config.qs:
                row.append(_try(lambda: sbc(gen, q, betas[pilot], config.tau)))
                for tau in config.tau_grid:
                    est = _try(lambda: sbc(gen, q, betas[pilot], tau))
                    curve.append((_gen_label(key), pilot, _qlabel(q), tau, est - pop.mu))
    return np.asarray(row) - pop.mu, curve


@dataclass
class Study2Result:
    report: MCReport
    curves: list

    def curve_rows(self, factor: float = 100.0) -> list:
        """Long-format RMSE-vs-tau rows (one per generator, pilot, q, tau)."""
        groups = {}
        for gen, pilot, q, tau, err in self.curves:
            groups.setdefault((gen, pilot, q, tau), []).append(err)
        rows = []
        for (gen, pilot, q, tau), errs in sorted(groups.items()):
            e = np.asarray(errs)
            ok = e[np.isfinite(e)]
            rmse = float(np.sqrt(np.mean(ok ** 2))) * factor if ok.size else float("nan")
            rows.append({"generator": gen, "pilot": pilot, "q": q, "tau": tau,
                         "rmse": rmse, "failures": int(e.size - ok.size)})
        return rows

    def curves_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["generator", "pilot", "q", "tau", "rmse",
                                                 "failures"], lineterminator="\n")
        writer.writeheader()
        for row in self.curve_rows():
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})
        return buf.getvalue()


def run_study2(config: Study2Config | None = None) -> Study2Result:
    """Monte Carlo for study 2 (OR0/PS0 with many correlated covariates)."""
    config = config or Study2Config()
    start = time.perf_counter()
    results = _map(_study2_replicate, [(config, r) for r in range(config.B)],
                   _n_jobs(config.n_jobs))
    errors = np.vstack([r[0] for r in results])
    curves = [c for r in results for c in r[1]]
    meta = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()}
    report = MCReport(f"study2/N={config.N}/p={config.p}", study2_estimators(config),
                      errors, time.perf_counter() - start, meta)
    return Study2Result(report, curves)
