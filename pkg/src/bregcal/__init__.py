"""Bregman-divergence calibration weighting.

Exact and soft calibration of survey or missing-data weights, cross-fitted
propensity baselines, variance estimators and Monte Carlo drivers.
"""

__version__ = "0.1.0"

from .entropy import (GENERATOR_KEYS, Generator, GeneratorKind, bregman_div,
                      conjugacy_report, conjugate_div, get_generator)
from .errors import (CalibrationError, DegenerateFoldError, DomainError,
                     InfeasibleError, MaxIterationsError, SingularFitError,
                     UnsupportedWithoutFrame)
from .estimate import (Target, WeightedRegCoef, bc_estimate, bc_weights,
                       dp_estimate, ds_estimate, ds_weights, generator_coef, ipw,
                       weighted_reg_coef)
from .inference import (JointInclusion, VarianceEstimate, VarianceMethod,
                        var_design, var_missing_eta, var_sample_only)
from .propensity import Learner, PropensityFit, baseline_weights, fit_crossfitted
from .softcal import (SoftOptions, SoftProblem, SoftResult, Standardizer,
                      adaptive_tau, cv_select_tau, pilot_coef, solve_soft)
from .solver import (CalibrationProblem, CalibrationResult, Scale, SolverOptions,
                     dual_grad, dual_hess, dual_value, solve, solve_ds)

__all__ = [
    "GENERATOR_KEYS", "Generator", "GeneratorKind", "bregman_div", "conjugacy_report",
    "conjugate_div", "get_generator",
    "CalibrationError", "DegenerateFoldError", "DomainError", "InfeasibleError",
    "MaxIterationsError", "SingularFitError", "UnsupportedWithoutFrame",
    "Target", "WeightedRegCoef", "bc_estimate", "bc_weights", "dp_estimate",
    "ds_estimate", "ds_weights", "generator_coef", "ipw", "weighted_reg_coef",
    "JointInclusion", "VarianceEstimate", "VarianceMethod", "var_design",
    "var_missing_eta", "var_sample_only",
    "Learner", "PropensityFit", "baseline_weights", "fit_crossfitted",
    "SoftOptions", "SoftProblem", "SoftResult", "Standardizer", "adaptive_tau",
    "cv_select_tau", "pilot_coef", "solve_soft",
    "CalibrationProblem", "CalibrationResult", "Scale", "SolverOptions", "dual_grad",
    "dual_hess", "dual_value", "solve", "solve_ds",
]
