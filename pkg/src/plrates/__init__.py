"""Asymptotic rates of (S)GD near minimizers satisfying a local PL inequality."""

from .engine import RunConfig, Trajectory, exact_fourth_moment, exact_second_moment, run, run_ensemble
from .estimator import FitWindow, RateReport, Verdict, aggregate, estimate_limit, fit_rate, fit_series
from .geometry import RingValleyChart, descent_contraction_check, hessian_fd, pl_constant_estimate, spectrum
from .noise import effective_sigma, minibatch_noise, sharp_quadratic_noise, zero_noise
from .objectives import InterpolatingLeastSquares, QuadraticObjective, RingValleyObjective, local_spectrum
from .rates import (
    SpectralParams,
    branch_point,
    contraction_ratio,
    m_rate,
    max_stable_step,
    optimal_rate,
    optimal_step,
    pl_optimal,
    pl_rate,
)

__version__ = "0.1.0"
