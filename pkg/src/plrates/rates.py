"""Closed-form rate calculus for (S)GD near a (mu, L, sigma)-regular point.

``m_rate`` is the sharp asymptotic rate of the squared distance to the limit,
``pl_rate`` the classical PL/smoothness rate it improves on. Everything here is
a pure function of float64 scalars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpectralParams:
    """Curvature bounds ``0 < mu <= L`` and multiplicative noise level ``sigma``."""

    mu: float
    L: float
    sigma: float = 0.0

    def __post_init__(self):
        for name in ("mu", "L", "sigma"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.mu > self.L:
            raise ValueError(f"need mu <= L, got mu={self.mu}, L={self.L}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def kappa(self) -> float:
        return self.L / self.mu


@dataclass(frozen=True)
class RateCurvePoint:
    gamma: float
    m_value: float
    phi_value: float

    @property
    def stable(self) -> bool:
        return self.m_value < 1.0


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (gamma >= 0 and np.isfinite(gamma)):
        raise ValueError(f"step-size must be a finite nonnegative number, got {gamma!r}")
    return gamma


def branch_value(lam: float, sigma: float, gamma: float) -> float:
    """Per-eigenvalue second-moment factor ``(1 - gamma lam)^2 + gamma^2 sigma lam / 2``."""
    return (1.0 - gamma * lam) ** 2 + gamma * gamma * sigma * lam / 2.0


def m_rate(p: SpectralParams, gamma: float) -> float:
    gamma = _check_gamma(gamma)
    return max(branch_value(p.mu, p.sigma, gamma), branch_value(p.L, p.sigma, gamma))


def branch_point(p: SpectralParams) -> float:
    """Step-size where the mu-branch and L-branch of ``m_rate`` cross."""
    return 2.0 / (p.L + p.mu + p.sigma / 2.0)


def max_stable_step(p: SpectralParams) -> float:
    """Supremum of step-sizes with ``m_rate < 1``."""
    return 2.0 / (p.L + p.sigma / 2.0)


def optimal_step(p: SpectralParams) -> float:
    if p.sigma >= 2.0 * (p.L - p.mu):
        return 1.0 / (p.mu + p.sigma / 2.0)
    return 2.0 / (p.L + p.mu + p.sigma / 2.0)


def optimal_rate(p: SpectralParams) -> float:
    mu, L, s = p.mu, p.L, p.sigma
    if s >= 2.0 * (L - mu):
        return s / (2.0 * (mu + s / 2.0))
    return ((L - mu) ** 2 + s * (L + mu) + s * s / 4.0) / (L + mu + s / 2.0) ** 2


def pl_rate(p: SpectralParams, gamma: float) -> float:
    gamma = _check_gamma(gamma)
    return 1.0 - 2.0 * p.mu * gamma + gamma * gamma * p.L * (2.0 * p.mu + p.sigma) / 2.0


def pl_optimal(p: SpectralParams) -> tuple[float, float]:
    """Minimizer of ``pl_rate`` and the minimal value."""
    denom = p.L * (2.0 * p.mu + p.sigma)
    return 2.0 * p.mu / denom, 1.0 - 2.0 * p.mu**2 / denom


def contraction_ratio(p: SpectralParams) -> float:
    """Relative per-iteration contraction ``(1 - m*) / (1 - phi*)``.

    Evaluated with the regime formulas in the condition number ``kappa``;
    the low-condition regime is ``kappa <= 1 + sigma / (2 mu)``.
    """
    kappa = p.kappa
    s = 1.0 + p.sigma / (2.0 * p.mu)
    if kappa <= s:
        return kappa
    return 4.0 * kappa**2 * s / (kappa + s) ** 2


def rate_curve(p: SpectralParams, gammas) -> list[RateCurvePoint]:
    return [RateCurvePoint(float(g), m_rate(p, g), pl_rate(p, g)) for g in gammas]


def rate_summary(p: SpectralParams) -> dict[str, float]:
    gamma_phi, phi_star = pl_optimal(p)
    return {
        "mu": p.mu,
        "L": p.L,
        "sigma": p.sigma,
        "gamma_star": optimal_step(p),
        "m_star": optimal_rate(p),
        "gamma_phi": gamma_phi,
        "phi_star": phi_star,
        "branch_point": branch_point(p),
        "max_stable_step": max_stable_step(p),
        "ratio": contraction_ratio(p),
    }
