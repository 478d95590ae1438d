"""Gradient-noise models with conditional mean zero and second moment bounded by the gap.

Each model draws from an explicit ``numpy.random.Generator`` owned by the
caller, so replicas never share state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objectives import Array, InterpolatingLeastSquares, Objective


def replica_rng(base_seed: int, replica: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(base_seed, replica)``."""
    ss = np.random.SeedSequence(entropy=int(base_seed) % 2**64, spawn_key=(int(replica),))
    return np.random.Generator(np.random.Philox(ss))


def aux_rng(base_seed: int, tag: int) -> np.random.Generator:
    """Stream for auxiliary sampling (probes, PL samples), disjoint from every replica stream."""
    ss = np.random.SeedSequence(entropy=int(base_seed) % 2**64, spawn_key=(2**32 + int(tag),))
    return np.random.Generator(np.random.Philox(ss))


class NoiseModel:
    #: declared multiplicative-noise constant, or ``None`` when it must be estimated empirically
    nominal_sigma: float | None = None

    def sample(self, theta: Array, obj: Objective, rng: np.random.Generator) -> Array:
        raise NotImplementedError

    def sample_many(self, theta: Array, obj: Objective, rng: np.random.Generator, n: int) -> Array:
        return np.stack([self.sample(theta, obj, rng) for _ in range(n)])


@dataclass(frozen=True)
class ZeroNoise(NoiseModel):
    nominal_sigma: float = 0.0

    def sample(self, theta, obj, rng):
        return np.zeros_like(theta, dtype=float)

    def sample_many(self, theta, obj, rng, n):
        return np.zeros((n, np.size(theta)))


def zero_noise() -> ZeroNoise:
    return ZeroNoise()


def psd_sqrt(A) -> Array:
    w, v = np.linalg.eigh(A)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True, eq=False)
class SharpQuadraticNoise(NoiseModel):
    """``D = eta * A^{1/2} theta`` with Rademacher ``eta`` scaled to ``E[eta^2] = sigma/2``.

    For ``f = <A theta, theta>/2`` this attains the multiplicative bound with
    equality: ``E|D|^2 = sigma * f(theta)``.
    """

    A: Array
    sigma: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.abs(A).max()):
            raise ValueError("A must be symmetric")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sqrt_A", psd_sqrt((A + A.T) / 2))
        object.__setattr__(self, "eta_scale", float(np.sqrt(self.sigma / 2.0)))

    @property
    def nominal_sigma(self) -> float:
        return float(self.sigma)

    def _eta(self, rng, size=None):
        return self.eta_scale * (2.0 * rng.integers(0, 2, size=size) - 1.0)

    def sample(self, theta, obj, rng):
        return self._eta(rng) * (self.sqrt_A @ theta)

    def sample_many(self, theta, obj, rng, n):
        return np.outer(self._eta(rng, n), self.sqrt_A @ theta)


def sharp_quadratic_noise(A, sigma: float) -> SharpQuadraticNoise:
    return SharpQuadraticNoise(A=A, sigma=sigma)


@dataclass(frozen=True, eq=False)
class MinibatchNoise(NoiseModel):
    """Mini-batch gradient minus full gradient for interpolating least squares.

    Rows are drawn uniformly with replacement by default.
    """

    obj: InterpolatingLeastSquares
    batch: int
    replacement: bool = True

    def __post_init__(self):
        if not 1 <= self.batch <= self.obj.n_samples:
            raise ValueError(f"batch must lie in [1, {self.obj.n_samples}], got {self.batch}")

    nominal_sigma = None

    @property
    def sigma_upper_bound(self) -> float:
        """Analytic noise constant for with-replacement sampling: ``2 max_i |a_i|^2 / M``."""
        return 2.0 * float(np.max(np.sum(self.obj.A**2, axis=1))) / self.batch

    def _indices(self, rng, size):
        n = self.obj.n_samples
        if self.replacement:
            return rng.integers(0, n, size=size)
        if len(size) == 1:
            return rng.choice(n, size=self.batch, replace=False)
        return np.stack([rng.choice(n, size=self.batch, replace=False) for _ in range(size[0])])

    def sample(self, theta, obj, rng):
        A = self.obj.A
        # residuals taken from the full product so they vanish exactly at theta_star
        r = self.obj.residuals(theta)
        idx = self._indices(rng, (self.batch,))
        return A[idx].T @ r[idx] / self.batch - A.T @ r / self.obj.n_samples

    def sample_many(self, theta, obj, rng, n):
        A = self.obj.A
        r = self.obj.residuals(theta)
        idx = self._indices(rng, (n, self.batch))
        per_sample = A[idx] * r[idx][..., None]
        return per_sample.mean(axis=1) - A.T @ r / self.obj.n_samples


def minibatch_noise(obj: InterpolatingLeastSquares, batch: int, replacement: bool = True) -> MinibatchNoise:
    return MinibatchNoise(obj=obj, batch=batch, replacement=replacement)


@dataclass(frozen=True)
class SigmaEstimate:
    value: float
    stderr: float
    ratios: Array

    def upper(self, k: float = 3.0) -> float:
        return self.value + k * self.stderr


def effective_sigma(model: NoiseModel, obj: Objective, probe_points, draws: int, rng) -> SigmaEstimate:
    """Monte Carlo estimate of ``max_theta E|D|^2 / (f(theta) - f_min)`` over the probe points."""
    ratios, errs = [], []
    for theta in np.atleast_2d(np.asarray(probe_points, dtype=float)):
        gap = obj.gap(theta)
        if not gap > 1e-300:
            raise ValueError("probe point lies at the minimum; the ratio is undefined")
        sq = np.sum(model.sample_many(theta, obj, rng, draws) ** 2, axis=1)
        ratios.append(sq.mean() / gap)
        errs.append(sq.std(ddof=1) / np.sqrt(draws) / gap if draws > 1 else np.inf)
    ratios = np.array(ratios)
    i = int(np.argmax(ratios))
    return SigmaEstimate(value=float(ratios[i]), stderr=float(errs[i]), ratios=ratios)
