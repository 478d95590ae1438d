"""Second-order diagnostics at minimizers.

Hessian spectra (cyclic Jacobi), kernel dimension of the minima set, sampled
PL constants, and the per-step contraction of the normal component in chart
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .objectives import Array, Objective, RingValleyObjective
from .rates import SpectralParams, m_rate


def hessian_fd(obj: Objective, theta, h: float | None = None) -> Array:
    """Central differences of the gradient, symmetrized."""
    theta = np.asarray(theta, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + np.linalg.norm(theta))
    if not h > 0:
        raise ValueError("h must be positive")
    d = theta.size
    H = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        H[:, j] = (obj.grad(theta + e) - obj.grad(theta - e)) / (2 * h)
    if not np.isfinite(H).all():
        raise FloatingPointError("non-finite finite-difference Hessian")
    return (H + H.T) / 2


def jacobi_eigh(H, rtol: float = 1e-12, max_sweeps: int = 100) -> tuple[Array, Array]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm is below ``rtol * |H|_F``.
    Returns ascending eigenvalues and the matching orthonormal eigenvectors
    (columns).
    """
    A = np.array(H, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n < 2 or scale == 0.0:
        w = np.diag(A).copy()
        order = np.argsort(w)
        return w[order], V[:, order]
    target = rtol * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off < target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-18 * scale:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rp, rq = A[p].copy(), A[q].copy()
                A[p], A[q] = c * rp - s * rq, s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: list[float]
    kernel_dim: int
    mu_hat: float
    L_hat: float
    tol: float

    def to_json(self) -> dict:
        return {
            "eigenvalues": list(self.eigenvalues),
            "kernel_dim": self.kernel_dim,
            "mu_hat": self.mu_hat,
            "L_hat": self.L_hat,
            "tol": self.tol,
        }


def spectrum(H, tol: float | None = None) -> SpectrumReport:
    """Eigenvalues, kernel dimension and extreme positive eigenvalues of a symmetric matrix.

    The default kernel tolerance is ``1e-6 * max(1, |H|_2)``.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    if np.max(np.abs(H - H.T), initial=0.0) > 1e-10 * max(np.abs(H).max(initial=0.0), 1e-300):
        raise ValueError("H must be symmetric")
    w, _ = jacobi_eigh((H + H.T) / 2)
    if tol is None:
        tol = 1e-6 * max(1.0, float(np.abs(w).max(initial=0.0)))
    kernel = int(np.sum(np.abs(w) < tol))
    pos = w[w >= tol]
    mu_hat = float(pos.min()) if pos.size else float("nan")
    L_hat = float(pos.max()) if pos.size else float("nan")
    return SpectrumReport([float(x) for x in w], kernel, mu_hat, L_hat, float(tol))


def pl_constant_estimate(obj: Objective, center, radius: float, samples: int, rng: np.random.Generator,
                         min_gap: float = 1e-12) -> float:
    """Smallest sampled ``|grad f|^2 / (2 (f - f_min))``.

    Samples are uniform in the ball of ``radius`` around ``center``; with
    ``center=None`` they come from the objective's tube around its minima set.
    """
    if not radius > 0 or samples < 1:
        raise ValueError("need radius > 0 and samples >= 1")
    if center is None:
        if not hasattr(obj, "sample_tube"):
            raise ValueError(f"{type(obj).__name__} cannot sample a tube around its minima")
        pts = obj.sample_tube(radius, samples, rng)
    else:
        center = np.asarray(center, dtype=float)
        d = center.size
        u = rng.standard_normal((samples, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts = center + radius * u * rng.uniform(0, 1, (samples, 1)) ** (1.0 / d)
    best = np.inf
    for theta in pts:
        gap = obj.gap(theta)
        if gap < min_gap:
            continue
        g = obj.grad(theta)
        best = min(best, float(g @ g) / (2.0 * gap))
    if not np.isfinite(best):
        raise ValueError("no informative samples (all gaps below threshold)")
    return best


class Chart:
    """Local coordinates in which minimizers lie in ``R^{d_T} x {0}``."""

    d_tangent: int

    def forward(self, theta) -> Array:
        raise NotImplementedError

    def proj_N(self, coords) -> Array:
        return np.asarray(coords)[..., self.d_tangent:]

    def in_domain(self, theta) -> bool:
        raise NotImplementedError

    def normal_sq(self, theta) -> float:
        v = self.proj_N(self.forward(theta))
        return float(v @ v)


@dataclass(frozen=True)
class RingValleyChart(Chart):
    """``(x, y, z) -> (atan2(z, y), x, sqrt(y^2 + z^2) - 1)``; valid off the x-axis."""

    obj: RingValleyObjective = field(default_factory=RingValleyObjective)
    d_tangent: int = 1

    def forward(self, theta):
        x, y, z = np.asarray(theta, dtype=float)
        return np.array([np.arctan2(z, y), x, np.hypot(y, z) - 1.0])

    def in_domain(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.isfinite(theta).all() and np.hypot(theta[1], theta[2]) > 0)


@dataclass
class ContractionReport:
    fraction: float
    passed: bool
    rate_bound: float
    k: list[int]
    normsq_ratio: list[float]
    bound: list[float]
    excluded: int = 0

    def to_json(self) -> dict:
        return {"fraction": self.fraction, "passed": self.passed, "rate_bound": self.rate_bound,
                "n_checked": len(self.k), "excluded": self.excluded}

    def rows(self):
        return zip(self.k, self.normsq_ratio, self.bound)


def _usable_steps(q: Array, floor: float, headroom: float) -> Array:
    thresh = floor
    if q[-1] < q[0]:
        thresh = max(floor, headroom * q[-1])
    return q[:-1] >= thresh


def descent_contraction_check(
    chart: Chart,
    iterates,
    gamma: float,
    params: SpectralParams,
    eps: float,
    tail_fraction: float = 0.8,
    floor: float = 1e-200,
    headroom: float = 1e4,
    se_allowance: float = 3.0,
) -> ContractionReport:
    """Check ``|proj_N Phi(theta_k)|^2 <= (m(gamma) + eps) |proj_N Phi(theta_{k-1})|^2`` on the tail.

    ``iterates`` holds consecutive iterates, shape ``(steps+1, d)``, for a
    single deterministic run (checked step by step), or shape
    ``(replicas, steps+1, d)`` for an ensemble, in which case the replica mean
    is checked with ``se_allowance`` standard errors of slack.

    Convergent steps are those whose starting normal distance is above the
    floor (and, for decaying sequences, ``headroom`` times the final one);
    the check covers the last ``tail_fraction`` of them.
    """
    its = np.asarray(iterates, dtype=float)
    ensemble = its.ndim == 3
    if not ensemble:
        its = its[None]
    R, n, _ = its.shape
    q = np.full((R, n), np.nan)
    excluded = 0
    for r in range(R):
        for i in range(n):
            if chart.in_domain(its[r, i]):
                q[r, i] = chart.normal_sq(its[r, i])
    bad = np.isnan(q).any(axis=0)
    excluded = int(bad.sum())
    mean = q.mean(axis=0)
    se = q.std(axis=0, ddof=1) / np.sqrt(R) if ensemble and R > 1 else np.zeros(n)
    rho = m_rate(params, gamma) + eps

    ok_from = ~(bad[:-1] | bad[1:])
    with np.errstate(invalid="ignore"):
        usable = ok_from & _usable_steps(np.where(np.isnan(mean), 0.0, mean), floor, headroom)
    steps = np.flatnonzero(usable) + 1
    steps = steps[int(np.floor((1.0 - tail_fraction) * steps.size)):]
    ks, ratios, bounds, hits = [], [], [], 0
    for k in steps:
        prev, cur = mean[k - 1], mean[k]
        ok = cur - se_allowance * se[k] <= rho * prev
        hits += bool(ok)
        ks.append(int(k))
        ratios.append(float(cur / prev))
        bounds.append(float(rho))
    frac = hits / len(ks) if ks else float("nan")
    return ContractionReport(
        fraction=frac,
        passed=bool(ks) and hits == len(ks),
        rate_bound=float(rho),
        k=ks,
        normsq_ratio=ratios,
        bound=bounds,
        excluded=excluded,
    )
