"""Limit estimation, log-linear rate fits and verdicts against the theoretical rate."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .engine import UNDERFLOW_GAP, RunConfig, Trajectory, run
from .noise import NoiseModel
from .objectives import Array, Objective
from .rates import SpectralParams, m_rate, pl_rate

MIN_POINTS = 10


class InconclusiveError(RuntimeError):
    pass


class Verdict(str, enum.Enum):
    MATCHES_M = "MATCHES_M"
    BELOW_M = "BELOW_M"
    ABOVE_M_WITHIN_EPS = "ABOVE_M_WITHIN_EPS"
    INCONCLUSIVE = "INCONCLUSIVE"

    @property
    def passing(self) -> bool:
        return self in (Verdict.MATCHES_M, Verdict.BELOW_M)


@dataclass(frozen=True)
class FitWindow:
    """Fit range and residual filters.

    ``None`` bounds are chosen automatically: ``k_end`` is the last usable
    record, ``k_start`` skips the first ``burn_in`` fraction of ``[0, k_end]``.
    """

    k_start: int | None = None
    k_end: int | None = None
    floor: float = 1e-200
    headroom: float = 1e4
    burn_in: float = 0.2

    def __post_init__(self):
        if self.k_start is not None and self.k_end is not None and self.k_start >= self.k_end:
            raise ValueError("need k_start < k_end")


@dataclass(frozen=True)
class FitResult:
    rate: float
    stderr: float
    r_squared: float
    slope: float
    slope_stderr: float
    k_start: int
    k_end: int
    n_points: int
    dropped: int


def fit_series(k, r, window: FitWindow = FitWindow(), gaps=None, exact_reference: bool = False) -> FitResult:
    """Least-squares fit of ``log r_k = a + k log(rate)`` inside the window.

    Residuals below ``window.floor``, non-positive or non-finite residuals,
    and records whose objective gap underflowed are dropped. Unless the
    reference point is exact, residuals must also exceed ``headroom`` times
    the final residual (bias control for an estimated limit).
    """
    k = np.asarray(k, dtype=float)
    r = np.asarray(r, dtype=float)
    with np.errstate(invalid="ignore"):
        usable = np.isfinite(r) & (r > 0) & (r >= window.floor)
        if gaps is not None:
            usable &= np.asarray(gaps) >= UNDERFLOW_GAP
        if not exact_reference and r.size and np.isfinite(r[-1]) and r[-1] > 0:
            usable &= r >= window.headroom * r[-1]
    if not usable.any():
        raise InconclusiveError("no usable residuals")
    k_end = window.k_end if window.k_end is not None else int(k[usable].max())
    k_start = window.k_start if window.k_start is not None else int(np.ceil(window.burn_in * k_end))
    if k_start >= k_end:
        raise InconclusiveError(f"empty fit window [{k_start}, {k_end}]")
    inside = (k >= k_start) & (k <= k_end)
    sel = inside & usable
    n = int(sel.sum())
    if n < MIN_POINTS:
        raise InconclusiveError(f"only {n} usable points in window [{k_start}, {k_end}]")
    y = np.log(r[sel])
    if np.ptp(y) == 0.0:
        slope, slope_se, r2 = 0.0, 0.0, 1.0
    else:
        res = stats.linregress(k[sel], y)
        slope, slope_se, r2 = res.slope, res.stderr, res.rvalue**2
    rate = float(np.exp(slope))
    return FitResult(
        rate=rate,
        stderr=rate * float(slope_se),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        slope=float(slope),
        slope_stderr=float(slope_se),
        k_start=int(k_start),
        k_end=int(k_end),
        n_points=n,
        dropped=int((inside & ~usable).sum()),
    )


def fit_rate(traj: Trajectory, theta_inf, window: FitWindow = FitWindow(), exact_reference: bool = False) -> FitResult:
    """Rate of ``|theta_k - theta_inf|^2``; fills ``traj.dist_sq`` as a side effect."""
    traj.set_reference(theta_inf)
    return fit_series(traj.k, traj.dist_sq, window, gaps=traj.f_gap, exact_reference=exact_reference)


def fit_gap_rate(traj: Trajectory, window: FitWindow = FitWindow()) -> FitResult:
    # f_min is known exactly, so no headroom constraint applies
    return fit_series(traj.k, traj.f_gap, window, gaps=traj.f_gap, exact_reference=True)


@dataclass(frozen=True)
class LimitEstimate:
    theta: Array
    grad_norm: float
    ok: bool
    exact: bool = False
    snapped: bool = False


def estimate_limit(
    obj: Objective,
    noise: NoiseModel,
    cfg: RunConfig,
    traj: Trajectory | None = None,
    snap_limit: bool = False,
    grad_tol: float = 1e-10,
) -> LimitEstimate:
    """Limit point of replica ``traj.replica``: the final iterate of the same run extended to ``2*steps``.

    Objectives with a unique minimizer return it directly (``exact=True``).
    """
    if traj is not None and traj.diverged:
        return LimitEstimate(theta=traj.theta_end, grad_norm=np.inf, ok=False)
    unique = obj.unique_minimizer
    if unique is not None:
        return LimitEstimate(theta=unique, grad_norm=float(np.linalg.norm(obj.grad(unique))), ok=True, exact=True)
    replica = traj.replica if traj is not None else 0
    ext_cfg = RunConfig(cfg.gamma, 2 * cfg.steps, cfg.theta0, 1, cfg.base_seed, 2 * cfg.steps)
    ext = run(obj, noise, ext_cfg, replica)
    if ext.diverged:
        return LimitEstimate(theta=ext.theta_end, grad_norm=np.inf, ok=False)
    theta = ext.theta_end
    snapped = False
    if snap_limit:
        proj = obj.manifold_projection(theta)
        if proj is not None and np.linalg.norm(proj - theta) < 1e-8:
            theta, snapped = proj, True
    g = float(np.linalg.norm(obj.grad(theta)))
    ok = g <= grad_tol * (1.0 + float(np.linalg.norm(theta)))
    return LimitEstimate(theta=theta, grad_norm=g, ok=ok, snapped=snapped)


@dataclass
class RateReport:
    empirical_rate: float
    stderr: float
    iqr: float
    r_squared: float
    theory_m: float
    theory_phi: float
    gamma: float
    mu: float
    L: float
    sigma: float
    verdict: Verdict
    n_replicas: int
    window: dict = field(default_factory=dict)
    sigma_is_estimate: bool = False

    def to_json(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


def classify(rate: float, theory_m: float, eps_tol: float = 0.02, eps_band: float = 0.1) -> Verdict:
    if not np.isfinite(rate):
        return Verdict.INCONCLUSIVE
    if abs(rate - theory_m) <= eps_tol:
        return Verdict.MATCHES_M
    if rate < theory_m:
        return Verdict.BELOW_M
    if rate <= theory_m + max(eps_band, eps_tol):
        return Verdict.ABOVE_M_WITHIN_EPS
    return Verdict.INCONCLUSIVE


def aggregate(
    fits: list[FitResult | None],
    params: SpectralParams,
    gamma: float,
    eps_tol: float = 0.02,
    eps_band: float = 0.1,
    sigma_is_estimate: bool = False,
) -> RateReport:
    """Median over per-replica fits with IQR, and the verdict against ``m(gamma)``.

    ``None`` entries are inconclusive replicas; if every replica is
    inconclusive the verdict is INCONCLUSIVE.
    """
    m, phi = m_rate(params, gamma), pl_rate(params, gamma)
    good = [f for f in fits if f is not None]
    base = dict(theory_m=m, theory_phi=phi, gamma=float(gamma), mu=params.mu, L=params.L, sigma=params.sigma,
                sigma_is_estimate=sigma_is_estimate)
    if not good:
        return RateReport(np.nan, np.nan, np.nan, np.nan, verdict=Verdict.INCONCLUSIVE, n_replicas=0, **base)
    rates = np.array([f.rate for f in good])
    med = float(np.median(rates))
    q1, q3 = np.percentile(rates, [25, 75])
    i_med = int(np.argmin(np.abs(rates - med)))
    spread = 1.2533 * rates.std(ddof=1) / np.sqrt(rates.size) if rates.size > 1 else 0.0
    stderr = float(np.hypot(good[i_med].stderr, spread))
    return RateReport(
        empirical_rate=med,
        stderr=stderr,
        iqr=float(q3 - q1),
        r_squared=float(np.median([f.r_squared for f in good])),
        verdict=classify(med, m, eps_tol, eps_band),
        n_replicas=len(good),
        window={"k_start": min(f.k_start for f in good), "k_end": max(f.k_end for f in good)},
        **base,
    )


def report_from_fit(fit: FitResult | None, params: SpectralParams, gamma: float, n_replicas: int,
                    eps_tol: float = 0.02, eps_band: float = 0.1, sigma_is_estimate: bool = False) -> RateReport:
    """Report for a single fit of an ensemble-mean sequence."""
    rep = aggregate([fit], params, gamma, eps_tol, eps_band, sigma_is_estimate)
    if fit is not None:
        rep.n_replicas = n_replicas
    return rep


def _stack(trajs: list[Trajectory], attr: str, fill: float) -> tuple[np.ndarray, np.ndarray]:
    k = max((t.k for t in trajs), key=len)
    vals = np.full((len(trajs), len(k)), fill)
    for i, t in enumerate(trajs):
        v = getattr(t, attr)
        vals[i, : len(v)] = v
    return k, vals


def ensemble_mean(trajs: list[Trajectory], attr: str = "dist_sq") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-record mean and standard error across replicas.

    Records missing because a replica diverged count as ``inf``.
    """
    k, vals = _stack(trajs, attr, np.inf)
    with np.errstate(invalid="ignore", over="ignore"):
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(len(trajs)) if len(trajs) > 1 else np.zeros_like(mean)
    return k, mean, se


def median_log_curve(trajs: list[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    k, vals = _stack(trajs, "dist_sq", np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(vals)
    logs[~np.isfinite(logs)] = np.nan
    out = np.full(len(k), np.nan)
    has = ~np.all(np.isnan(logs), axis=0)
    out[has] = np.nanmedian(logs[:, has], axis=0)
    return k, out
