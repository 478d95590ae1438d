"""Experiment pipelines behind the CLI: simulate, estimate, sweep, geometry."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig, build_noise, build_objective, run_config
from .engine import RunConfig, Trajectory, divergence_count, run_ensemble
from .estimator import (
    FitResult,
    InconclusiveError,
    LimitEstimate,
    RateReport,
    Verdict,
    aggregate,
    ensemble_mean,
    estimate_limit,
    fit_gap_rate,
    fit_rate,
    fit_series,
    median_log_curve,
    report_from_fit,
)
from .geometry import RingValleyChart, descent_contraction_check, hessian_fd, pl_constant_estimate, spectrum
from .noise import NoiseModel, aux_rng, effective_sigma
from .objectives import HessianUnavailable, NotAMinimizer, Objective, RingValleyObjective, local_spectrum
from .rates import SpectralParams, m_rate, optimal_step, pl_rate

log = logging.getLogger(__name__)


@dataclass
class EstimateResult:
    report: RateReport
    trajectories: list[Trajectory]
    limits: list[LimitEstimate]
    fits: list[FitResult | None]
    gap_fits: list[FitResult | None]
    params: SpectralParams | None
    diverged: int
    plot: list[tuple[int, float, float]] = field(default_factory=list)


def simulate(cfg: ExperimentConfig, gamma: float | None = None):
    """Run the ensemble and fill ``dist_sq`` against each replica's estimated limit."""
    obj = build_objective(cfg.objective)
    noise = build_noise(cfg.noise, obj)
    gamma = cfg.gammas()[0] if gamma is None else gamma
    rc = run_config(cfg, obj, gamma)
    trajs = run_ensemble(obj, noise, rc, workers=cfg.run.workers)
    limits = _limits(obj, noise, rc, trajs, cfg)
    for t, lim in zip(trajs, limits):
        if lim.ok:
            t.set_reference(lim.theta)
    finals = [float(t.f_gap[-1]) for t in trajs if not t.diverged]
    summary = {
        "gamma": gamma,
        "replicas": len(trajs),
        "diverged": divergence_count(trajs),
        "diverged_at": [t.diverged_at for t in trajs if t.diverged],
        "final_gap_median": float(np.median(finals)) if finals else None,
        "final_gap_max": float(np.max(finals)) if finals else None,
        "clamped_gaps": int(sum(t.clamped for t in trajs)),
        "limits_ok": int(sum(lim.ok for lim in limits)),
    }
    return trajs, summary


def _limits(obj, noise, rc: RunConfig, trajs, cfg: ExperimentConfig) -> list[LimitEstimate]:
    e = cfg.estimator
    return [estimate_limit(obj, noise, rc, t, snap_limit=e.snap_limit, grad_tol=e.grad_tol) for t in trajs]


def probe_points(trajs: list[Trajectory], n: int) -> np.ndarray:
    """Evenly spread recorded iterates with a clearly positive gap."""
    t = next((t for t in trajs if not t.diverged), trajs[0])
    ok = np.flatnonzero(np.isfinite(t.f_gap) & (t.f_gap > 1e-100))
    if ok.size == 0:
        raise InconclusiveError("no probe points with positive gap")
    idx = ok[np.unique(np.linspace(0, ok.size - 1, min(n, ok.size)).round().astype(int))]
    return t.thetas[idx]


def theory_params(obj: Objective, noise: NoiseModel, limits, trajs, cfg: ExperimentConfig) -> tuple[SpectralParams, bool]:
    """``(mu, L)`` from the Hessian at an estimated limit and the declared or estimated ``sigma``."""
    mu_L = None
    for lim in limits:
        if lim.ok:
            try:
                mu, L, _ = local_spectrum(obj, lim.theta, grad_tol=max(cfg.estimator.grad_tol, 1e-8))
                mu_L = (mu, L)
                break
            except (NotAMinimizer, HessianUnavailable):
                continue
    if mu_L is None:
        mu_L = obj.spectrum_hint
    if mu_L is None:
        raise InconclusiveError("no curvature information: no valid limit and no spectrum hint")
    sigma, estimated = noise.nominal_sigma, False
    if sigma is None:
        e = cfg.estimator
        est = effective_sigma(noise, obj, probe_points(trajs, e.sigma_probes), e.sigma_draws,
                              aux_rng(cfg.run.base_seed, 1))
        sigma, estimated = est.value, True
    return SpectralParams(mu_L[0], mu_L[1], sigma), estimated


def estimate(cfg: ExperimentConfig, gamma: float | None = None) -> EstimateResult:
    obj = build_objective(cfg.objective)
    noise = build_noise(cfg.noise, obj)
    gamma = cfg.gammas()[0] if gamma is None else gamma
    rc = run_config(cfg, obj, gamma)
    e = cfg.estimator
    window = e.window()
    trajs = run_ensemble(obj, noise, rc, workers=cfg.run.workers)
    limits = _limits(obj, noise, rc, trajs, cfg)

    fits: list[FitResult | None] = []
    gap_fits: list[FitResult | None] = []
    for t, lim in zip(trajs, limits):
        if lim.exact or lim.ok:
            t.set_reference(lim.theta)
        if not lim.ok:
            fits.append(None)
            gap_fits.append(None)
            continue
        fits.append(_try(fit_rate, t, lim.theta, window, exact_reference=lim.exact))
        gap_fits.append(_try(fit_gap_rate, t, window))

    try:
        params, sigma_est = theory_params(obj, noise, limits, trajs, cfg)
    except InconclusiveError as exc:
        log.warning("theory parameters unavailable: %s", exc)
        nan_report = RateReport(np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, gamma, np.nan, np.nan, np.nan,
                                Verdict.INCONCLUSIVE, 0)
        return EstimateResult(nan_report, trajs, limits, fits, gap_fits, None, divergence_count(trajs))

    if e.mode == "mean":
        k, mean, _ = ensemble_mean(trajs, "dist_sq")
        exact = all(lim.exact for lim in limits)
        gaps = None if exact else ensemble_mean(trajs, "f_gap")[1]
        mean_fit = _try(fit_series, k, mean, window, gaps=gaps, exact_reference=exact)
        report = report_from_fit(mean_fit, params, gamma, len(trajs), e.eps_tol, e.eps_band, sigma_est)
    else:
        report = aggregate(fits, params, gamma, e.eps_tol, e.eps_band, sigma_est)

    result = EstimateResult(report, trajs, limits, fits, gap_fits, params, divergence_count(trajs))
    result.plot = plot_rows(trajs, report)
    return result


def _try(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except InconclusiveError as exc:
        log.debug("inconclusive fit: %s", exc)
        return None


def plot_rows(trajs: list[Trajectory], report: RateReport) -> list[tuple[int, float, float]]:
    """``(k, median log dist_sq, theory line)``; the line is anchored at the fit window start."""
    k, med = median_log_curve(trajs)
    anchor_k = report.window.get("k_start", 0) if report.window else 0
    i0 = int(np.searchsorted(k, anchor_k))
    if i0 >= len(k) or not np.isfinite(med[i0]) or not report.theory_m > 0:
        line = np.full(len(k), np.nan)
    else:
        line = med[i0] + (k - k[i0]) * np.log(report.theory_m)
    return [(int(a), float(b), float(c)) for a, b, c in zip(k, med, line)]


def sweep(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    rows, params = [], None
    for gamma in cfg.gammas():
        res = estimate(cfg, gamma)
        r = res.report
        params = params or res.params
        rows.append({
            "gamma": gamma,
            "empirical_rate": r.empirical_rate,
            "theory_m": r.theory_m,
            "theory_phi": r.theory_phi,
            "verdict": r.verdict.value,
            "diverged": res.diverged,
        })
    return rows, sweep_summary(rows, params)


def sweep_summary(rows: list[dict], params: SpectralParams | None) -> dict:
    grid = np.array([r["gamma"] for r in rows])
    rates = np.array([r["empirical_rate"] for r in rows], dtype=float)
    stable = np.array([r["theory_m"] < 1 for r in rows])
    finite = np.isfinite(rates) & stable
    out: dict = {"n_points": len(rows), "n_stable": int(stable.sum())}
    if finite.any():
        i = int(np.flatnonzero(finite)[np.argmin(rates[finite])])
        out["argmin_gamma"] = float(grid[i])
        out["min_rate"] = float(rates[i])
        spacing = float(np.max(np.diff(np.sort(grid)))) if grid.size > 1 else 0.0
        out["grid_step"] = spacing
        if params is not None:
            g_star = optimal_step(params)
            out["gamma_star"] = g_star
            out["argmin_within_one_step"] = bool(abs(grid[i] - g_star) <= spacing + 1e-12)
    verdicts = [Verdict(r["verdict"]) for r, s in zip(rows, stable) if s]
    out["all_stable_passing"] = all(v.passing for v in verdicts)
    out["any_inconclusive"] = any(v is Verdict.INCONCLUSIVE for v in verdicts)
    return out


def geometry(cfg: ExperimentConfig) -> tuple[dict, object]:
    """Spectrum at the estimated limit, sampled PL constant and (ring valley) contraction check."""
    obj = build_objective(cfg.objective)
    noise = build_noise(cfg.noise, obj)
    gamma = cfg.gammas()[0]
    rc = run_config(cfg, obj, gamma)
    e = cfg.estimator
    trajs = run_ensemble(obj, noise, rc, workers=cfg.run.workers)
    limits = _limits(obj, noise, rc, trajs, cfg)
    lim = next((l for l in limits if l.ok), None)
    out: dict = {"gamma": gamma, "limit_ok": lim is not None}
    if lim is None:
        out["status"] = "INCONCLUSIVE"
        return out, None
    try:
        H = obj.hessian(lim.theta)
        out["hessian"] = "analytic"
    except HessianUnavailable:
        H = hessian_fd(obj, lim.theta)
        out["hessian"] = "finite_difference"
    rep = spectrum(H)
    out["limit"] = lim.theta.tolist()
    out["spectrum"] = rep.to_json()
    rng = aux_rng(cfg.run.base_seed, 2)
    center = None if isinstance(obj, RingValleyObjective) else lim.theta
    try:
        out["pl_constant"] = pl_constant_estimate(obj, center, e.tube_radius, e.pl_samples, rng)
    except ValueError as exc:
        out["pl_constant"] = None
        out["pl_error"] = str(exc)
    contraction = None
    if isinstance(obj, RingValleyObjective):
        if rc.record_every != 1:
            raise ValueError("the contraction check needs record_every = 1")
        params = SpectralParams(rep.mu_hat, rep.L_hat, noise.nominal_sigma or 0.0)
        ok = [t for t in trajs if not t.diverged]
        its = ok[0].thetas if len(ok) == 1 else np.stack([t.thetas for t in ok])
        contraction = descent_contraction_check(RingValleyChart(obj), its, gamma, params,
                                                e.contraction_eps, tail_fraction=e.tail_fraction,
                                                floor=e.floor, headroom=e.headroom)
        out["contraction"] = contraction.to_json()
        out["theory_m"] = m_rate(params, gamma)
        out["theory_phi"] = pl_rate(params, gamma)
    out["status"] = "FAIL" if contraction is not None and not contraction.passed else "PASS"
    return out, contraction
