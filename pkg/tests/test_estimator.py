import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plrates.engine import RunConfig, Trajectory, run, run_ensemble
from plrates.estimator import (
    FitWindow,
    InconclusiveError,
    Verdict,
    aggregate,
    classify,
    ensemble_mean,
    estimate_limit,
    fit_gap_rate,
    fit_rate,
    fit_series,
    median_log_curve,
    report_from_fit,
)
from plrates.noise import sharp_quadratic_noise, zero_noise
from plrates.objectives import QuadraticObjective, RingValleyObjective
from plrates.rates import SpectralParams


@given(rate=st.floats(0.05, 0.99), c=st.floats(1e-3, 1e3))
def test_exact_geometric_series_recovered(rate, c):
    k = np.arange(200)
    r = c * rate**k
    fit = fit_series(k, r, exact_reference=True)
    assert fit.rate == pytest.approx(rate, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-9)


def test_noisy_series_rate_and_stderr():
    rng = np.random.default_rng(0)
    k = np.arange(300)
    rates = []
    for _ in range(200):
        r = 0.8**k * np.exp(0.1 * rng.standard_normal(k.size))
        rates.append(fit_series(k, r, exact_reference=True))
    est = np.array([f.rate for f in rates])
    assert abs(est.mean() - 0.8) < 3 * est.std() / np.sqrt(est.size)
    # reported stderr tracks the actual scatter
    assert np.median([f.stderr for f in rates]) == pytest.approx(est.std(), rel=0.25)


def test_burn_in_window():
    k = np.arange(101)
    r = 0.5**k
    fit = fit_series(k, r, FitWindow(burn_in=0.2), exact_reference=True)
    assert (fit.k_start, fit.k_end) == (20, 100)
    fit = fit_series(k, r, FitWindow(k_start=5, k_end=30), exact_reference=True)
    assert (fit.k_start, fit.k_end, fit.n_points) == (5, 30, 26)
    with pytest.raises(ValueError):
        FitWindow(k_start=10, k_end=10)


def test_floor_and_headroom_drop_points():
    k = np.arange(100)
    # geometric decay that bottoms out at a rounding floor
    r = np.maximum(0.5**k, 1e-30)
    fit = fit_series(k, r)
    assert fit.rate == pytest.approx(0.5, rel=1e-9)
    assert fit.k_end < 100
    r0 = 0.5**k
    r0[60:] = 0.0
    fit = fit_series(k, r0, FitWindow(floor=1e-15), exact_reference=True)
    assert fit.rate == pytest.approx(0.5, rel=1e-12) and fit.k_end <= 49


def test_underflowed_gaps_excluded():
    k = np.arange(100)
    r = 0.5**k
    gaps = np.where(k < 50, 1.0, 1e-300)
    assert fit_series(k, r, gaps=gaps, exact_reference=True).k_end == 49


def test_inconclusive_cases():
    k = np.arange(20)
    with pytest.raises(InconclusiveError):
        fit_series(k, np.zeros(20))
    with pytest.raises(InconclusiveError):
        fit_series(np.arange(8), 0.5 ** np.arange(8), exact_reference=True)
    with pytest.raises(InconclusiveError):
        fit_series(k, np.full(20, np.nan))


def test_constant_series_has_rate_one():
    fit = fit_series(np.arange(30), np.full(30, 2.0), exact_reference=True)
    assert fit.rate == 1.0 and fit.stderr == 0.0


def test_classify_bands():
    assert classify(0.50, 0.49) is Verdict.MATCHES_M
    assert classify(0.40, 0.49) is Verdict.BELOW_M
    assert classify(0.55, 0.49) is Verdict.ABOVE_M_WITHIN_EPS
    assert classify(0.70, 0.49) is Verdict.INCONCLUSIVE
    assert classify(np.nan, 0.49) is Verdict.INCONCLUSIVE
    assert Verdict.MATCHES_M.passing and Verdict.BELOW_M.passing
    assert not Verdict.ABOVE_M_WITHIN_EPS.passing and not Verdict.INCONCLUSIVE.passing


def ring_run(steps=2000):
    f = RingValleyObjective(1.0, 4.0)
    cfg = RunConfig(0.3, steps, f.offset_point(0.7, (0.2, 0.15)))
    return f, cfg, run(f, zero_noise(), cfg)


def test_limit_estimation_ring_valley():
    f, cfg, traj = ring_run()
    lim = estimate_limit(f, zero_noise(), cfg, traj)
    assert lim.ok and not lim.exact
    assert abs(np.hypot(lim.theta[1], lim.theta[2]) - 1) < 1e-14 and abs(lim.theta[0]) < 1e-14
    snapped = estimate_limit(f, zero_noise(), cfg, traj, snap_limit=True)
    assert snapped.snapped and snapped.ok


def test_limit_estimation_unique_minimizer_and_divergence():
    q = QuadraticObjective.from_spectrum([1.0, 2.0], seed=3)
    lim = estimate_limit(q, zero_noise(), RunConfig(0.1, 10, [1.0, 1.0]))
    assert lim.exact and lim.ok
    np.testing.assert_array_equal(lim.theta, 0.0)
    cfg = RunConfig(1.5, 3000, [1.0, 1.0])
    lim = estimate_limit(q, zero_noise(), cfg, run(q, zero_noise(), cfg))
    assert not lim.ok


def test_limit_not_reached_is_flagged():
    f, cfg, _ = ring_run()
    lim = estimate_limit(f, zero_noise(), RunConfig(0.01, 10, cfg.theta0))
    assert not lim.ok


def test_distance_and_gap_fits_agree():
    f, cfg, traj = ring_run()
    lim = estimate_limit(f, zero_noise(), cfg, traj)
    d, g = fit_rate(traj, lim.theta), fit_gap_rate(traj)
    assert d.rate == pytest.approx(0.49, abs=1e-3)
    assert g.rate == pytest.approx(d.rate, abs=1e-3)
    assert np.isfinite(traj.dist_sq).all()


def test_aggregate_and_report():
    p = SpectralParams(1.0, 4.0, 0.0)
    k = np.arange(100)
    fits = [fit_series(k, r**k, exact_reference=True) for r in (0.48, 0.49, 0.50)] + [None]
    rep = aggregate(fits, p, 0.3)
    assert rep.empirical_rate == pytest.approx(0.49)
    assert rep.iqr == pytest.approx(0.01)
    assert rep.n_replicas == 3 and rep.verdict is Verdict.MATCHES_M
    assert rep.theory_m == pytest.approx(0.49) and rep.theory_phi == pytest.approx(0.76)
    d = json.loads(json.dumps(rep.to_json()))
    assert d["verdict"] == "MATCHES_M" and d["window"] == {"k_start": 20, "k_end": 99}
    none = aggregate([None, None], p, 0.3)
    assert none.verdict is Verdict.INCONCLUSIVE and none.n_replicas == 0
    one = report_from_fit(fits[0], p, 0.3, 500)
    assert one.n_replicas == 500 and one.empirical_rate == pytest.approx(0.48)


def test_ensemble_curves():
    q = QuadraticObjective.from_spectrum([1.0, 2.0], seed=3)
    trajs = run_ensemble(q, sharp_quadratic_noise(q.A, 2.0), RunConfig(0.3, 12, [1.0, 1.0], replicas=50))
    for t in trajs:
        t.set_reference(np.zeros(2))
    k, mean, se = ensemble_mean(trajs)
    stacked = np.array([t.dist_sq for t in trajs])
    np.testing.assert_allclose(mean, stacked.mean(axis=0))
    np.testing.assert_allclose(se, stacked.std(axis=0, ddof=1) / np.sqrt(50))
    k2, med = median_log_curve(trajs)
    np.testing.assert_allclose(med, np.median(np.log(stacked), axis=0))
    assert list(k) == list(k2) == list(range(13))


def test_ensemble_mean_counts_diverged_as_inf():
    a = Trajectory(np.arange(3), np.ones(3), np.ones(3), np.zeros((3, 1)), np.zeros(1))
    b = Trajectory(np.arange(2), np.ones(2), np.ones(2), np.zeros((2, 1)), np.zeros(1), diverged_at=2)
    _, mean, _ = ensemble_mean([a, b], "f_gap")
    assert mean[1] == 1.0 and np.isinf(mean[2])
