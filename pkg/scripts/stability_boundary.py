"""Ensemble-mean rate just below and just above 2/(L + sigma/2) for a few (L, sigma)."""

import argparse

import numpy as np

from plrates.config import branch_max_eigvec
from plrates.engine import RunConfig, run_ensemble
from plrates.estimator import FitWindow, ensemble_mean, fit_series
from plrates.noise import sharp_quadratic_noise
from plrates.objectives import QuadraticObjective
from plrates.rates import SpectralParams, m_rate, max_stable_step


def mean_rate(q, sigma, gamma, replicas, steps, seed):
    cfg = RunConfig(gamma, steps, branch_max_eigvec(q, sigma, gamma), replicas=replicas, base_seed=seed)
    trajs = run_ensemble(q, sharp_quadratic_noise(q.A, sigma), cfg)
    for t in trajs:
        t.set_reference(np.zeros(q.dim))
    k, mean, _ = ensemble_mean(trajs)
    return fit_series(k, mean, FitWindow(burn_in=0.0), exact_reference=True).rate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicas", type=int, default=4000)
    ap.add_argument("--steps", type=int, default=9)
    ap.add_argument("--factors", type=float, nargs="+", default=[0.9, 0.95, 1.05, 1.1])
    args = ap.parse_args()
    print(f"{'L':>5} {'sigma':>5} {'factor':>6} {'m':>7} {'mean_rate':>9}")
    for L, sigma in [(1.0, 0.0), (2.0, 2.0), (5.0, 1.0), (10.0, 4.0)]:
        q = QuadraticObjective.from_spectrum([1.0, L], seed=None)
        p = SpectralParams(1.0, L, sigma)
        for i, c in enumerate(args.factors):
            g = c * max_stable_step(p)
            r = mean_rate(q, sigma, g, args.replicas, args.steps, i)
            print(f"{L:5g} {sigma:5g} {c:6.2f} {m_rate(p, g):7.4f} {r:9.4f}")


if __name__ == "__main__":
    main()
