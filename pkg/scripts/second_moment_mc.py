"""Monte Carlo mean of |theta_k|^2 under sharp noise against the exact recursion.

Prints the sample mean, the exact value, and z-scores computed with both the
exact standard error (from the fourth moment) and the sample one.
"""

import argparse

import numpy as np

from plrates.config import branch_max_eigvec
from plrates.engine import RunConfig, exact_fourth_moment, exact_second_moment, run_ensemble
from plrates.noise import sharp_quadratic_noise
from plrates.objectives import QuadraticObjective


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigma", type=float, default=2.0)
    ap.add_argument("--gamma", type=float, default=0.4)
    ap.add_argument("--steps", type=int, default=20)
    ap.add_argument("--replicas", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=41)
    ap.add_argument("--eigenspace", action="store_true", help="start in the branch-maximizing eigenspace")
    args = ap.parse_args()

    q = QuadraticObjective.from_spectrum([1.0, 2.0], seed=3)
    theta0 = branch_max_eigvec(q, args.sigma, args.gamma) if args.eigenspace else np.array([1.0, 1.0])
    cfg = RunConfig(args.gamma, args.steps, theta0, replicas=args.replicas, base_seed=args.seed)
    trajs = run_ensemble(q, sharp_quadratic_noise(q.A, args.sigma), cfg)
    sq = np.array([np.sum(t.thetas**2, axis=1) for t in trajs])
    e2 = exact_second_moment(q.A, args.sigma, args.gamma, np.outer(theta0, theta0), args.steps)
    e4 = exact_fourth_moment(q.A, args.sigma, args.gamma, theta0, args.steps)
    se_exact = np.sqrt(np.maximum(e4 - e2**2, 0) / args.replicas)
    se_sample = sq.std(axis=0, ddof=1) / np.sqrt(args.replicas)
    print(f"{'k':>3} {'mc_mean':>12} {'exact':>12} {'z_exact':>8} {'z_sample':>9}")
    for k in range(args.steps + 1):
        d = sq[:, k].mean() - e2[k]
        z_s = d / se_sample[k] if se_sample[k] > 0 else 0.0
        z_e = d / se_exact[k] if se_exact[k] > 0 else 0.0
        print(f"{k:>3} {sq[:, k].mean():12.5e} {e2[k]:12.5e} {z_e:8.2f} {z_s:9.2f}")


if __name__ == "__main__":
    main()
