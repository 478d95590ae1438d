"""Fixed-step (S)GD runs, replica ensembles and exact moment recursions for quadratics."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .noise import NoiseModel, psd_sqrt, replica_rng
from .objectives import Array, Objective

#: gaps below this are excluded from rate fits (underflow territory)
UNDERFLOW_GAP = 1e-250


@dataclass(frozen=True)
class RunConfig:
    gamma: float
    steps: int
    theta0: Array
    replicas: int = 1
    base_seed: int = 0
    record_every: int = 1

    def __post_init__(self):
        if not (self.gamma >= 0 and np.isfinite(self.gamma)):
            raise ValueError(f"gamma must be finite and nonnegative, got {self.gamma}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=np.float64))

    def with_steps(self, steps: int) -> "RunConfig":
        return RunConfig(self.gamma, steps, self.theta0, self.replicas, self.base_seed, self.record_every)


@dataclass
class Trajectory:
    """Thinned record of one run. ``dist_sq`` stays NaN until a reference point is set."""

    k: np.ndarray
    f_gap: np.ndarray
    grad_norm: np.ndarray
    thetas: np.ndarray
    theta_end: Array
    replica: int = 0
    diverged_at: int | None = None
    clamped: int = 0
    dist_sq: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dist_sq is None:
            self.dist_sq = np.full(self.k.shape, np.nan)

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    @property
    def status(self) -> str:
        return f"diverged at step {self.diverged_at}" if self.diverged else "ok"

    def set_reference(self, theta_ref) -> None:
        diff = self.thetas - np.asarray(theta_ref, dtype=float)
        self.dist_sq = np.einsum("ij,ij->i", diff, diff)

    def rows(self):
        for row in zip(self.k.tolist(), self.f_gap.tolist(), self.dist_sq.tolist(), self.grad_norm.tolist()):
            yield row


CSV_HEADER = ["k", "f_gap", "dist_sq", "grad_norm"]


def write_trajectories(trajs: list[Trajectory], out_dir, combined: bool = False, stem: str = "trajectory") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if combined:
        path = out_dir / f"{stem}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replica", *CSV_HEADER])
            for t in trajs:
                w.writerows([t.replica, *row] for row in t.rows())
        return [path]
    for t in trajs:
        path = out_dir / f"{stem}_{t.replica:05d}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            w.writerows(t.rows())
        paths.append(path)
    return paths


def run(obj: Objective, noise: NoiseModel, cfg: RunConfig, replica_index: int = 0) -> Trajectory:
    """Iterate ``theta_k = theta_{k-1} - gamma (grad f(theta_{k-1}) + D_k)`` for ``cfg.steps`` steps.

    A non-finite iterate ends the run with ``diverged_at`` set. A NaN gradient
    at a finite iterate raises ``FloatingPointError``.
    """
    rng = replica_rng(cfg.base_seed, replica_index)
    theta = obj._check(cfg.theta0).copy()
    gamma, every = cfg.gamma, cfg.record_every
    ks, gaps, gnorms, thetas = [], [], [], []
    clamped = 0
    diverged_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.steps + 1):
            g = obj.grad(theta)
            if not np.isfinite(g).all():
                # overflow (inf, or inf*0 -> NaN) far out is divergence; NaN near the origin is a bug
                if np.isnan(g).any() and np.abs(theta).max() < 1e100:
                    raise FloatingPointError(f"NaN gradient at finite iterate (step {k})")
                diverged_at = k
                break
            if k % every == 0 or k == cfg.steps:
                gap = obj.gap(theta)
                if gap < 0:
                    clamped += 1
                    gap = 0.0
                ks.append(k)
                gaps.append(gap)
                gnorms.append(float(np.sqrt(g @ g)))
                thetas.append(theta.copy())
            if k == cfg.steps:
                break
            if gamma != 0.0:
                theta = theta - gamma * (g + noise.sample(theta, obj, rng))
            if not np.isfinite(theta).all():
                diverged_at = k + 1
                break
    return Trajectory(
        k=np.array(ks, dtype=np.int64),
        f_gap=np.array(gaps),
        grad_norm=np.array(gnorms),
        thetas=np.array(thetas).reshape(len(ks), obj.dim),
        theta_end=theta,
        replica=replica_index,
        diverged_at=diverged_at,
        clamped=clamped,
    )


def _run_chunk(args):
    obj, noise, cfg, indices = args
    return [run(obj, noise, cfg, r) for r in indices]


def run_ensemble(obj: Objective, noise: NoiseModel, cfg: RunConfig, workers: int = 1) -> list[Trajectory]:
    """All replicas of ``cfg``; replica ``r`` is identical to ``run(obj, noise, cfg, r)``."""
    indices = list(range(cfg.replicas))
    if workers <= 1 or cfg.replicas == 1:
        return [run(obj, noise, cfg, r) for r in indices]
    chunks = [indices[i::workers] for i in range(workers)]
    out: dict[int, Trajectory] = {}
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for res in ex.map(_run_chunk, [(obj, noise, cfg, c) for c in chunks if c]):
            out.update((t.replica, t) for t in res)
    return [out[r] for r in indices]


def divergence_count(trajs: list[Trajectory]) -> int:
    return sum(t.diverged for t in trajs)


def _check_sym(name, M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.abs(M).max()):
        raise ValueError(f"{name} must be symmetric")
    return (M + M.T) / 2


def exact_second_moment(A, sigma: float, gamma: float, M0, steps: int, return_matrices: bool = False):
    """``E|theta_k|^2`` for ``k = 0..steps`` under ``D_k = eta_k A^{1/2} theta_{k-1}``, ``E eta^2 = sigma/2``.

    Propagates the second-moment matrix
    ``M_k = (I - gamma A) M_{k-1} (I - gamma A) + gamma^2 sigma/2 A^{1/2} M_{k-1} A^{1/2}``.
    """
    A = _check_sym("A", A)
    M = _check_sym("M0", M0)
    C = np.eye(A.shape[0]) - gamma * A
    S = psd_sqrt(A)
    c = gamma * gamma * sigma / 2.0
    traces = [np.trace(M)]
    mats = [M]
    for _ in range(steps):
        M = C @ M @ C + c * (S @ M @ S)
        M = (M + M.T) / 2
        traces.append(np.trace(M))
        if return_matrices:
            mats.append(M)
    traces = np.array(traces)
    return (traces, mats) if return_matrices else traces


def exact_fourth_moment(A, sigma: float, gamma: float, theta0, steps: int) -> np.ndarray:
    """``E|theta_k|^4`` for ``k = 0..steps`` under Rademacher sharp noise and deterministic ``theta0``.

    Propagates the full fourth-moment tensor, so cost grows like ``d^5``; meant for small ``d``.
    """
    A = _check_sym("A", A)
    d = A.shape[0]
    theta0 = np.asarray(theta0, dtype=float)
    C = np.eye(d) - gamma * A
    S = psd_sqrt(A)
    c = gamma * np.sqrt(sigma / 2.0)
    branches = (C - c * S, C + c * S)
    T = np.einsum("i,j,k,l->ijkl", theta0, theta0, theta0, theta0)
    out = [np.einsum("iijj->", T)]
    for _ in range(steps):
        acc = np.zeros_like(T)
        for B in branches:
            U = np.tensordot(B, T, axes=([1], [0]))
            U = np.tensordot(B, U, axes=([1], [1])).transpose(1, 0, 2, 3)
            U = np.tensordot(B, U, axes=([1], [2])).transpose(1, 2, 0, 3)
            U = np.tensordot(B, U, axes=([1], [3])).transpose(1, 2, 3, 0)
            acc += 0.5 * U
        T = acc
        out.append(np.einsum("iijj->", T))
    return np.array(out)
