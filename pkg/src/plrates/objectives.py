"""Test objectives with known minima sets and local curvature.

Every objective exposes ``eval``, ``grad`` and ``hessian`` (analytic), the
minimal value ``f_min`` and, where the set of minimizers is known in closed
form, ``manifold_projection`` onto it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

Array = NDArray[np.float64]


class HessianUnavailable(NotImplementedError):
    """Raised by objectives that do not provide an analytic Hessian."""


class NotAMinimizer(ValueError):
    pass


class Objective:
    """Base interface. Subclasses set ``dim`` and ``f_min``."""

    dim: int
    f_min: float = 0.0

    def _check(self, theta: ArrayLike) -> Array:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise ValueError(f"expected a vector of shape ({self.dim},), got {theta.shape}")
        return theta

    def eval(self, theta: ArrayLike) -> float:
        raise NotImplementedError

    def grad(self, theta: ArrayLike) -> Array:
        raise NotImplementedError

    def hessian(self, theta: ArrayLike) -> Array:
        raise HessianUnavailable(f"{type(self).__name__} has no analytic Hessian")

    def gap(self, theta: ArrayLike) -> float:
        return self.eval(theta) - self.f_min

    @property
    def spectrum_hint(self) -> tuple[float, float] | None:
        """``(mu, L)`` at points of the minima set, if known a priori."""
        return None

    @property
    def unique_minimizer(self) -> Array | None:
        return None

    def manifold_projection(self, theta: ArrayLike) -> Array | None:
        return None


def random_orthogonal(d: int, seed: int) -> Array:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    # sign fix makes the draw Haar-distributed
    return q * np.sign(np.diag(r))


@dataclass(frozen=True, eq=False)
class QuadraticObjective(Objective):
    """``f(theta) = <A theta, theta> / 2`` with symmetric PSD ``A``."""

    A: Array
    eigvals: Array | None = None
    eigvecs: Array | None = None
    f_min: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * max(1.0, np.abs(A).max(initial=0.0)):
            raise ValueError("A must be symmetric")
        A = (A + A.T) / 2
        if self.eigvals is None:
            w, v = np.linalg.eigh(A)
        else:
            w, v = np.asarray(self.eigvals, dtype=float), np.asarray(self.eigvecs, dtype=float)
        if w.min(initial=0.0) < -1e-12 * max(1.0, np.abs(w).max(initial=0.0)):
            raise ValueError("A must be positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "eigvals", w)
        object.__setattr__(self, "eigvecs", v)

    @classmethod
    def from_spectrum(cls, eigenvalues, seed: int | None = 0) -> "QuadraticObjective":
        """Conjugate ``diag(eigenvalues)`` by a seeded random rotation.

        ``seed=None`` keeps the matrix diagonal.
        """
        w = np.asarray(eigenvalues, dtype=np.float64)
        d = w.size
        q = np.eye(d) if seed is None else random_orthogonal(d, seed)
        A = (q * w) @ q.T
        order = np.argsort(w, kind="stable")
        return cls(A=(A + A.T) / 2, eigvals=w[order], eigvecs=q[:, order])

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def _nonzero(self) -> Array:
        w = self.eigvals
        tol = 1e-12 * max(1.0, np.abs(w).max())
        return w[w > tol]

    def eval(self, theta):
        theta = self._check(theta)
        return 0.5 * float(theta @ (self.A @ theta))

    def grad(self, theta):
        return self.A @ self._check(theta)

    def hessian(self, theta):
        self._check(theta)
        return self.A.copy()

    @property
    def spectrum_hint(self):
        nz = self._nonzero()
        return float(nz.min()), float(nz.max())

    @property
    def unique_minimizer(self):
        if self._nonzero().size == self.dim:
            return np.zeros(self.dim)
        return None

    def manifold_projection(self, theta):
        theta = self._check(theta)
        w, v = self.eigvals, self.eigvecs
        tol = 1e-12 * max(1.0, np.abs(w).max())
        ker = v[:, w <= tol]
        return ker @ (ker.T @ theta)

    def eigvector(self, index: int) -> Array:
        return self.eigvecs[:, index].copy()


@dataclass(frozen=True, eq=False)
class RingValleyObjective(Objective):
    """Non-convex objective on R^3 whose minimizers form the unit circle in the y-z plane.

    ``f(x, y, z) = alpha/2 x^2 + beta/8 (y^2 + z^2 - 1)^2``. At a minimizer the
    Hessian has eigenvalues ``{0, alpha, beta}`` with the zero along the circle.
    """

    alpha: float = 1.0
    beta: float = 4.0
    f_min: float = 0.0
    dim: int = field(default=3, init=False)

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")

    def eval(self, theta):
        x, y, z = self._check(theta)
        return 0.5 * self.alpha * x * x + self.beta / 8.0 * (y * y + z * z - 1.0) ** 2

    def grad(self, theta):
        x, y, z = self._check(theta)
        c = 0.5 * self.beta * (y * y + z * z - 1.0)
        return np.array([self.alpha * x, c * y, c * z])

    def hessian(self, theta):
        x, y, z = self._check(theta)
        b = self.beta
        c = 0.5 * b * (y * y + z * z - 1.0)
        return np.array(
            [
                [self.alpha, 0.0, 0.0],
                [0.0, c + b * y * y, b * y * z],
                [0.0, b * y * z, c + b * z * z],
            ]
        )

    @property
    def spectrum_hint(self):
        return min(self.alpha, self.beta), max(self.alpha, self.beta)

    def manifold_projection(self, theta):
        _, y, z = self._check(theta)
        r = np.hypot(y, z)
        if r == 0:
            raise ValueError("projection onto the circle is undefined on the x-axis")
        return np.array([0.0, y / r, z / r])

    def circle_point(self, angle: float) -> Array:
        return np.array([0.0, np.cos(angle), np.sin(angle)])

    def offset_point(self, angle: float, normal_offset: ArrayLike) -> Array:
        """Minimizer at ``angle`` moved by ``(dx, dr)`` in the normal plane."""
        dx, dr = np.asarray(normal_offset, dtype=float)
        return np.array([dx, (1.0 + dr) * np.cos(angle), (1.0 + dr) * np.sin(angle)])

    def sample_tube(self, radius: float, n: int, rng: np.random.Generator) -> Array:
        """Uniform angles with normal offsets uniform in the disc of ``radius``."""
        angles = rng.uniform(0.0, 2 * np.pi, n)
        rho = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
        phi = rng.uniform(0.0, 2 * np.pi, n)
        return np.stack(
            [self.offset_point(a, (p * np.cos(t), p * np.sin(t))) for a, p, t in zip(angles, rho, phi)]
        )


@dataclass(frozen=True, eq=False)
class InterpolatingLeastSquares(Objective):
    """``f(theta) = |A theta - b|^2 / (2N)`` with ``b = A theta_star`` (exactly interpolable).

    With ``N < d`` the minimizers form the affine set ``theta_star + null(A)``.
    """

    A: Array
    theta_star: Array
    f_min: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        ts = np.asarray(self.theta_star, dtype=np.float64)
        if A.ndim != 2 or ts.shape != (A.shape[1],):
            raise ValueError("A must be N x d and theta_star of length d")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "theta_star", ts)
        object.__setattr__(self, "b", A @ ts)
        object.__setattr__(self, "_pinv", np.linalg.pinv(A))

    @classmethod
    def from_seed(cls, n: int, d: int, seed: int, rank: int | None = None) -> "InterpolatingLeastSquares":
        """Gaussian design with entries of variance ``1/d``; ``rank`` < n gives a rank-deficient design."""
        rng = np.random.default_rng(seed)
        if rank is None or rank >= min(n, d):
            A = rng.standard_normal((n, d)) / np.sqrt(d)
        else:
            A = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, d)) / np.sqrt(rank * d)
        return cls(A=A, theta_star=rng.standard_normal(d))

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_samples(self) -> int:
        return self.A.shape[0]

    def residuals(self, theta) -> Array:
        return self.A @ self._check(theta) - self.b

    def eval(self, theta):
        r = self.residuals(theta)
        return float(r @ r) / (2 * self.n_samples)

    def grad(self, theta):
        return self.A.T @ self.residuals(theta) / self.n_samples

    def hessian(self, theta):
        self._check(theta)
        return self.A.T @ self.A / self.n_samples

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.A))

    @property
    def spectrum_hint(self):
        s = np.linalg.svd(self.A, compute_uv=False) ** 2 / self.n_samples
        s = s[s > 1e-12 * s.max()]
        return float(s.min()), float(s.max())

    def manifold_projection(self, theta):
        theta = self._check(theta)
        return theta - self._pinv @ (self.A @ theta - self.b)


def local_spectrum(obj: Objective, theta, grad_tol: float = 1e-8, tol: float | None = None):
    """Smallest and largest nonzero Hessian eigenvalue at a minimizer, and their count.

    Returns ``(mu, L, d_N)``; ``dim - d_N`` is the dimension of the minima set.
    """
    from .geometry import spectrum

    theta = np.asarray(theta, dtype=float)
    g = np.linalg.norm(obj.grad(theta))
    if g > grad_tol * (1.0 + np.linalg.norm(theta)):
        raise NotAMinimizer(f"gradient norm {g:.3e} exceeds tolerance at the given point")
    rep = spectrum(obj.hessian(theta), tol=tol)
    return rep.mu_hat, rep.L_hat, obj.dim - rep.kernel_dim
