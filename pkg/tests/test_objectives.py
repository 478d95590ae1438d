import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import approx_fprime, check_grad

from plrates.objectives import (
    InterpolatingLeastSquares,
    NotAMinimizer,
    QuadraticObjective,
    RingValleyObjective,
    local_spectrum,
    random_orthogonal,
)

vec3 = arrays(np.float64, 3, elements=st.floats(-3, 3))


def fd_hessian(obj, theta, h=1e-6):
    return np.array([approx_fprime(theta, lambda t, i=i: obj.grad(t)[i], h) for i in range(theta.size)])


OBJECTIVES = [
    QuadraticObjective.from_spectrum([1.0, 2.0, 5.0], seed=1),
    QuadraticObjective.from_spectrum([0.0, 1.0, 3.0], seed=2),
    RingValleyObjective(1.0, 4.0),
    RingValleyObjective(2.5, 0.5),
    InterpolatingLeastSquares.from_seed(4, 3, seed=0),
]


@pytest.mark.parametrize("obj", OBJECTIVES, ids=lambda o: type(o).__name__)
@given(theta=vec3)
def test_gradient_and_hessian_match_finite_differences(obj, theta):
    scale = 1 + np.abs(obj.grad(theta)).max()
    assert check_grad(obj.eval, obj.grad, theta, epsilon=1e-7) <= 1e-4 * scale * (1 + np.linalg.norm(theta)) ** 3
    H = obj.hessian(theta)
    np.testing.assert_allclose(H, H.T)
    np.testing.assert_allclose(H, fd_hessian(obj, theta), atol=1e-4 * (1 + np.abs(H).max()))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        RingValleyObjective().eval(np.zeros(2))
    with pytest.raises(ValueError):
        QuadraticObjective.from_spectrum([1, 2]).grad(np.zeros(3))


def test_quadratic_validation():
    with pytest.raises(ValueError):
        QuadraticObjective(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        QuadraticObjective(np.diag([1.0, -1.0]))


def test_quadratic_spectrum_and_minimizers():
    q = QuadraticObjective.from_spectrum([3.0, 1.0, 2.0], seed=4)
    np.testing.assert_allclose(np.linalg.eigvalsh(q.A), [1, 2, 3])
    assert q.spectrum_hint == pytest.approx((1.0, 3.0))
    np.testing.assert_array_equal(q.unique_minimizer, np.zeros(3))
    v = q.eigvector(0)
    np.testing.assert_allclose(q.A @ v, v, atol=1e-12)
    diag = QuadraticObjective.from_spectrum([1.0, 2.0], seed=None)
    np.testing.assert_array_equal(diag.A, np.diag([1.0, 2.0]))


def test_quadratic_with_kernel():
    q = QuadraticObjective.from_spectrum([0.0, 1.0, 4.0], seed=5)
    assert q.unique_minimizer is None
    assert q.spectrum_hint == pytest.approx((1.0, 4.0))
    theta = np.array([0.3, -1.0, 2.0])
    p = q.manifold_projection(theta)
    assert abs(q.gap(p)) < 1e-14
    np.testing.assert_allclose(q.manifold_projection(p), p, atol=1e-14)


def test_random_orthogonal():
    Q = random_orthogonal(6, 3)
    np.testing.assert_allclose(Q @ Q.T, np.eye(6), atol=1e-12)
    np.testing.assert_array_equal(Q, random_orthogonal(6, 3))


def test_ring_valley_minima_and_hessian():
    f = RingValleyObjective(1.0, 4.0)
    for a in np.linspace(0, 2 * np.pi, 7):
        p = f.circle_point(a)
        assert f.eval(p) < 1e-30
        np.testing.assert_allclose(f.grad(p), 0.0, atol=1e-15)
        np.testing.assert_allclose(np.linalg.eigvalsh(f.hessian(p)), [0.0, 1.0, 4.0], atol=1e-12)
        tangent = np.array([0.0, -np.sin(a), np.cos(a)])
        np.testing.assert_allclose(f.hessian(p) @ tangent, 0.0, atol=1e-12)


def test_ring_valley_is_not_convex():
    f = RingValleyObjective(1.0, 4.0)
    a, b = f.circle_point(0.0), f.circle_point(np.pi)
    # midpoint of two minimizers is the origin, where f = beta/8
    assert f.eval((a + b) / 2) == pytest.approx(0.5)
    assert f.eval(a) + f.eval(b) < 1e-30
    w = np.linalg.eigvalsh(f.hessian(np.zeros(3)))
    np.testing.assert_allclose(w, [-2.0, -2.0, 1.0])


def test_ring_valley_projection_and_offsets():
    f = RingValleyObjective()
    p = f.offset_point(0.4, (0.1, -0.2))
    np.testing.assert_allclose(p, [0.1, 0.8 * np.cos(0.4), 0.8 * np.sin(0.4)])
    np.testing.assert_allclose(f.manifold_projection(p), f.circle_point(0.4))
    with pytest.raises(ValueError):
        f.manifold_projection(np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        RingValleyObjective(0.0, 1.0)


def test_ring_valley_pl_in_tube():
    f = RingValleyObjective(1.0, 4.0)
    pts = f.sample_tube(0.1, 500, np.random.default_rng(0))
    dist = [np.hypot(p[0], np.hypot(p[1], p[2]) - 1) for p in pts]
    assert max(dist) <= 0.1 + 1e-12
    ratios = [f.grad(p) @ f.grad(p) / (2 * f.gap(p)) for p in pts if f.gap(p) > 0]
    # PL constant min(alpha, beta * r^2 (r+1)^2 / 4 ...) stays near alpha = 1 inside the tube
    assert min(ratios) >= 0.9


def test_least_squares_interpolates():
    ls = InterpolatingLeastSquares.from_seed(20, 50, seed=1)
    assert ls.dim == 50 and ls.n_samples == 20 and ls.rank == 20
    assert ls.gap(ls.theta_star) == 0.0
    np.testing.assert_array_equal(ls.residuals(ls.theta_star), 0.0)
    theta = np.random.default_rng(0).standard_normal(50)
    p = ls.manifold_projection(theta)
    assert ls.eval(p) < 1e-25
    # projection moves only within the row space
    null = np.linalg.svd(ls.A)[2][20:]
    np.testing.assert_allclose(null @ (p - theta), 0.0, atol=1e-12)
    mu, L = ls.spectrum_hint
    w = np.linalg.eigvalsh(ls.A.T @ ls.A / 20)
    assert mu == pytest.approx(w[w > 1e-10].min()) and L == pytest.approx(w.max())


def test_least_squares_rank_deficient():
    ls = InterpolatingLeastSquares.from_seed(20, 50, seed=2, rank=7)
    assert ls.rank == 7
    mu, L, d_n = local_spectrum(ls, ls.theta_star)
    assert d_n == 7 and 0 < mu <= L


def test_local_spectrum_rejects_non_minimizer():
    f = RingValleyObjective()
    with pytest.raises(NotAMinimizer):
        local_spectrum(f, np.array([0.5, 1.0, 0.0]))
    mu, L, d_n = local_spectrum(f, f.circle_point(1.0))
    assert (mu, L, d_n) == (pytest.approx(1.0), pytest.approx(4.0), 2)
