import numpy as np
import pytest

from gpcorrect import Hyperparams, InputError, se_kernel, se_kernel_grad, se_kernel_hess
from gpcorrect.kernel import grad_matrix, hess_matrix, kernel_matrix

HP = Hyperparams(alpha=1.0, beta=0.1, sigma_y=0.0)


def test_value_at_zero_distance_is_signal_variance():
    for a in ([0.3], [0.1, -0.4], [1.0, 2.0, 3.0]):
        assert se_kernel(a, a, HP) == pytest.approx(1.0)
    assert se_kernel([0.0], [0.0], Hyperparams(2.0, 0.5)) == pytest.approx(4.0)


def test_value_matches_direct_evaluation():
    # alpha=1, beta=0.1: separation of one lengthscale gives exp(-1/2)
    assert se_kernel([0.0], [0.1], HP) == pytest.approx(np.exp(-0.5), rel=1e-12)


def test_value_underflows_to_zero_not_error():
    val = se_kernel([0.0], [10.0], HP)
    assert val >= 0.0 and np.isfinite(val) and val == 0.0


def test_symmetry_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 4))
        a, b = rng.uniform(-2, 2, n), rng.uniform(-2, 2, n)
        hp = Hyperparams(float(rng.uniform(0.5, 2)), float(rng.uniform(0.2, 1)))
        assert se_kernel(a, b, hp) == se_kernel(b, a, hp)


def test_grad_direct_evaluation():
    g = se_kernel_grad([0.0], [0.1], HP)
    assert g[0] == pytest.approx(100.0 * (-0.1) * np.exp(-0.5), rel=1e-12)


def test_grad_zero_at_coincident_points():
    g = se_kernel_grad([0.4, 0.2], [0.4, 0.2], HP)
    assert np.array_equal(g, np.zeros(2))


def test_grad_antisymmetric_under_argument_swap():
    rng = np.random.default_rng(1)
    for _ in range(25):
        a, b = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        hp = Hyperparams(1.0, float(rng.uniform(0.2, 1)))
        assert np.allclose(se_kernel_grad(a, b, hp), -se_kernel_grad(b, a, hp), rtol=1e-14)


def test_hess_peak_curvature():
    H = se_kernel_hess([0.3, 0.3], [0.3, 0.3], HP, "second-second")
    assert np.allclose(H, -(1.0 / 0.01) * np.eye(2))


def test_hess_inflection_at_one_lengthscale():
    H = se_kernel_hess([0.0], [0.1], HP, "second-second")
    assert H[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_hess_variants_negate():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    ss = se_kernel_hess(a, b, HP, "second-second")
    fs = se_kernel_hess(a, b, HP, "first-second")
    assert np.array_equal(ss, -fs)
    assert np.array_equal(ss, ss.T)
    with pytest.raises(InputError):
        se_kernel_hess(a, b, HP, "nope")


@pytest.mark.parametrize("n", [1, 2, 3])
def test_derivatives_match_finite_differences(n):
    # step and tolerances as pinned for the kernel: h = 1e-5 * max(1, |b|)
    rng = np.random.default_rng(100 + n)
    for _ in range(40):
        a = rng.uniform(-1, 1, n)
        b = rng.uniform(-1, 1, n)
        hp = Hyperparams(float(rng.uniform(0.5, 2)), float(rng.uniform(0.2, 1)))
        h = 1e-5 * max(1.0, float(np.linalg.norm(b)))
        fd_g = np.empty(n)
        fd_h = np.empty((n, n))
        for d in range(n):
            bp, bm = b.copy(), b.copy()
            bp[d] += h
            bm[d] -= h
            fd_g[d] = (se_kernel(a, bp, hp) - se_kernel(a, bm, hp)) / (2 * h)
            fd_h[:, d] = (se_kernel_grad(a, bp, hp) - se_kernel_grad(a, bm, hp)) / (2 * h)
        assert np.allclose(se_kernel_grad(a, b, hp), fd_g, rtol=1e-6, atol=1e-10)
        assert np.allclose(se_kernel_hess(a, b, hp, "second-second"), fd_h,
                           rtol=1e-6, atol=1e-10)
        # first-second via stepping the first argument of the gradient
        for d in range(n):
            ap, am = a.copy(), a.copy()
            ap[d] += h
            am[d] -= h
            fd_h[d, :] = (se_kernel_grad(ap, b, hp) - se_kernel_grad(am, b, hp)) / (2 * h)
        assert np.allclose(se_kernel_hess(a, b, hp, "first-second"), fd_h,
                           rtol=1e-6, atol=1e-10)


def test_gram_matrix_positive_definite_at_desk_scale():
    rng = np.random.default_rng(3)
    for trial in range(10):
        n = int(rng.integers(1, 4))
        count = int(rng.integers(2, 21))
        pts = rng.uniform(0, 1, (count, n))
        hp = Hyperparams(1.0, float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.01, 0.1)))
        K = kernel_matrix(pts, pts, hp) + hp.sigma_y**2 * np.eye(count)
        np.linalg.cholesky(K)  # raises LinAlgError on failure


def test_dimension_mismatch_rejected():
    with pytest.raises(InputError):
        se_kernel([0.0], [0.0, 1.0], HP)
    with pytest.raises(InputError):
        se_kernel_grad([0.0, 1.0], [0.0], HP)
    with pytest.raises(InputError):
        kernel_matrix(np.zeros((3, 2)), np.zeros((4, 3)), HP)


def test_hyperparameter_validation():
    with pytest.raises(InputError):
        Hyperparams(alpha=0.0, beta=0.1)
    with pytest.raises(InputError):
        Hyperparams(alpha=1.0, beta=-1.0)
    with pytest.raises(InputError):
        Hyperparams(alpha=1.0, beta=0.1, sigma_y=-0.1)
    Hyperparams(alpha=1.0, beta=0.1, sigma_y=0.0)


def test_vectorized_builders_match_scalar_calls():
    rng = np.random.default_rng(4)
    A = rng.uniform(0, 1, (5, 2))
    at = rng.uniform(0, 1, 2)
    hp = Hyperparams(1.3, 0.4, 0.0)
    K = kernel_matrix(A, at[None, :], hp)
    G = grad_matrix(A, at, hp)
    H = hess_matrix(A, at, hp)
    for i in range(5):
        assert K[i, 0] == pytest.approx(se_kernel(A[i], at, hp), rel=1e-15)
        assert np.allclose(G[i], se_kernel_grad(A[i], at, hp), rtol=1e-15)
        assert np.allclose(H[i], se_kernel_hess(A[i], at, hp, "second-second"), rtol=1e-15)
