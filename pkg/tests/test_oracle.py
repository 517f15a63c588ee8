import numpy as np
import pytest

from gpcorrect import (
    FdConfig,
    Hyperparams,
    InputError,
    TestGrid,
    TrainingSet,
    fd_cov_hessian,
    fd_cov_jacobian,
    fd_mean_hessian,
    fd_mean_jacobian,
    mean_jacobian,
    train,
)
from gpcorrect.derivatives import build_kernel_grad_slices

from conftest import make_instance


def test_config_validation():
    with pytest.raises(InputError):
        FdConfig(step_scale=0.0)
    with pytest.raises(InputError):
        FdConfig(step_scale=0.1)
    with pytest.raises(InputError):
        FdConfig(scheme="forward")
    assert FdConfig().step_scale == 1e-5


def test_oracle_determinism():
    model, _ = make_instance(7, t=3, n=2, m=2)
    a = fd_mean_jacobian(model, 1)
    b = fd_mean_jacobian(model, 1)
    assert np.array_equal(a, b)
    assert np.array_equal(fd_cov_hessian(model, 0, 1), fd_cov_hessian(model, 0, 1))


def test_index_range_rejected():
    model, _ = make_instance(8, t=3)
    for fn in (fd_mean_jacobian, fd_cov_jacobian):
        with pytest.raises(InputError):
            fn(model, 3)
    with pytest.raises(InputError):
        fd_mean_hessian(model, 0, -1)


def test_near_linear_regime_tight_agreement():
    # lengthscale far beyond the domain span makes the mean near-linear in
    # each location; with no curvature a coarse step cancels the roundoff
    # amplification of the solves and the central difference is near exact
    rng = np.random.default_rng(5)
    X = rng.uniform(0.0, 0.01, (4, 2))
    Y = rng.standard_normal(4)
    Xe = rng.uniform(0.0, 0.01, (3, 2))
    model = train(TrainingSet(X, Y), TestGrid(Xe), Hyperparams(1.0, 100.0, 0.5))
    slices = build_kernel_grad_slices(model)
    cfg = FdConfig(step_scale=1e-2)
    for i in range(4):
        assert np.allclose(
            fd_mean_jacobian(model, i, cfg), mean_jacobian(model, slices, i),
            rtol=1e-8, atol=1e-10,
        )


def test_step_halving_reduces_error_quadratically():
    model, _ = make_instance(9, t=4, n=1, m=3, beta=0.3)
    slices = build_kernel_grad_slices(model)
    exact = mean_jacobian(model, slices, 2)
    errs = []
    for scale in (4e-4, 2e-4):
        fd = fd_mean_jacobian(model, 2, FdConfig(step_scale=scale))
        errs.append(np.max(np.abs(fd - exact)))
    ratio = errs[0] / errs[1]
    # central differences: halving the step cuts the error by about 4
    assert 2.5 < ratio < 6.0


def test_fd_hessian_mixed_partial_symmetry():
    model, _ = make_instance(10, t=3, n=2, m=2)
    h01 = fd_mean_hessian(model, 0, 1)
    h10 = fd_mean_hessian(model, 1, 0)
    assert np.allclose(h01, np.swapaxes(h10, 1, 2), rtol=1e-4, atol=1e-8)


def test_zero_measurements_zero_mean_oracles():
    model, _ = make_instance(11, t=3, n=1, m=2)
    zero = train(
        TrainingSet(model.train.locations, np.zeros(model.t)), model.test, model.hp
    )
    assert np.allclose(fd_mean_jacobian(zero, 0), 0.0, atol=1e-12)
    assert np.allclose(fd_mean_hessian(zero, 0, 1), 0.0, atol=1e-10)


def test_cov_jacobian_oracle_shape():
    model, _ = make_instance(12, t=2, n=3, m=4)
    assert fd_cov_jacobian(model, 1).shape == (4, 4, 3)
    assert fd_cov_hessian(model, 0, 0).shape == (4, 4, 3, 3)
