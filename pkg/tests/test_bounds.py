import math

import numpy as np
import pytest

from gpcorrect import (
    BoundUnsatisfiableError,
    InputError,
    RemainderBudget,
    TrainingSet,
    estimate_gradient_norm,
    min_order,
    remainder_bound,
    stacked_delta_bound,
    train,
)
from gpcorrect.bounds import directional_derivative
from gpcorrect.derivatives import build_kernel_grad_slices, mean_jacobian

from conftest import make_instance


def test_stacked_bound_direct_values():
    assert stacked_delta_bound(0.1, 100) == pytest.approx(1.0)
    assert stacked_delta_bound(0.0, 7) == 0.0
    assert stacked_delta_bound(0.01, 11) == pytest.approx(0.01 * math.sqrt(11), rel=1e-12)
    with pytest.raises(InputError):
        stacked_delta_bound(-0.1, 3)
    with pytest.raises(InputError):
        stacked_delta_bound(0.1, 0)


def test_remainder_bound_direct_values():
    assert remainder_bound(0, 1.0, 1.0) == pytest.approx(1.0)
    assert remainder_bound(2, 0.5, 10.0) == pytest.approx(10.0 * 0.125 / 6.0, rel=1e-12)
    assert remainder_bound(5, 0.0, 3.0) == 0.0
    assert remainder_bound(5, 2.0, 0.0) == 0.0


def test_remainder_bound_vanishes_with_order():
    values = [remainder_bound(n, 3.0, 1.0) for n in range(0, 40, 5)]
    assert values[-1] < 1e-12
    assert all(np.isfinite(values))


def test_remainder_bound_decreasing_past_crossover():
    beta = 2.0
    values = [remainder_bound(n, beta, 1.0) for n in range(25)]
    start = int(math.ceil(beta))  # factorial overtakes the power from here
    assert all(values[k + 1] < values[k] for k in range(start, 24))


def test_min_order_direct_cases():
    ones = [1.0] * 25
    assert min_order(2.0, 1.0, ones) == 0
    assert min_order(0.4, 1.0, ones) == 2  # order 1 gives 0.5, order 2 gives 1/6
    with pytest.raises(InputError):
        min_order(0.0, 1.0, ones)


def test_min_order_unsatisfiable_carries_best():
    with pytest.raises(BoundUnsatisfiableError) as info:
        min_order(1e-300, 10.0, [1.0] * 25, order_cap=20)
    assert info.value.best_bound > 1e-300
    assert info.value.best_order is not None


def test_min_order_monotone_in_accuracy():
    ones = [1.0] * 25
    previous = -1
    for eps in (2.0, 1.0, 0.4, 0.1, 1e-3, 1e-6):
        order = min_order(eps, 1.0, ones)
        assert order >= previous
        previous = order


def test_remainder_budget_wrapper():
    budget = RemainderBudget(epsilon=0.4, delta_max=0.1, t=100, m_bounds=tuple([1.0] * 25))
    assert budget.beta_total == pytest.approx(1.0)
    assert budget.required_order() == 2
    with pytest.raises(InputError):
        RemainderBudget(epsilon=-1.0, delta_max=0.1, t=4, m_bounds=(1.0, 1.0))
    with pytest.raises(InputError):
        RemainderBudget(epsilon=0.1, delta_max=0.1, t=4, m_bounds=(1.0, -1.0))


def test_directional_derivative_matches_jacobians():
    model, rng = make_instance(0, t=4, n=2, m=3, beta=0.4)
    slices = build_kernel_grad_slices(model)
    u = rng.standard_normal((model.t, model.n))
    u /= np.linalg.norm(u)
    expected = np.zeros(model.m)
    for i in range(model.t):
        expected += mean_jacobian(model, slices, i) @ u[i]
    value = directional_derivative(model, model.train.locations, u, order=1, step=1e-6)
    assert np.allclose(value, expected, rtol=1e-6, atol=1e-9)


def test_second_directional_derivative_matches_hessians():
    from gpcorrect import mean_hessian
    from gpcorrect.derivatives import DerivativeCore

    model, rng = make_instance(4, t=3, n=2, m=2, beta=0.4)
    slices = build_kernel_grad_slices(model)
    core = DerivativeCore(model, slices)
    u = rng.standard_normal((model.t, model.n))
    u /= np.linalg.norm(u)
    expected = np.zeros(model.m)
    for i in range(model.t):
        for j in range(model.t):
            H = mean_hessian(model, slices, i, j, core=core)
            expected += np.einsum("mde,d,e->m", H, u[i], u[j])
    value = directional_derivative(model, model.train.locations, u, order=2, step=1e-4)
    assert np.allclose(value, expected, rtol=1e-4, atol=1e-7)


def test_estimate_deterministic_and_positive():
    model, _ = make_instance(1, t=4, n=1, m=3)
    a = estimate_gradient_norm(model, order=1, probes=8, seed=3)
    b = estimate_gradient_norm(model, order=1, probes=8, seed=3)
    assert a == b
    assert a >= 0.0
    assert estimate_gradient_norm(model, order=1, probes=8, seed=4) >= 0.0


def test_estimate_scales_linearly_with_measurements():
    model, _ = make_instance(2, t=3, n=1, m=2)
    doubled = train(
        TrainingSet(model.train.locations, 2.0 * model.train.measurements),
        model.test,
        model.hp,
    )
    for order in (1, 2):
        base = estimate_gradient_norm(model, order=order, probes=6, seed=0)
        twice = estimate_gradient_norm(doubled, order=order, probes=6, seed=0)
        assert twice == pytest.approx(2.0 * base, rel=1e-9)


def test_estimate_input_validation():
    model, _ = make_instance(3, t=2, n=1, m=2)
    with pytest.raises(InputError):
        estimate_gradient_norm(model, order=4)
    with pytest.raises(InputError):
        estimate_gradient_norm(model, order=1, probes=0)
    with pytest.raises(InputError):
        directional_derivative(model, model.train.locations,
                               np.ones((model.t, model.n)), order=5, step=1e-3)
