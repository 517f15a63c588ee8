"""Taylor remainder bounds and minimal-order selection.

The truncation error of an order-N expansion of the posterior mean over a
stacked perturbation of norm at most b is bounded by
M_{N+1} b^(N+1) / (N+1)!, where M_{N+1} bounds the (N+1)-th order gradient
tensor on the region of interest. The gradient-norm bounds are estimated by
sampled directional derivatives: an empirical figure, not a certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundUnsatisfiableError, InputError
from .gp import TrainedModel, predict_at

DEFAULT_ORDER_CAP = 20


def stacked_delta_bound(delta_max: float, t: int) -> float:
    """Norm bound on the stacked perturbation vector: delta_max * sqrt(T)."""
    if delta_max < 0:
        raise InputError(f"delta_max must be non-negative, got {delta_max}")
    if t < 1:
        raise InputError(f"point count must be at least 1, got {t}")
    return delta_max * math.sqrt(t)


def remainder_bound(order_n: int, beta_total: float, m_next: float) -> float:
    """Truncation-error bound m_next * beta_total^(N+1) / (N+1)!.

    Evaluated in log space so large orders neither overflow nor lose the
    factorial decay.
    """
    if order_n < 0:
        raise InputError(f"order must be non-negative, got {order_n}")
    if beta_total < 0 or m_next < 0:
        raise InputError("beta_total and m_next must be non-negative")
    if beta_total == 0.0 or m_next == 0.0:
        return 0.0
    log_bound = (
        math.log(m_next)
        + (order_n + 1) * math.log(beta_total)
        - math.lgamma(order_n + 2)
    )
    return math.exp(log_bound)


def min_order(epsilon: float, beta_total: float, m_bounds,
              order_cap: int = DEFAULT_ORDER_CAP) -> int:
    """Smallest order N whose remainder bound meets the requested accuracy.

    ``m_bounds[k]`` bounds the k-th order gradient tensor; entry 0 is
    unused. Candidate orders run from 0 up to ``order_cap`` (further capped
    by the entries supplied).

    Raises
    ------
    BoundUnsatisfiableError
        If no candidate order qualifies; carries the best achieved bound.
    """
    if epsilon <= 0:
        raise InputError(f"epsilon must be positive, got {epsilon}")
    top = min(order_cap, len(m_bounds) - 2)
    if top < 0:
        raise InputError("m_bounds must provide at least the first-order bound")
    best_order, best_bound = None, math.inf
    for n in range(top + 1):
        bound = remainder_bound(n, beta_total, m_bounds[n + 1])
        if bound <= epsilon:
            return n
        if bound < best_bound:
            best_order, best_bound = n, bound
    raise BoundUnsatisfiableError(
        f"no order up to {top} achieves accuracy {epsilon:g}; "
        f"best bound {best_bound:g} at order {best_order}",
        best_order=best_order,
        best_bound=best_bound,
    )


@dataclass(frozen=True)
class RemainderBudget:
    """Accuracy request plus the bounds needed to pick a Taylor order."""

    epsilon: float
    delta_max: float
    t: int
    m_bounds: tuple

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InputError(f"epsilon must be positive, got {self.epsilon}")
        if any(b < 0 for b in self.m_bounds):
            raise InputError("gradient-norm bounds must be non-negative")
        object.__setattr__(self, "m_bounds", tuple(float(b) for b in self.m_bounds))

    @property
    def beta_total(self) -> float:
        return stacked_delta_bound(self.delta_max, self.t)

    def required_order(self, order_cap: int = DEFAULT_ORDER_CAP) -> int:
        return min_order(self.epsilon, self.beta_total, self.m_bounds, order_cap)


def directional_derivative(model: TrainedModel, at, direction,
                           order: int, step: float) -> np.ndarray:
    """Central-difference directional derivative of the retrained mean, (M,).

    ``at`` is a full (T, n) training configuration, ``direction`` a stacked
    (T, n) direction. Orders 1-3 are supported.
    """
    at = np.asarray(at, dtype=float)
    u = np.asarray(direction, dtype=float).reshape(at.shape)

    def mean(s):
        return predict_at(model, at + s * u)[0]

    if order == 1:
        return (mean(step) - mean(-step)) / (2.0 * step)
    if order == 2:
        return (mean(step) - 2.0 * mean(0.0) + mean(-step)) / step**2
    if order == 3:
        return (
            mean(2.0 * step) - 2.0 * mean(step) + 2.0 * mean(-step) - mean(-2.0 * step)
        ) / (2.0 * step**3)
    raise InputError(f"directional derivatives are implemented for orders 1-3, got {order}")


def estimate_gradient_norm(model: TrainedModel, order: int, probes: int = 16,
                           seed: int = 0, inflate: float = 0.0) -> float:
    """Empirical lower-bound estimate of the order-th gradient-tensor norm.

    Samples training configurations with each location displaced uniformly
    within ``inflate`` per coordinate of its planned position (the region
    perturbations bounded by ``inflate`` can reach), draws a random unit
    direction per probe, and returns the largest directional-derivative
    magnitude seen. A sampled estimate: it can undershoot the true
    supremum, never certifies it.
    """
    if order not in (1, 2, 3):
        raise InputError(f"order must be 1, 2 or 3, got {order}")
    if probes < 1:
        raise InputError(f"probes must be at least 1, got {probes}")
    X = model.train.locations
    rng = np.random.default_rng(seed)
    step = {1: 1e-5, 2: 1e-4, 3: 1e-3}[order] * max(model.hp.beta, 1e-3)
    worst = 0.0
    for _ in range(probes):
        at = X + rng.uniform(-inflate, inflate, size=X.shape)
        u = rng.standard_normal(X.shape)
        u /= np.linalg.norm(u)
        value = float(np.linalg.norm(directional_derivative(model, at, u, order, step)))
        worst = max(worst, value)
    return worst
