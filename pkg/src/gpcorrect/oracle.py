"""Independent finite-difference oracles for the moment derivatives.

First-order oracles apply central differences to the full-retraining
posterior, so they share nothing with the analytic assembly. Second-order
oracles difference the analytic Jacobians rather than double-differencing
the posterior: that trades a little independence for accuracy, while the
first-order checks transitively anchor the Jacobians themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derivatives import (
    KernelGradSlices,
    build_kernel_grad_slices,
    cov_jacobian,
    mean_jacobian,
)
from .errors import InputError
from .gp import TrainedModel, TrainingSet, predict_at, train


@dataclass(frozen=True)
class FdConfig:
    """Central-difference settings shared by the oracles."""

    step_scale: float = 1e-5
    scheme: str = "central"
    rtol: float = 1e-6
    atol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.step_scale <= 1e-2:
            raise InputError(f"step_scale must lie in (0, 1e-2], got {self.step_scale}")
        if self.scheme != "central":
            raise InputError(f"only the central scheme is supported, got {self.scheme!r}")


def _step(cfg, coord):
    return cfg.step_scale * max(1.0, abs(coord))


def fd_mean_jacobian(model: TrainedModel, i: int, cfg: FdConfig = FdConfig()) -> np.ndarray:
    """Central differences of the retrained posterior mean w.r.t. location i, (M, n)."""
    X = model.train.locations
    if not 0 <= i < model.t:
        raise InputError(f"training index {i} out of range [0, {model.t})")
    out = np.empty((model.m, model.n))
    for d in range(model.n):
        h = _step(cfg, X[i, d])
        Zp = X.copy()
        Zp[i, d] += h
        Zm = X.copy()
        Zm[i, d] -= h
        mp, _ = predict_at(model, Zp)
        mm, _ = predict_at(model, Zm)
        out[:, d] = (mp - mm) / (2.0 * h)
    return out


def fd_cov_jacobian(model: TrainedModel, i: int, cfg: FdConfig = FdConfig()) -> np.ndarray:
    """Central differences of the retrained posterior covariance, (M, M, n)."""
    X = model.train.locations
    if not 0 <= i < model.t:
        raise InputError(f"training index {i} out of range [0, {model.t})")
    out = np.empty((model.m, model.m, model.n))
    for d in range(model.n):
        h = _step(cfg, X[i, d])
        Zp = X.copy()
        Zp[i, d] += h
        Zm = X.copy()
        Zm[i, d] -= h
        _, sp = predict_at(model, Zp)
        _, sm = predict_at(model, Zm)
        out[:, :, d] = (sp - sm) / (2.0 * h)
    return out


def _shifted_model(model, j, e, h):
    Z = model.train.locations.copy()
    Z[j, e] += h
    shifted = train(TrainingSet(Z, model.train.measurements), model.test, model.hp)
    return shifted, build_kernel_grad_slices(shifted)


def fd_mean_hessian(
    model: TrainedModel, i: int, j: int, cfg: FdConfig = FdConfig()
) -> np.ndarray:
    """Central differences of the analytic mean Jacobian in location j, (M, n, n)."""
    X = model.train.locations
    for idx in (i, j):
        if not 0 <= idx < model.t:
            raise InputError(f"training index {idx} out of range [0, {model.t})")
    out = np.empty((model.m, model.n, model.n))
    for e in range(model.n):
        h = _step(cfg, X[j, e])
        mp, sp = _shifted_model(model, j, e, h)
        mm, sm = _shifted_model(model, j, e, -h)
        out[:, :, e] = (mean_jacobian(mp, sp, i) - mean_jacobian(mm, sm, i)) / (2.0 * h)
    return out


def fd_cov_hessian(
    model: TrainedModel, i: int, j: int, cfg: FdConfig = FdConfig()
) -> np.ndarray:
    """Central differences of the analytic covariance Jacobian in location j, (M, M, n, n)."""
    X = model.train.locations
    for idx in (i, j):
        if not 0 <= idx < model.t:
            raise InputError(f"training index {idx} out of range [0, {model.t})")
    out = np.empty((model.m, model.m, model.n, model.n))
    for e in range(model.n):
        h = _step(cfg, X[j, e])
        mp, sp = _shifted_model(model, j, e, h)
        mm, sm = _shifted_model(model, j, e, -h)
        out[:, :, :, e] = (cov_jacobian(mp, sp, i) - cov_jacobian(mm, sm, i)) / (2.0 * h)
    return out
