"""GP model construction and posterior evaluation at fixed test locations.

A trained model caches the SPD factorization of the noisy training Gram
matrix together with the solve products reused by the derivative and
correction machinery. ``predict_at`` refits from scratch at arbitrary
training locations and is the full-retraining reference: it shares no
cached state with the correction path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InputError, ModelError
from .kernel import Hyperparams, kernel_matrix

# Diagonal jitter, relative to the signal variance, added once if the
# factorization fails on numerically semidefinite input.
JITTER_SCALE = 1e-10


def _as_locations(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1:
        raise InputError(f"{name} must be a (count, n) array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class TrainingSet:
    """Planned measurement locations with the measured field values."""

    locations: np.ndarray
    measurements: np.ndarray

    def __post_init__(self):
        locs = _as_locations(self.locations, "training locations")
        y = np.asarray(self.measurements, dtype=float).reshape(-1)
        if y.shape[0] != locs.shape[0]:
            raise InputError(
                f"{y.shape[0]} measurements for {locs.shape[0]} training locations"
            )
        if not np.all(np.isfinite(y)):
            raise InputError("measurements contain non-finite values")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "measurements", y)

    @property
    def count(self):
        return self.locations.shape[0]

    @property
    def dim(self):
        return self.locations.shape[1]


@dataclass(frozen=True)
class TestGrid:
    """Fixed query locations for posterior evaluation."""

    __test__ = False  # bare "Test" prefix is domain vocabulary, not a pytest class

    locations: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "locations", _as_locations(self.locations, "test locations"))

    @property
    def count(self):
        return self.locations.shape[0]

    @property
    def dim(self):
        return self.locations.shape[1]


class TrainedModel:
    """Immutable bundle of a fitted GP and its cached solve products.

    Attributes
    ----------
    hp : Hyperparams
    train : TrainingSet
    test : TestGrid
    K_ee : (M, M) test-test kernel matrix
    K_eT : (M, T) test-train kernel matrix at the training locations
    K_factor : Cholesky factorization of K_TT + sigma_y^2 I
    c : (T,) solve of the factorized matrix against the measurements
    P : (M, T) K_eT times the inverse of the factorized matrix
    mean_hat : (M,) baseline posterior mean
    cov_hat : (M, M) baseline posterior covariance, exactly symmetric
    """

    def __init__(self, hp, train, test, K_ee, K_eT, K_factor, c, P, mean_hat, cov_hat):
        self.hp = hp
        self.train = train
        self.test = test
        self.K_ee = K_ee
        self.K_eT = K_eT
        self.K_factor = K_factor
        self.c = c
        self.P = P
        self.mean_hat = mean_hat
        self.cov_hat = cov_hat

    @property
    def t(self):
        return self.train.count

    @property
    def m(self):
        return self.test.count

    @property
    def n(self):
        return self.train.dim


def _spd_factor(K, hp):
    try:
        return cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_SCALE * hp.alpha**2
    try:
        return cho_factor(K + jitter * np.eye(K.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise ModelError(
            "training Gram matrix is not positive definite even after "
            f"jitter {jitter:g}; near-duplicate locations with a small "
            "sigma_y are the usual cause"
        ) from exc


def _posterior(X, Y, Xe, hp):
    """Fit at training locations X and evaluate the posterior at Xe.

    Single code path shared by ``train`` and ``predict_at`` so that a refit
    at the stored locations reproduces the cached moments bit for bit.
    """
    K = kernel_matrix(X, X, hp) + hp.sigma_y**2 * np.eye(X.shape[0])
    factor = _spd_factor(K, hp)
    K_eT = kernel_matrix(Xe, X, hp)
    c = cho_solve(factor, Y)
    # C-contiguous: the compiled online kernel feeds P straight to BLAS
    P = np.ascontiguousarray(cho_solve(factor, K_eT.T).T)
    K_ee = kernel_matrix(Xe, Xe, hp)
    mean = P @ Y
    cov = K_ee - P @ K_eT.T
    cov = 0.5 * (cov + cov.T)
    return K_ee, K_eT, factor, c, P, mean, cov


def train(train_set: TrainingSet, test_grid: TestGrid, hp: Hyperparams) -> TrainedModel:
    """Fit the GP on the (possibly corrupted) dataset and cache its pieces.

    Raises
    ------
    InputError
        If training and test dimensions disagree.
    ModelError
        If the noisy Gram matrix cannot be factorized; duplicate training
        locations with sigma_y = 0 are rejected before factorization.
    """
    if train_set.dim != test_grid.dim:
        raise InputError(
            f"training dimension {train_set.dim} != test dimension {test_grid.dim}"
        )
    X = train_set.locations
    if hp.sigma_y == 0.0 and np.unique(X, axis=0).shape[0] < X.shape[0]:
        raise ModelError(
            "duplicate training locations with sigma_y = 0 make the Gram matrix singular"
        )
    K_ee, K_eT, factor, c, P, mean, cov = _posterior(
        X, train_set.measurements, test_grid.locations, hp
    )
    return TrainedModel(hp, train_set, test_grid, K_ee, K_eT, factor, c, P, mean, cov)


def predict_at(model: TrainedModel, Z) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and covariance for an alternative set of training locations.

    Refactorizes from scratch at ``Z`` with the stored measurements; this is
    the full-retraining oracle and the timing baseline. ``Z`` must have the
    same shape as the stored training locations.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape != model.train.locations.shape:
        raise InputError(
            f"locations shape {Z.shape} != training shape {model.train.locations.shape}"
        )
    _, _, _, _, _, mean, cov = _posterior(
        Z, model.train.measurements, model.test.locations, model.hp
    )
    return mean, cov
