"""Squared-exponential kernel and its analytic first and second derivatives.

The kernel is k(a, b) = alpha^2 exp(-||a - b||^2 / (2 beta^2)). Derivatives
are taken with respect to the second argument unless stated otherwise; the
gradient with respect to the first argument is the negation by symmetry.
Distances far beyond the lengthscale underflow to 0.0, which is returned
as-is rather than raised: downstream sums remain well defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Hyperparams:
    """Kernel and noise hyperparameters.

    Parameters
    ----------
    alpha : float
        Signal standard deviation (field units). Must be positive.
    beta : float
        Characteristic lengthscale (location units). Must be positive.
    sigma_y : float
        Measurement-noise standard deviation (field units). Non-negative.
    """

    alpha: float
    beta: float
    sigma_y: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise InputError(f"beta must be positive, got {self.beta}")
        if self.sigma_y < 0:
            raise InputError(f"sigma_y must be non-negative, got {self.sigma_y}")


def _as_location(x):
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if a.ndim != 1:
        raise InputError(f"a location must be a 1-D coordinate vector, got shape {a.shape}")
    return a


def _check_pair(a, b):
    a = _as_location(a)
    b = _as_location(b)
    if a.shape != b.shape:
        raise InputError(f"location dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def se_kernel(a, b, hp: Hyperparams) -> float:
    """Evaluate the SE kernel at a pair of locations.

    Parameters
    ----------
    a, b : array_like, shape (n,)
        Locations of equal dimension.
    hp : Hyperparams

    Returns
    -------
    float
        Value in (0, alpha^2]; exactly alpha^2 when a == b. Underflows to
        0.0 for separations much larger than the lengthscale.
    """
    a, b = _check_pair(a, b)
    r = a - b
    return float(hp.alpha**2 * np.exp(-0.5 * (r @ r) / hp.beta**2))


def se_kernel_grad(a, b, hp: Hyperparams) -> np.ndarray:
    """Gradient of the kernel with respect to its second argument.

    Returns (a - b) k(a, b) / beta^2, an (n,) vector. The gradient with
    respect to the first argument is its negation.
    """
    a, b = _check_pair(a, b)
    return (a - b) / hp.beta**2 * se_kernel(a, b, hp)


def se_kernel_hess(a, b, hp: Hyperparams, which: str = "second-second") -> np.ndarray:
    """Second derivative matrix of the kernel.

    Parameters
    ----------
    which : {"second-second", "first-second"}
        "second-second" is d^2 k / db db^T,
            k(a,b) [ (a-b)(a-b)^T / beta^4 - I / beta^2 ];
        "first-second" is d^2 k / da db^T,
            k(a,b) [ I / beta^2 - (a-b)(a-b)^T / beta^4 ].

    Returns
    -------
    ndarray, shape (n, n)
        Symmetric matrix.
    """
    a, b = _check_pair(a, b)
    r = a - b
    k = float(hp.alpha**2 * np.exp(-0.5 * (r @ r) / hp.beta**2))
    curv = np.outer(r, r) / hp.beta**4 - np.eye(a.shape[0]) / hp.beta**2
    if which == "second-second":
        return k * curv
    if which == "first-second":
        return -k * curv
    raise InputError(f"unknown Hessian variant {which!r}")


def kernel_matrix(A, B, hp: Hyperparams) -> np.ndarray:
    """Pairwise kernel matrix between two location sets.

    Parameters
    ----------
    A : ndarray, shape (p, n)
    B : ndarray, shape (q, n)

    Returns
    -------
    ndarray, shape (p, q)
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise InputError(f"location dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    diff = A[:, None, :] - B[None, :, :]
    sq = np.einsum("pqn,pqn->pq", diff, diff)
    return hp.alpha**2 * np.exp(-0.5 * sq / hp.beta**2)


def grad_matrix(A, at, hp: Hyperparams) -> np.ndarray:
    """Stacked kernel gradients d k(A[i], z) / dz evaluated at z = at.

    Row i is (A[i] - at) k(A[i], at) / beta^2. Rows where A[i] == at are
    exactly zero.

    Returns
    -------
    ndarray, shape (p, n)
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    at = _as_location(at)
    if A.shape[1] != at.shape[0]:
        raise InputError(f"location dimensions differ: {A.shape[1]} vs {at.shape[0]}")
    diff = A - at[None, :]
    k = hp.alpha**2 * np.exp(-0.5 * np.einsum("pn,pn->p", diff, diff) / hp.beta**2)
    return diff / hp.beta**2 * k[:, None]


def hess_matrix(A, at, hp: Hyperparams) -> np.ndarray:
    """Stacked second-argument Hessians d^2 k(A[i], z) / dz dz^T at z = at.

    Returns
    -------
    ndarray, shape (p, n, n)
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    at = _as_location(at)
    if A.shape[1] != at.shape[0]:
        raise InputError(f"location dimensions differ: {A.shape[1]} vs {at.shape[0]}")
    n = at.shape[0]
    diff = A - at[None, :]
    k = hp.alpha**2 * np.exp(-0.5 * np.einsum("pn,pn->p", diff, diff) / hp.beta**2)
    curv = np.einsum("pd,pe->pde", diff, diff) / hp.beta**4 - np.eye(n)[None, :, :] / hp.beta**2
    return k[:, None, None] * curv
