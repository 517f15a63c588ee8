"""Derivatives of the GP posterior moments with respect to training locations.

Moving training location i perturbs only column i of the test-train kernel
matrix and row/column i of the train-train kernel matrix, so every
derivative tensor is assembled from compressed per-index planes. No dense
(T, T, n) kernel-gradient tensor is ever materialized; the Jacobian of the
posterior mean with respect to one location costs O(M T n).

Mean derivatives are linear in the measurement vector. Every assembly
routine therefore takes the solve vector as an explicit argument: passing
the columns of the inverse Gram matrix instead yields the measurement-free
structural tensors whose contraction with any measurement vector
reproduces the mean Jacobian and Hessian. Covariance derivatives never
read the measurements at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import BudgetError, InputError
from .gp import TrainedModel
from .kernel import grad_matrix, hess_matrix, se_kernel_hess

# Scalar budget for one dense structural-tensor family (T slices of
# M x n x T each). Above this, precompute must run with the lazy policy.
DEFAULT_DENSE_BUDGET = 10_000_000


def _check_index(i, t):
    if not 0 <= i < t:
        raise InputError(f"training index {i} out of range [0, {t})")


@dataclass(frozen=True)
class KernelGradSlices:
    """Non-zero planes of the kernel-matrix gradients, one entry per location.

    eT[i] is the (M, n) gradient of test-train column i with respect to
    location i. TT[i] is the (T, n) gradient of train-train column i; the
    row planes are its structured mirror and the diagonal plane is zero
    because the self-kernel is constant.
    """

    eT: np.ndarray  # (T, M, n)
    TT: np.ndarray  # (T, T, n)


def build_kernel_grad_slices(model: TrainedModel) -> KernelGradSlices:
    """Evaluate the compressed kernel-gradient planes at the training locations."""
    X = model.train.locations
    Xe = model.test.locations
    hp = model.hp
    eT = np.stack([grad_matrix(Xe, X[i], hp) for i in range(model.t)])
    TT = np.stack([grad_matrix(X, X[i], hp) for i in range(model.t)])
    return KernelGradSlices(eT=eT, TT=TT)


def dense_eT_gradient(slices: KernelGradSlices, i: int) -> np.ndarray:
    """Zero-padded (M, T, n) gradient of the test-train matrix w.r.t. location i."""
    t, m, n = slices.eT.shape
    _check_index(i, t)
    out = np.zeros((m, t, n))
    out[:, i, :] = slices.eT[i]
    return out


def dense_TT_gradient(slices: KernelGradSlices, i: int) -> np.ndarray:
    """Zero-padded (T, T, n) gradient of the train-train matrix w.r.t. location i."""
    t = slices.TT.shape[0]
    n = slices.TT.shape[2]
    _check_index(i, t)
    out = np.zeros((t, t, n))
    out[:, i, :] = slices.TT[i]
    out[i, :, :] = slices.TT[i]
    out[i, i, :] = 0.0
    return out


class DerivativeCore:
    """Shared solve products for assembling moment derivatives.

    Per-index pieces are memoized on first use, so eager (dense) and
    deferred (lazy) storage policies execute identical floating-point
    operations and produce bit-identical tensors.
    """

    def __init__(self, model: TrainedModel, slices: KernelGradSlices | None = None):
        self.model = model
        self.slices = slices if slices is not None else build_kernel_grad_slices(model)
        Kinv = cho_solve(model.K_factor, np.eye(model.t))
        self.Kinv = 0.5 * (Kinv + Kinv.T)
        self.P = model.P
        self.c = model.c
        self._kd = {}
        self._pd = {}
        self._hbb_eT = {}
        self._hbb_TT = {}

    def kd(self, i):
        """Inverse Gram matrix times the compressed train-train plane i, (T, n)."""
        if i not in self._kd:
            self._kd[i] = self.Kinv @ self.slices.TT[i]
        return self._kd[i]

    def pd(self, i):
        """Projection matrix times the compressed train-train plane i, (M, n)."""
        if i not in self._pd:
            self._pd[i] = self.P @ self.slices.TT[i]
        return self._pd[i]

    def hbb_eT(self, i):
        """Second-argument kernel Hessians of every test point against location i, (M, n, n)."""
        if i not in self._hbb_eT:
            self._hbb_eT[i] = hess_matrix(
                self.model.test.locations, self.model.train.locations[i], self.model.hp
            )
        return self._hbb_eT[i]

    def hbb_TT(self, i):
        """Like hbb_eT but against the training locations, row i zeroed, (T, n, n).

        Row i corresponds to the constant self-kernel entry, whose second
        derivative with respect to location i is zero.
        """
        if i not in self._hbb_TT:
            E = hess_matrix(
                self.model.train.locations, self.model.train.locations[i], self.model.hp
            )
            E[i] = 0.0
            self._hbb_TT[i] = E
        return self._hbb_TT[i]

    def _hab(self, i, j):
        return se_kernel_hess(
            self.model.train.locations[i],
            self.model.train.locations[j],
            self.model.hp,
            which="first-second",
        )

    # -- assembly kernels; cc has shape (T, R) --------------------------------

    def mean_jac_cols(self, i, cc):
        """Mean Jacobian w.r.t. location i for each solve column, (M, n, R)."""
        g = self.slices.eT[i]
        D = self.slices.TT[i]
        B = D[:, :, None] * cc[i]
        B[i] = D.T @ cc
        return g[:, :, None] * cc[i] - np.einsum("mt,tnr->mnr", self.P, B)

    def mean_hess_cols(self, i, j, cc):
        """Mean Hessian w.r.t. locations (i, j) for each solve column, (M, n, n, R).

        Second derivative of the solve chain: kernel curvature terms plus
        products of first-order planes with the inverse Gram matrix. The
        i == j branch carries the extra same-point curvature of the kernel
        matrices; both branches are locked by finite-difference oracles.
        """
        g = self.slices.eT
        gi, gj = g[i], g[j]
        Di, Dj = self.slices.TT[i], self.slices.TT[j]
        KDi, KDj = self.kd(i), self.kd(j)
        PDi, PDj = self.pd(i), self.pd(j)
        pi, pj = self.P[:, i], self.P[:, j]
        kij = self.Kinv[i, j]
        Dci = Di.T @ cc  # (n, R)
        Dcj = Dj.T @ cc
        Q = Di.T @ KDj  # (n, n)

        s_j = kij * Dcj + np.einsum("e,r->er", KDj[i], cc[j])
        s_i = kij * Dci + np.einsum("d,r->dr", KDi[j], cc[i])
        H = -np.einsum("md,er->mder", gi, s_j)
        H -= np.einsum("me,dr->mder", gj, s_i)
        H += np.einsum("m,e,dr->mder", pj, KDj[i], Dci)
        H += np.einsum("m,de,r->mder", pj, Q, cc[i])
        H += kij * np.einsum("me,dr->mder", PDj, Dci)
        H += np.einsum("me,d,r->mder", PDj, KDi[j], cc[i])
        H += np.einsum("m,d,er->mder", pi, KDi[j], Dcj)
        H += np.einsum("m,de,r->mder", pi, Q, cc[j])
        H += kij * np.einsum("md,er->mder", PDi, Dcj)
        H += np.einsum("md,e,r->mder", PDi, KDj[i], cc[j])
        if i == j:
            H += np.einsum("mde,r->mder", self.hbb_eT(i), cc[i])
            E = self.hbb_TT(i)
            PE = np.einsum("ml,lde->mde", self.P, E)
            ccE = np.einsum("lr,lde->der", cc, E)
            H -= np.einsum("r,mde->mder", cc[i], PE)
            H -= np.einsum("m,der->mder", pi, ccE)
        else:
            Hab = self._hab(i, j)
            H -= np.einsum("m,de,r->mder", pi, Hab, cc[j])
            H -= np.einsum("m,de,r->mder", pj, Hab, cc[i])
        return H

    def cov_jac(self, i):
        """Covariance Jacobian w.r.t. location i, (M, M, n); measurement-free."""
        g = self.slices.eT[i]
        p = self.P[:, i]
        v = self.pd(i) - g
        return np.einsum("md,k->mkd", v, p) + np.einsum("m,kd->mkd", p, v)

    def cov_hess(self, i, j):
        """Covariance Hessian w.r.t. locations (i, j), (M, M, n, n); measurement-free."""
        gi, gj = self.slices.eT[i], self.slices.eT[j]
        KDi, KDj = self.kd(i), self.kd(j)
        PDi, PDj = self.pd(i), self.pd(j)
        pi, pj = self.P[:, i], self.P[:, j]
        kij = self.Kinv[i, j]
        Q = self.slices.TT[i].T @ KDj  # (n, n)
        rho = gj - PDj  # (M, n)

        U = -kij * np.einsum("md,ke->mkde", gi, PDj)
        U -= np.einsum("md,k,e->mkde", gi, pj, KDj[i])
        U += kij * np.einsum("md,ke->mkde", gi, gj)
        if i == j:
            U += np.einsum("mde,k->mkde", self.hbb_eT(i), pi)

        B = kij * np.einsum("me,kd->mkde", rho, PDi)
        B += np.einsum("me,k,d->mkde", rho, pi, KDi[j])
        B -= np.einsum("m,kd,e->mkde", pj, PDi, KDj[i])
        B -= np.einsum("m,k,de->mkde", pj, pi, Q)

        H = -(U + U.transpose(1, 0, 2, 3)) + B + B.transpose(1, 0, 2, 3)
        if i == j:
            PE = np.einsum("ml,lde->mde", self.P, self.hbb_TT(i))
            H += np.einsum("m,kde->mkde", pi, PE)
            H += np.einsum("mde,k->mkde", PE, pi)
        else:
            Hab = self._hab(i, j)
            H += np.einsum("m,k,de->mkde", pi, pj, Hab)
            H += np.einsum("m,k,de->mkde", pj, pi, Hab)
        return H


def mean_jacobian(model: TrainedModel, slices: KernelGradSlices, i: int) -> np.ndarray:
    """Jacobian of the posterior mean w.r.t. training location i, (M, n).

    Uses the compressed kernel-gradient planes; cost O(M n + M T n), with no
    temporary larger than (T, n).
    """
    _check_index(i, model.t)
    g = slices.eT[i]
    D = slices.TT[i]
    B = D * model.c[i]
    B[i] = D.T @ model.c
    return g * model.c[i] - model.P @ B


def cov_jacobian(model: TrainedModel, slices: KernelGradSlices, i: int) -> np.ndarray:
    """Jacobian of the posterior covariance w.r.t. training location i, (M, M, n).

    Each coordinate slab is a symmetric rank-two update; the result does not
    depend on the measurements.
    """
    _check_index(i, model.t)
    g = slices.eT[i]
    p = model.P[:, i]
    v = model.P @ slices.TT[i] - g
    return np.einsum("md,k->mkd", v, p) + np.einsum("m,kd->mkd", p, v)


def mean_hessian(
    model: TrainedModel,
    slices: KernelGradSlices,
    i: int,
    j: int,
    core: DerivativeCore | None = None,
) -> np.ndarray:
    """Hessian of the posterior mean w.r.t. locations (i, j), (M, n, n).

    Pass a shared ``core`` when evaluating many blocks; otherwise one is
    built for the call.
    """
    _check_index(i, model.t)
    _check_index(j, model.t)
    if core is None:
        core = DerivativeCore(model, slices)
    return core.mean_hess_cols(i, j, model.c[:, None])[..., 0]


def cov_hessian(
    model: TrainedModel,
    slices: KernelGradSlices,
    i: int,
    j: int,
    core: DerivativeCore | None = None,
) -> np.ndarray:
    """Hessian of the posterior covariance w.r.t. locations (i, j), (M, M, n, n)."""
    _check_index(i, model.t)
    _check_index(j, model.t)
    if core is None:
        core = DerivativeCore(model, slices)
    return core.cov_hess(i, j)


def build_structural_tensors(
    model: TrainedModel,
    slices: KernelGradSlices,
    core: DerivativeCore | None = None,
    budget: int = DEFAULT_DENSE_BUDGET,
):
    """Measurement-free factors of the mean Jacobians and Hessians.

    Returns
    -------
    F : ndarray, shape (T, M, n, T)
        Contracting F[i] with the measurement vector over the trailing axis
        gives the mean Jacobian for location i.
    G : dict[(int, int), ndarray]
        Blocks of shape (M, n, n, T); contraction with the measurements
        gives the mean Hessian for the location pair.

    Raises
    ------
    BudgetError
        If one dense family (T * M * n * T scalars) exceeds ``budget``.
    """
    t, m, n = model.t, model.m, model.n
    if t * m * n * t > budget:
        raise BudgetError(
            f"dense structural tensors need {t * m * n * t} scalars per family, "
            f"over the budget of {budget}; use the lazy storage policy"
        )
    if core is None:
        core = DerivativeCore(model, slices)
    F = np.stack([core.mean_jac_cols(i, core.Kinv) for i in range(t)])
    G = {(i, j): core.mean_hess_cols(i, j, core.Kinv) for i in range(t) for j in range(t)}
    return F, G
