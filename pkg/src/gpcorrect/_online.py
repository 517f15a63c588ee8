"""Compiled online-phase kernel for the Taylor moment update.

Every Jacobian and Hessian block of the posterior moments is a sum of outer
products of M-vectors, so the double sums over perturbed location pairs
collapse into a handful of matrix products over (M, K) stacks. Running the
whole update as one compiled function keeps the online phase cheaper than a
small full retrain, which a plain numpy implementation loses on dispatch
overhead alone. Matrix products inside the jitted body still dispatch to
BLAS. fastmath stays off so results are deterministic and bit-identical
across storage policies.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, fastmath=False)
def online_update(planes, curvature, p_s, kinv_ss, k_ss, diff_ss, dl, idx,
                  c, c_s, P, mean_hat, cov_hat, beta, m, t,
                  order, want_mean, want_cov):
    """Apply the Taylor update for K perturbed locations.

    planes is the fused (K, M + 2T, n) stack of test-side gradient planes,
    train-side gradient planes, and their inverse-Gram products; curvature
    the (K, M + T, n, n) same-point kernel Hessian stack (empty at first
    order). Returns (mean, cov, mean_first, mean_second, cov_first,
    cov_second) with empty arrays for whichever moment was not requested.
    """
    k = dl.shape[0]
    n = dl.shape[1]

    # contract every per-index plane with its perturbation in one pass
    v = np.empty((k, m + 2 * t))
    for i in range(k):
        v[i] = planes[i] @ dl[i]
    a = np.ascontiguousarray(v[:, :m].T)            # (M, K)
    dvec = np.ascontiguousarray(v[:, m:m + t].T)    # (T, K)
    kd_full = np.ascontiguousarray(v[:, m + t:].T)  # (T, K)
    kd_s = np.empty((k, k))
    for r in range(k):
        for s in range(k):
            kd_s[r, s] = kd_full[idx[r], s]
    b = P @ dvec  # (M, K)
    dc = c @ dvec  # (K,)

    q = np.empty((0, 0))
    hbb2 = np.empty((0, 0))
    pe2 = np.empty((0, 0))
    ce2 = np.empty(0)
    hab = np.empty((0, 0))
    if order == 2:
        q = dvec.T @ kd_full  # (K, K)
        w2 = np.empty((k, m + t))
        for i in range(k):
            for pos in range(m + t):
                acc = 0.0
                for d in range(n):
                    for e in range(n):
                        acc += curvature[i, pos, d, e] * dl[i, d] * dl[i, e]
                w2[i, pos] = acc
        hbb2 = np.ascontiguousarray(w2[:, :m].T)  # (M, K)
        e2 = np.ascontiguousarray(w2[:, m:].T)    # (T, K)
        pe2 = P @ e2
        ce2 = c @ e2
        # pair curvature delta_i' Hab(x_i, x_j) delta_j of the mixed kernel
        # Hessian, closed form; diagonal pairs carry it elsewhere
        hab = np.empty((k, k))
        for i in range(k):
            for j in range(k):
                if i == j:
                    hab[i, j] = 0.0
                else:
                    rdi = 0.0
                    rdj = 0.0
                    dd = 0.0
                    for d in range(n):
                        rdi += diff_ss[i, j, d] * dl[i, d]
                        rdj += diff_ss[i, j, d] * dl[j, d]
                        dd += dl[i, d] * dl[j, d]
                    hab[i, j] = k_ss[i, j] * (dd / beta**2 - rdi * rdj / beta**4)

    mean = np.empty(0)
    mean1 = np.empty(0)
    mean2 = np.empty(0)
    if want_mean:
        y = dvec * c_s.reshape(1, -1)
        for pos in range(k):
            y[idx[pos], pos] = dc[pos]
        ysum = np.sum(y, axis=1)
        mean1 = a @ c_s - P @ ysum
        mean = mean_hat + mean1
        if order == 2:
            coef_sum = np.sum(kinv_ss * dc.reshape(1, -1) + kd_s * c_s.reshape(1, -1), axis=1)
            p_vec = kd_s.T @ dc + (q - hab) @ c_s - 0.5 * ce2
            b_vec = kinv_ss @ dc + kd_s @ c_s
            mean2 = p_s @ p_vec + b @ b_vec - a @ coef_sum + (0.5 * (hbb2 - pe2)) @ c_s
            mean = mean + mean2

    cov = np.empty((0, 0))
    cov1 = np.empty((0, 0))
    cov2 = np.empty((0, 0))
    if want_cov:
        r_ = a - b
        half = r_ @ p_s.T
        cov1 = -(half + half.T)
        cov = cov_hat + cov1
        if order == 2:
            x1 = a @ kinv_ss
            x2 = a @ kd_s
            x3 = r_ @ kinv_ss
            x4 = r_ @ kd_s
            x5 = p_s @ kd_s.T
            x6 = p_s @ q
            left = np.concatenate((-x1, x3 - x5, x2 - hbb2 + x4 - x6 + pe2), axis=1)
            right = np.concatenate((r_, b, p_s), axis=1)
            g1 = left @ right.T
            cov2 = 0.5 * (g1 + g1.T) + (p_s @ hab) @ p_s.T
            cov = cov + cov2
        cov = 0.5 * (cov + cov.T)

    return mean, cov, mean1, mean2, cov1, cov2
