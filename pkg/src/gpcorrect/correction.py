"""Online correction of the posterior moments from known location errors.

Given precomputed operators, a sparse set of location perturbations is
folded into the baseline moments by a first- or second-order Taylor update.
An empty perturbation set returns the baseline bit for bit. The corrected
covariance is symmetrized; positive semidefiniteness is NOT enforced unless
requested, because a truncated expansion can leave it indefinite for large
perturbations — the diagnostics report the smallest eigenvalue instead.
"""

from __future__ import annotations

import time
import weakref
from dataclasses import dataclass, field

import numpy as np

from ._online import online_update
from .errors import ContractMismatchError, InputError
from .gp import TrainedModel
from .operators import CorrectionOperators, precompute

_EMPTY_CURVATURE = np.empty((0, 0, 0, 0))
_EMPTY_MATRIX = np.empty((0, 0))
_EMPTY_PAIR_DIFF = np.empty((0, 0, 0))


@dataclass(frozen=True)
class PerturbationSet:
    """Sparse map from training index to its location error.

    Indices absent from the map carry zero error; the typical call corrects
    a small subset of the training locations. Every stored error must
    satisfy the declared bound.
    """

    deltas: dict
    delta_max: float = 0.0

    def __post_init__(self):
        clean = {}
        worst = 0.0
        for idx, d in self.deltas.items():
            if not isinstance(idx, (int, np.integer)) or idx < 0:
                raise InputError(f"perturbation index {idx!r} must be a non-negative integer")
            vec = np.atleast_1d(np.asarray(d, dtype=float))
            if vec.ndim != 1:
                raise InputError(f"perturbation {idx} must be an n-vector, got shape {vec.shape}")
            clean[int(idx)] = vec
            worst = max(worst, float(np.linalg.norm(vec)))
        bound = self.delta_max if self.delta_max else worst
        if worst > bound:
            raise InputError(
                f"perturbation norm {worst:g} exceeds the declared bound {bound:g}"
            )
        object.__setattr__(self, "deltas", clean)
        object.__setattr__(self, "delta_max", bound)
        indices = sorted(clean)
        object.__setattr__(self, "_indices", tuple(indices))
        object.__setattr__(self, "_index_array", np.asarray(indices, dtype=np.int64))
        stack = np.stack([clean[i] for i in indices]) if indices else None
        object.__setattr__(self, "_stack", stack)

    @classmethod
    def from_dense(cls, deltas, delta_max=0.0, drop_zeros=True):
        """Build from a (T, n) array; exactly-zero rows are dropped by default."""
        arr = np.asarray(deltas, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        entries = {
            i: arr[i]
            for i in range(arr.shape[0])
            if not (drop_zeros and not np.any(arr[i]))
        }
        return cls(entries, delta_max)

    def items(self):
        """Perturbations in ascending index order, for deterministic reduction."""
        return [(i, self.deltas[i]) for i in self._indices]

    @property
    def indices(self):
        return self._indices

    @property
    def stacked(self):
        """Errors stacked in index order, (K, n); None when empty."""
        return self._stack


@dataclass
class CorrectedPosterior:
    """Corrected moments with the term breakdown and phase timings."""

    mean: np.ndarray
    cov: np.ndarray
    order_used: int
    terms: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    offline_seconds: float = 0.0
    online_seconds: float = 0.0


_MATCH_CACHE = weakref.WeakKeyDictionary()


def _validate(ops, base, pert, order):
    if order not in (1, 2):
        raise InputError(f"correction order must be 1 or 2, got {order}")
    seen = _MATCH_CACHE.setdefault(base, weakref.WeakSet())
    if ops not in seen:
        if not ops.matches(base):
            raise ContractMismatchError(
                "operators were built for a different instance "
                f"(T={ops.t}, M={ops.m}, n={ops.n}) than the model "
                f"(T={base.t}, M={base.m}, n={base.n}) or for different "
                "locations/hyperparameters"
            )
        seen.add(ops)
    if pert.indices and pert.indices[-1] >= base.t:
        raise InputError(
            f"perturbation index {pert.indices[-1]} out of range [0, {base.t})"
        )
    if pert.stacked is not None and pert.stacked.shape[1] != base.n:
        raise InputError(
            f"perturbations have dimension {pert.stacked.shape[1]}, expected {base.n}"
        )


def _run_update(ops, base, pert, order, want_mean, want_cov):
    ga = ops.gather(pert.indices, with_curvature=order == 2)
    if order == 2:
        curvature, k_ss, diff_ss = ga["curvature"], ga["k_ss"], ga["diff_ss"]
    else:
        curvature, k_ss, diff_ss = _EMPTY_CURVATURE, _EMPTY_MATRIX, _EMPTY_PAIR_DIFF
    idx = pert._index_array
    return online_update(
        ga["planes"], curvature, ga["p"], ga["kinv_ss"], k_ss, diff_ss,
        pert.stacked, idx, base.c, base.c[idx], base.P,
        base.mean_hat, base.cov_hat, base.hp.beta, base.m, base.t,
        order, want_mean, want_cov,
    )


def correct_mean(ops: CorrectionOperators, base: TrainedModel,
                 pert: PerturbationSet, order: int = 2) -> np.ndarray:
    """Taylor-correct the baseline mean for the given location errors, (M,).

    The sums range only over the perturbed indices, so the cost scales with
    the perturbed subset, not the full training set. An empty perturbation
    set returns the baseline exactly.
    """
    _validate(ops, base, pert, order)
    if not pert.deltas:
        return base.mean_hat.copy()
    mean, _, _, _, _, _ = _run_update(ops, base, pert, order, True, False)
    return mean


def correct_cov(ops: CorrectionOperators, base: TrainedModel,
                pert: PerturbationSet, order: int = 2,
                psd_project: bool = False) -> np.ndarray:
    """Taylor-correct the baseline covariance, (M, M), symmetrized.

    With ``psd_project`` the eigenvalues are clipped at zero afterwards;
    off by default.
    """
    _validate(ops, base, pert, order)
    if not pert.deltas:
        return base.cov_hat.copy()
    _, cov, _, _, _, _ = _run_update(ops, base, pert, order, False, True)
    if psd_project:
        cov = project_psd(cov)
    return cov


def project_psd(cov: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero and re-symmetrize."""
    vals, vecs = np.linalg.eigh(cov)
    out = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return 0.5 * (out + out.T)


def run_algorithm_1(base: TrainedModel, pert: PerturbationSet, order: int = 2, *,
                    policy: str = "dense", ops: CorrectionOperators | None = None,
                    psd_project: bool = False,
                    with_terms: bool = True) -> CorrectedPosterior:
    """Full offline/online correction pipeline for one model.

    The offline phase precomputes (or reuses) the operators; the online
    phase folds the perturbations into both moments through the stored
    measurement-free tensors. The result is bit-identical to calling
    ``correct_mean`` and ``correct_cov`` with the same operators. Term
    breakdown and covariance diagnostics are assembled outside the timed
    online window.
    """
    t0 = time.perf_counter()
    if ops is None:
        ops = precompute(base, policy)
    offline = time.perf_counter() - t0

    _validate(ops, base, pert, order)
    t1 = time.perf_counter()
    if pert.deltas:
        mean, cov, mean_first, mean_second, cov_first, cov_second = _run_update(
            ops, base, pert, order, True, True
        )
        if psd_project:
            cov = project_psd(cov)
    else:
        mean = base.mean_hat.copy()
        cov = base.cov_hat.copy()
    online = time.perf_counter() - t1

    terms = {}
    if with_terms:
        if not pert.deltas:
            mean_first = mean_second = np.zeros(base.m)
            cov_first = cov_second = np.zeros((base.m, base.m))
        elif order == 1:
            mean_second = np.zeros(base.m)
            cov_second = np.zeros((base.m, base.m))
        terms = {
            "mean_zeroth": base.mean_hat.copy(),
            "mean_first": mean_first,
            "mean_second": mean_second,
            "cov_zeroth": base.cov_hat.copy(),
            "cov_first": cov_first,
            "cov_second": cov_second,
        }
    min_eig = float(np.linalg.eigvalsh(cov).min())
    diagnostics = {"cov_min_eigenvalue": min_eig, "cov_indefinite": min_eig < 0.0}
    return CorrectedPosterior(
        mean=mean,
        cov=cov,
        order_used=order,
        terms=terms,
        diagnostics=diagnostics,
        offline_seconds=offline,
        online_seconds=online,
    )
