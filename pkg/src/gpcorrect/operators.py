"""Precomputed correction operators and their binary cache.

The offline phase evaluates, per training location, the Jacobians and
Hessians of the posterior moments plus the measurement-free structural
tensors. The dense policy materializes every block up front (gated by a
scalar budget); the lazy policy builds blocks on first access through the
same routines, so the two policies give bit-identical corrections.

Covariance Hessian blocks scale as M^2 n^2 per location pair and are never
stored densely for more than 50 test points.
"""

from __future__ import annotations

import contextlib
import struct

import numpy as np

from .derivatives import (
    DEFAULT_DENSE_BUDGET,
    DerivativeCore,
    KernelGradSlices,
    build_kernel_grad_slices,
)
from .errors import BudgetError, CacheError, ContractMismatchError, InputError
from .gp import TrainedModel

# Dense covariance-Hessian storage rule. Fixed (not user-tunable) because
# the cache reader must infer the file layout from (T, M, n) alone.
HCOV_DENSE_MAX_M = 50
HCOV_DENSE_BUDGET = 10_000_000

CACHE_MAGIC = b"GPRC"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIIIIB")
_POLICY_CODES = {"dense": 0, "lazy": 1}


def stores_dense_hcov(t: int, m: int, n: int) -> bool:
    """Whether covariance Hessian blocks are materialized under the dense policy."""
    return m <= HCOV_DENSE_MAX_M and t * t * m * m * n * n <= HCOV_DENSE_BUDGET


class CorrectionOperators:
    """Per-location derivative operators for one trained model.

    Accessors return the stored block under the dense policy and build (then
    memoize) it under the lazy policy. Mean-derivative accessors contract
    the structural tensors with a measurement vector, which defaults to the
    vector the operators were built for; pass ``y`` to correct a model that
    shares locations and hyperparameters but carries fresh measurements.
    """

    def __init__(self, model: TrainedModel, policy: str, core: DerivativeCore,
                 budget: int = DEFAULT_DENSE_BUDGET, materialize: bool = True):
        if policy not in _POLICY_CODES:
            raise InputError(f"storage policy must be 'dense' or 'lazy', got {policy!r}")
        self.policy = policy
        self.t, self.m, self.n = model.t, model.m, model.n
        self.train_locations = model.train.locations
        self.test_locations = model.test.locations
        self.hp = model.hp
        self._y = model.train.measurements
        self._core = core
        self._budget = budget
        self._f = {}
        self._g = {}
        self._j_mean = {}
        self._h_mean = {}
        self._j_cov = {}
        self._h_cov = {}
        self._gathered = {}
        self._access_log = None
        if policy == "dense" and materialize:
            if self.t * self.m * self.n * self.t > budget:
                raise BudgetError(
                    f"dense operators need {self.t * self.m * self.n * self.t} scalars "
                    f"per structural family, over the budget of {budget}; "
                    "use storage policy 'lazy'"
                )
            for i in range(self.t):
                self.f_slice(i)
                self.j_mean(i)
                self.j_cov(i)
                for j in range(self.t):
                    self.g_block(i, j)
                    self.h_mean(i, j)
            if stores_dense_hcov(self.t, self.m, self.n):
                for i in range(self.t):
                    for j in range(self.t):
                        self.h_cov(i, j)

    # -- bookkeeping -----------------------------------------------------------

    @contextlib.contextmanager
    def track_access(self):
        """Record (kind, index) pairs for every operator access in the block."""
        previous = self._access_log
        self._access_log = log = []
        try:
            yield log
        finally:
            self._access_log = previous

    def _record(self, kind, idx):
        if self._access_log is not None:
            self._access_log.append((kind, idx))

    def _check_index(self, *idx):
        for i in idx:
            if not 0 <= i < self.t:
                raise InputError(f"training index {i} out of range [0, {self.t})")

    # -- operator accessors ------------------------------------------------------

    def f_slice(self, i: int) -> np.ndarray:
        """Structural factor of the mean Jacobian for location i, (M, n, T)."""
        self._check_index(i)
        self._record("f", i)
        if i not in self._f:
            self._f[i] = self._core.mean_jac_cols(i, self._core.Kinv)
        return self._f[i]

    def g_block(self, i: int, j: int) -> np.ndarray:
        """Structural factor of the mean Hessian for locations (i, j), (M, n, n, T)."""
        self._check_index(i, j)
        self._record("g", (i, j))
        if (i, j) not in self._g:
            self._g[(i, j)] = self._core.mean_hess_cols(i, j, self._core.Kinv)
        return self._g[(i, j)]

    def j_mean(self, i: int, y=None) -> np.ndarray:
        """Mean Jacobian for location i, (M, n): structural slice times measurements."""
        self._check_index(i)
        self._record("j_mean", i)
        if y is None or y is self._y:
            if i not in self._j_mean:
                self._j_mean[i] = np.einsum("mnt,t->mn", self.f_slice(i), self._y)
            return self._j_mean[i]
        return np.einsum("mnt,t->mn", self.f_slice(i), np.asarray(y, dtype=float))

    def h_mean(self, i: int, j: int, y=None) -> np.ndarray:
        """Mean Hessian for locations (i, j), (M, n, n)."""
        self._check_index(i, j)
        self._record("h_mean", (i, j))
        if y is None or y is self._y:
            if (i, j) not in self._h_mean:
                self._h_mean[(i, j)] = np.einsum("mdet,t->mde", self.g_block(i, j), self._y)
            return self._h_mean[(i, j)]
        return np.einsum("mdet,t->mde", self.g_block(i, j), np.asarray(y, dtype=float))

    def j_cov(self, i: int) -> np.ndarray:
        """Covariance Jacobian for location i, (M, M, n); measurement-free."""
        self._check_index(i)
        self._record("j_cov", i)
        if i not in self._j_cov:
            self._j_cov[i] = self._core.cov_jac(i)
        return self._j_cov[i]

    def h_cov(self, i: int, j: int) -> np.ndarray:
        """Covariance Hessian for locations (i, j), (M, M, n, n); measurement-free."""
        self._check_index(i, j)
        self._record("h_cov", (i, j))
        if (i, j) in self._h_cov:
            return self._h_cov[(i, j)]
        block = self._core.cov_hess(i, j)
        if stores_dense_hcov(self.t, self.m, self.n):
            self._h_cov[(i, j)] = block
        return block

    def matches(self, model: TrainedModel) -> bool:
        """Whether the operators were built for this model's instance geometry."""
        return (
            (model.t, model.m, model.n) == (self.t, self.m, self.n)
            and model.hp == self.hp
            and np.array_equal(model.train.locations, self.train_locations)
            and np.array_equal(model.test.locations, self.test_locations)
        )

    def gather(self, indices, with_curvature: bool):
        """Per-index derivative planes for the vectorized online update.

        Returns a dict with, for the K requested training indices: the
        test-side and train-side kernel-gradient planes with their inverse
        Gram products fused into one (K, M + 2T, n) stack, the projection
        columns, the restricted inverse Gram block, and (for second order)
        the same-point kernel curvature stack (K, M + T, n, n) plus the
        pairwise kernel values and separations. The stacks depend only on
        the index set, not on the perturbation, so they are memoized; only
        planes belonging to the requested indices are ever touched.
        """
        core = self._core
        for i in indices:
            self._check_index(i)
            self._record("slice", i)
        key = (tuple(indices), with_curvature)
        cached = self._gathered.get(key)
        if cached is not None:
            return cached
        idx = list(indices)
        out = {
            "planes": np.concatenate(
                [
                    np.stack([core.slices.eT[i] for i in idx], axis=0),
                    np.stack([core.slices.TT[i] for i in idx], axis=0),
                    np.stack([core.kd(i) for i in idx], axis=0),
                ],
                axis=1,
            ),  # (K, M + 2T, n)
            "p": core.P[:, idx],  # (M, K)
            "kinv_ss": core.Kinv[np.ix_(idx, idx)],  # (K, K)
        }
        if with_curvature:
            out["curvature"] = np.concatenate(
                [
                    np.stack([core.hbb_eT(i) for i in idx], axis=0),
                    np.stack([core.hbb_TT(i) for i in idx], axis=0),
                ],
                axis=1,
            )  # (K, M + T, n, n)
            X = self.train_locations[idx]
            diff = X[:, None, :] - X[None, :, :]  # (K, K, n)
            sq = np.einsum("ijn,ijn->ij", diff, diff)
            out["k_ss"] = self.hp.alpha**2 * np.exp(-0.5 * sq / self.hp.beta**2)
            out["diff_ss"] = diff
        self._gathered[key] = out
        return out


def precompute(model: TrainedModel, policy: str = "dense",
               budget: int = DEFAULT_DENSE_BUDGET,
               slices: KernelGradSlices | None = None) -> CorrectionOperators:
    """Run the offline phase: build correction operators for a trained model.

    The result is deterministic; two runs on the same model produce
    identical tensors regardless of policy.
    """
    core = DerivativeCore(model, slices)
    return CorrectionOperators(model, policy, core, budget=budget)


def save_operators(ops: CorrectionOperators, path):
    """Write densely materialized operators to a little-endian binary cache.

    Layout: header (magic, version u32, T, M, n, policy u8), then float64
    tensors in index order: mean Jacobians, mean Hessian blocks (row-major
    pairs), covariance Jacobians, structural F slices, structural G blocks,
    and covariance Hessian blocks when (T, M, n) admits dense storage.
    Round-trips are bit-exact.
    """
    if ops.policy != "dense":
        raise CacheError(
            "only densely materialized operators can be cached; "
            "precompute with storage policy 'dense'"
        )
    t, m, n = ops.t, ops.m, ops.n
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, t, m, n, _POLICY_CODES[ops.policy]))
        for i in range(t):
            fh.write(np.ascontiguousarray(ops.j_mean(i)).tobytes())
        for i in range(t):
            for j in range(t):
                fh.write(np.ascontiguousarray(ops.h_mean(i, j)).tobytes())
        for i in range(t):
            fh.write(np.ascontiguousarray(ops.j_cov(i)).tobytes())
        for i in range(t):
            fh.write(np.ascontiguousarray(ops.f_slice(i)).tobytes())
        for i in range(t):
            for j in range(t):
                fh.write(np.ascontiguousarray(ops.g_block(i, j)).tobytes())
        if stores_dense_hcov(t, m, n):
            for i in range(t):
                for j in range(t):
                    fh.write(np.ascontiguousarray(ops.h_cov(i, j)).tobytes())


def _read_tensor(fh, shape):
    count = int(np.prod(shape))
    raw = fh.read(count * 8)
    if len(raw) != count * 8:
        raise CacheError("operator cache is truncated")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def load_operators(path, model: TrainedModel) -> CorrectionOperators:
    """Load a cached operator set and bind it to the model it was built for.

    The model is required: covariance Hessian blocks that were too large to
    cache are rebuilt on demand from its factorization. The file records
    only the instance shape, so pairing the cache with the model it was
    built from (same locations and hyperparameters) is the caller's
    responsibility.
    """
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise CacheError("operator cache is truncated")
        magic, version, t, m, n, policy_code = _HEADER.unpack(head)
        if magic != CACHE_MAGIC:
            raise CacheError(f"bad cache magic {magic!r}")
        if version != CACHE_VERSION:
            raise CacheError(f"unsupported cache version {version}")
        if policy_code != _POLICY_CODES["dense"]:
            raise CacheError(f"unsupported cached policy code {policy_code}")
        if (t, m, n) != (model.t, model.m, model.n):
            raise ContractMismatchError(
                f"cache was built for (T={t}, M={m}, n={n}), "
                f"model is (T={model.t}, M={model.m}, n={model.n})"
            )
        core = DerivativeCore(model)
        ops = CorrectionOperators(model, "dense", core, materialize=False)
        for i in range(t):
            _read_tensor(fh, (m, n))  # mean Jacobians; recontracted below
        for i in range(t):
            for j in range(t):
                _read_tensor(fh, (m, n, n))  # mean Hessians; recontracted below
        for i in range(t):
            ops._j_cov[i] = _read_tensor(fh, (m, m, n))
        for i in range(t):
            ops._f[i] = _read_tensor(fh, (m, n, t))
        for i in range(t):
            for j in range(t):
                ops._g[(i, j)] = _read_tensor(fh, (m, n, n, t))
        if stores_dense_hcov(t, m, n):
            for i in range(t):
                for j in range(t):
                    ops._h_cov[(i, j)] = _read_tensor(fh, (m, m, n, n))
        if fh.read(1):
            raise CacheError("operator cache has trailing bytes")
    # Mean derivatives depend on the measurements, which the cache does not
    # carry: rebuild them from the measurement-free tensors against the
    # bound model. Bit-identical to the stored values when the measurements
    # are unchanged.
    for i in range(t):
        ops.j_mean(i)
        for j in range(t):
            ops.h_mean(i, j)
    return ops
