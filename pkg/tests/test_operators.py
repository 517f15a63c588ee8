import numpy as np
import pytest

from gpcorrect import (
    BudgetError,
    CacheError,
    ContractMismatchError,
    TestGrid,
    TrainingSet,
    build_structural_tensors,
    load_operators,
    mean_hessian,
    mean_jacobian,
    precompute,
    save_operators,
    train,
)
from gpcorrect.derivatives import DerivativeCore, build_kernel_grad_slices
from gpcorrect.operators import stores_dense_hcov

from conftest import make_instance, make_instance_with_core


def test_structural_contraction_reproduces_jacobian():
    model, slices, core, _ = make_instance_with_core(0, t=4, n=2, m=3)
    F, G = build_structural_tensors(model, slices, core=core)
    Y = model.train.measurements
    for i in range(model.t):
        direct = mean_jacobian(model, slices, i)
        contracted = np.einsum("mnt,t->mn", F[i], Y)
        assert np.allclose(contracted, direct, rtol=1e-12, atol=1e-13)
        for j in range(model.t):
            direct_h = mean_hessian(model, slices, i, j, core=core)
            contracted_h = np.einsum("mdet,t->mde", G[(i, j)], Y)
            assert np.allclose(contracted_h, direct_h, rtol=1e-12, atol=1e-12)


def test_structural_basis_vector_contraction():
    # contracting with a standard basis vector equals the Jacobian of a
    # model whose measurement vector is that basis vector
    model, slices, core, _ = make_instance_with_core(1, t=3, n=1, m=2)
    F, G = build_structural_tensors(model, slices, core=core)
    for k in range(model.t):
        basis = np.zeros(model.t)
        basis[k] = 1.0
        unit = train(TrainingSet(model.train.locations, basis), model.test, model.hp)
        slices_u = build_kernel_grad_slices(unit)
        for i in range(model.t):
            assert np.allclose(
                F[i][:, :, k], mean_jacobian(unit, slices_u, i), rtol=1e-12, atol=1e-13
            )
        assert np.allclose(
            np.einsum("mdet,t->mde", G[(0, 1)], np.zeros(model.t)), 0.0, atol=0.0
        )


def test_structural_budget_error():
    model, slices, _, _ = make_instance_with_core(2, t=4, n=2, m=3)
    with pytest.raises(BudgetError, match="lazy"):
        build_structural_tensors(model, slices, budget=10)


def test_precompute_deterministic():
    model, _ = make_instance(3, t=3, n=2, m=2)
    a = precompute(model, "dense")
    b = precompute(model, "dense")
    for i in range(model.t):
        assert np.array_equal(a.f_slice(i), b.f_slice(i))
        assert np.array_equal(a.j_mean(i), b.j_mean(i))
        assert np.array_equal(a.j_cov(i), b.j_cov(i))
        for j in range(model.t):
            assert np.array_equal(a.g_block(i, j), b.g_block(i, j))
            assert np.array_equal(a.h_mean(i, j), b.h_mean(i, j))
            assert np.array_equal(a.h_cov(i, j), b.h_cov(i, j))


def test_lazy_blocks_bit_identical_to_dense():
    model, _ = make_instance(4, t=4, n=1, m=3)
    dense = precompute(model, "dense")
    lazy = precompute(model, "lazy")
    for i in range(model.t):
        assert np.array_equal(dense.j_mean(i), lazy.j_mean(i))
        assert np.array_equal(dense.j_cov(i), lazy.j_cov(i))
        for j in range(model.t):
            assert np.array_equal(dense.h_mean(i, j), lazy.h_mean(i, j))
            assert np.array_equal(dense.h_cov(i, j), lazy.h_cov(i, j))


def test_dense_budget_error():
    model, _ = make_instance(5, t=4, n=2, m=3)  # 4*3*2*4 = 96 scalars per family
    with pytest.raises(BudgetError, match="lazy"):
        precompute(model, "dense", budget=95)
    precompute(model, "dense", budget=96)  # at the budget is allowed


def test_hcov_dense_rule():
    assert stores_dense_hcov(5, 50, 2)
    assert not stores_dense_hcov(5, 51, 2)  # over the test-point cap
    assert not stores_dense_hcov(500, 40, 3)  # over the scalar budget


def test_mean_accessors_accept_fresh_measurements():
    model, _ = make_instance(6, t=3, n=1, m=2)
    ops = precompute(model, "dense")
    rng = np.random.default_rng(0)
    y_new = rng.standard_normal(model.t)
    expected = np.einsum("mnt,t->mn", ops.f_slice(1), y_new)
    assert np.array_equal(ops.j_mean(1, y_new), expected)


def test_operator_model_mismatch_detected():
    model_a, _ = make_instance(7, t=3, n=1, m=2)
    model_b, _ = make_instance(8, t=3, n=1, m=2)
    ops = precompute(model_a, "dense")
    assert ops.matches(model_a)
    assert not ops.matches(model_b)


def test_cache_round_trip_bit_exact(tmp_path):
    model, _ = make_instance(9, t=3, n=2, m=2)
    ops = precompute(model, "dense")
    path = tmp_path / "ops.gprc"
    save_operators(ops, path)
    loaded = load_operators(path, model)
    for i in range(model.t):
        assert np.array_equal(loaded.f_slice(i), ops.f_slice(i))
        assert np.array_equal(loaded.j_mean(i), ops.j_mean(i))
        assert np.array_equal(loaded.j_cov(i), ops.j_cov(i))
        for j in range(model.t):
            assert np.array_equal(loaded.g_block(i, j), ops.g_block(i, j))
            assert np.array_equal(loaded.h_mean(i, j), ops.h_mean(i, j))
            assert np.array_equal(loaded.h_cov(i, j), ops.h_cov(i, j))
    # byte-for-byte stability through a save/load/save cycle
    path2 = tmp_path / "ops2.gprc"
    save_operators(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_cache_requires_dense(tmp_path):
    model, _ = make_instance(10, t=2, n=1, m=2)
    lazy = precompute(model, "lazy")
    with pytest.raises(CacheError, match="dense"):
        save_operators(lazy, tmp_path / "ops.gprc")


def test_cache_header_validation(tmp_path):
    model, _ = make_instance(11, t=2, n=1, m=2)
    ops = precompute(model, "dense")
    path = tmp_path / "ops.gprc"
    save_operators(ops, path)

    bad_magic = bytearray(path.read_bytes())
    bad_magic[:4] = b"NOPE"
    bad_path = tmp_path / "bad.gprc"
    bad_path.write_bytes(bytes(bad_magic))
    with pytest.raises(CacheError, match="magic"):
        load_operators(bad_path, model)

    truncated = tmp_path / "short.gprc"
    truncated.write_bytes(path.read_bytes()[:40])
    with pytest.raises(CacheError, match="truncated"):
        load_operators(truncated, model)

    other, _ = make_instance(12, t=4, n=1, m=2)
    with pytest.raises(ContractMismatchError):
        load_operators(path, other)


def test_cache_recontracts_mean_blocks_for_new_measurements(tmp_path):
    model, _ = make_instance(13, t=3, n=1, m=2)
    ops = precompute(model, "dense")
    path = tmp_path / "ops.gprc"
    save_operators(ops, path)
    fresh = train(
        TrainingSet(model.train.locations, 2.0 * model.train.measurements),
        model.test, model.hp,
    )
    loaded = load_operators(path, fresh)
    for i in range(model.t):
        assert np.array_equal(loaded.j_mean(i), 2.0 * ops.j_mean(i))


def test_access_tracking_records_indices():
    model, _ = make_instance(14, t=5, n=1, m=3)
    ops = precompute(model, "lazy")
    with ops.track_access() as log:
        ops.j_mean(2)
        ops.h_cov(1, 3)
    kinds = {entry[0] for entry in log}
    assert "j_mean" in kinds and "h_cov" in kinds
    assert ("j_mean", 2) in log and ("h_cov", (1, 3)) in log
