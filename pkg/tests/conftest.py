import os

# Pin BLAS threading before numpy loads: keeps results byte-reproducible
# across machines and timing stable under CPU quotas.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

from gpcorrect import Hyperparams, TestGrid, TrainingSet, train
from gpcorrect.derivatives import DerivativeCore, build_kernel_grad_slices


def make_instance(seed, t=None, n=None, m=None, beta=None, sigma_y=None):
    """Random small instance with conditioning suited to tight tolerances."""
    rng = np.random.default_rng(seed)
    t = t if t is not None else int(rng.integers(1, 7))
    n = n if n is not None else int(rng.integers(1, 4))
    m = m if m is not None else int(rng.integers(1, 6))
    X = rng.uniform(0.0, 1.0, (t, n))
    Y = rng.standard_normal(t)
    Xe = rng.uniform(0.0, 1.0, (m, n))
    hp = Hyperparams(
        1.0,
        beta if beta is not None else float(rng.uniform(0.25, 0.6)),
        sigma_y if sigma_y is not None else float(rng.uniform(0.05, 0.3)),
    )
    model = train(TrainingSet(X, Y), TestGrid(Xe), hp)
    return model, rng


def make_instance_with_core(seed, **kwargs):
    model, rng = make_instance(seed, **kwargs)
    slices = build_kernel_grad_slices(model)
    core = DerivativeCore(model, slices)
    return model, slices, core, rng


@pytest.fixture
def model_1d_paper():
    """The 1D reproduction setup: 11 uniform points, unit-amplitude sine."""
    X = np.linspace(0.0, 1.0, 11)[:, None]
    Y = 2.0 + np.sin(2.0 * np.pi * X[:, 0])
    Xe = np.linspace(0.0, 1.0, 100)[:, None]
    return train(TrainingSet(X, Y), TestGrid(Xe), Hyperparams(1.0, 0.1, 1e-2))
