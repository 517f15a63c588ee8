"""Scalar fields sampled by the experiments."""

from __future__ import annotations

import numpy as np

from ..errors import InputError


def field_sine_1d(x):
    """2 + sin(2 pi x) on the unit interval."""
    return 2.0 + np.sin(2.0 * np.pi * x[..., 0])


def field_sine_cosine_2d(x):
    """sin(2 pi x) cos(2 pi y) on the unit square."""
    return np.sin(2.0 * np.pi * x[..., 0]) * np.cos(2.0 * np.pi * x[..., 1])


def field_sine_cosine_2d_swapped(x):
    """Coordinate-swapped companion of the 2D field, for symmetry checks."""
    return np.sin(2.0 * np.pi * x[..., 1]) * np.cos(2.0 * np.pi * x[..., 0])


def field_smooth_nd(x):
    """Mean of per-coordinate sines; smooth test field in any dimension."""
    return 2.0 + np.mean(np.sin(2.0 * np.pi * x), axis=-1)


FIELDS = {
    "f1": (field_sine_1d, 1),
    "f2": (field_sine_cosine_2d, 2),
    "f2_swap": (field_sine_cosine_2d_swapped, 2),
    "smooth_nd": (field_smooth_nd, 0),  # any dimension
}


def get_field(field_id: str, dims: int):
    """Resolve a field id, checking dimensional compatibility."""
    if field_id not in FIELDS:
        raise InputError(f"unknown field {field_id!r}; choose from {sorted(FIELDS)}")
    fn, want = FIELDS[field_id]
    if want and want != dims:
        raise InputError(f"field {field_id!r} needs {want} dimensions, config has {dims}")
    return fn
