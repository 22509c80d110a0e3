"""Steering vectors and HPD observations built from raw snapshots."""

import numpy as np

from .exceptions import DegenerateInputError, ValidationError
from .validation import as_complex


def steering(n, doppler):
    """Unit-norm steering vector ``exp(-i 2 pi f k) / sqrt(n)``, k = 0..n-1."""
    if int(n) != n or n < 1:
        raise ValidationError(f"steering length must be >= 1, got {n}")
    k = np.arange(int(n))
    return np.exp(-2j * np.pi * doppler * k) / np.sqrt(n)


def lag_correlations(x):
    """Ergodic lag estimates ``r_l = (1/N) sum_i x_i conj(x_{i+l})``.

    Accepts a snapshot of shape ``(N,)`` or a stack ``(..., N)``.
    """
    x = as_complex(x)
    N = x.shape[-1]
    r = np.empty_like(x)
    for lag in range(N):
        r[..., lag] = np.sum(x[..., :N - lag] * np.conj(x[..., lag:]),
                             axis=-1)
    return r / N


def build_hpd_observation(x):
    """Diagonally loaded HPD observation ``r r^H + tr(r r^H) I``.

    Parameters
    ----------
    x : array-like, shape (..., N)
        Complex snapshot(s).

    Returns
    -------
    ndarray, shape (..., N, N)

    Raises
    ------
    DegenerateInputError
        If a snapshot is identically zero.
    """
    x = as_complex(x)
    if x.ndim < 1 or x.shape[-1] < 1:
        raise ValidationError("snapshot must have at least one entry")
    r = lag_correlations(x)
    power = np.sum(np.abs(r) ** 2, axis=-1)
    if np.any(power == 0):
        raise DegenerateInputError("zero snapshot: loading term vanishes")
    N = x.shape[-1]
    R = r[..., :, None] * np.conj(r[..., None, :])
    return R + power[..., None, None] * np.eye(N)
