"""Input validation helpers shared by the estimators and kernels."""

import numpy as np

from .exceptions import DomainError, ValidationError

HERMITIAN_RTOL = 1e-12
HPD_RCOND = 1e-12


def as_complex(A):
    """Return ``A`` as a complex128 ndarray, rejecting non-finite entries."""
    A = np.asarray(A, dtype=np.complex128)
    if not np.all(np.isfinite(A)):
        raise ValidationError("input contains non-finite entries")
    return A


def check_square(A, name="matrix"):
    A = as_complex(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValidationError(
            f"{name} must be square (..., n, n), got shape {A.shape}")
    return A


def check_hermitian(A, name="matrix", rtol=HERMITIAN_RTOL):
    """Check that ``A`` (or every matrix of a stack) is Hermitian.

    The deviation ``||A - A^H||_F`` must not exceed ``rtol * ||A||_F``.
    Returns the validated complex array.
    """
    A = check_square(A, name)
    dev = np.linalg.norm(A - A.conj().swapaxes(-1, -2), axis=(-2, -1))
    scale = np.linalg.norm(A, axis=(-2, -1))
    bad = dev > rtol * np.maximum(scale, np.finfo(float).tiny)
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise ValidationError(
            f"{name} is not Hermitian (relative deviation "
            f"{float(np.atleast_1d(dev / scale)[tuple(idx)]):.2e} at index "
            f"{tuple(int(i) for i in idx)})")
    return A


def check_spectrum(w, name="matrix"):
    """Raise :class:`DomainError` unless every eigenvalue row is HPD.

    ``w`` holds eigenvalues along the last axis. The smallest eigenvalue must
    exceed ``1e-12`` times the largest.
    """
    lo = w.min(axis=-1)
    hi = w.max(axis=-1)
    bad = ~(lo > HPD_RCOND * np.maximum(hi, 0.0)) | ~(hi > 0)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(np.atleast_1d(bad))[0])
        val = float(np.atleast_1d(lo)[idx])
        where = f" at index {idx}" if np.ndim(lo) else ""
        raise DomainError(
            f"{name} is not positive definite{where}: "
            f"eigenvalue {val:.6e}")


def check_hpd(A, name="matrix"):
    """Validate a Hermitian positive-definite matrix or stack."""
    A = check_hermitian(A, name)
    check_spectrum(np.linalg.eigvalsh(A), name)
    return A


def check_same_order(*arrays):
    orders = {a.shape[-1] for a in arrays}
    if len(orders) != 1:
        raise ValidationError(f"matrix orders differ: {sorted(orders)}")
    return orders.pop()


def check_hpd_set(matrices, name="set"):
    """Validate a nonempty stack of HPD matrices of shape (..., K, n, n)."""
    S = check_hpd(matrices, name)
    if S.ndim < 3:
        raise ValidationError(
            f"{name} must be a stack of matrices (..., K, n, n), "
            f"got shape {S.shape}")
    if S.shape[-3] == 0:
        raise ValidationError(f"{name} is empty")
    return S
