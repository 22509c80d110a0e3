"""Hermitian linear-algebra kernel.

Every function accepts a single matrix of shape ``(n, n)`` or a stack of
shape ``(..., n, n)`` and broadcasts over the leading axes.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericError, ValidationError
from .validation import (
    check_hermitian,
    check_same_order,
    check_spectrum,
)

# relative gap below which two eigenvalues are treated as equal in
# divided differences
_DD_GAP = 1e-12


def ctranspose(A):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(A, -1, -2))


def hermitian_part(A):
    """Return ``(A + A^H) / 2``."""
    return 0.5 * (A + ctranspose(A))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigen-decomposition ``H = basis @ diag(eigenvalues) @ basis^H``.

    Eigenvalues are sorted in descending order along the last axis.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray

    def reconstruct(self):
        U = self.basis
        return (U * self.eigenvalues[..., None, :]) @ ctranspose(U)


def _eigh(H):
    try:
        return np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Hermitian eigensolver did not converge: {exc}")


def eig_hermitian(H):
    """Spectral decomposition of a Hermitian matrix (or stack).

    Raises
    ------
    ValidationError
        If ``H`` deviates from Hermitian beyond relative 1e-12.
    NumericError
        If the LAPACK eigensolver fails to converge.
    """
    H = check_hermitian(H)
    w, U = _eigh(H)
    return SpectralDecomposition(w[..., ::-1].copy(), U[..., ::-1].copy())


_SPECTRAL_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "inv_sqrt": lambda w: 1.0 / np.sqrt(w),
    "inv": lambda w: 1.0 / w,
}


def _from_spectrum(w, U):
    out = (U * w[..., None, :]) @ ctranspose(U)
    return hermitian_part(out)


def apply_spectral(P, func, check=True):
    """Apply a scalar function through the spectrum: ``U f(L) U^H``.

    Parameters
    ----------
    P : ndarray, shape (..., n, n)
        HPD matrix. For ``func="exp"`` any Hermitian matrix is accepted.
    func : {"exp", "log", "sqrt", "inv_sqrt", "inv"}
        Scalar function applied to the eigenvalues.
    check : bool, default=True
        Validate Hermitian symmetry before factorizing. The positivity check
        on the eigenvalues is always performed for functions other than exp.

    Returns
    -------
    ndarray, shape (..., n, n)
    """
    try:
        f = _SPECTRAL_FUNCS[func]
    except KeyError:
        raise ValidationError(
            f"unknown spectral function {func!r}; "
            f"expected one of {sorted(_SPECTRAL_FUNCS)}") from None
    P = check_hermitian(P) if check else np.asarray(P)
    w, U = _eigh(P)
    if func != "exp":
        check_spectrum(w)
    return _from_spectrum(f(w), U)


def logm(P, check=True):
    """Principal matrix logarithm of an HPD matrix."""
    return apply_spectral(P, "log", check)


def expm(H, check=True):
    """Matrix exponential of a Hermitian matrix."""
    return apply_spectral(H, "exp", check)


def sqrtm(P, check=True):
    return apply_spectral(P, "sqrt", check)


def invsqrtm(P, check=True):
    return apply_spectral(P, "inv_sqrt", check)


def invm(P, check=True):
    return apply_spectral(P, "inv", check)


def chol_hpd(P):
    """Lower Cholesky factor ``L`` with ``L L^H = P`` and positive diagonal.

    Raises
    ------
    NumericError
        If positive-definiteness is lost during factorization.
    """
    P = check_hermitian(P)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Cholesky factorization failed: {exc}")


def logdet_hpd(P):
    """``ln det P`` from the Cholesky factor (no overflow for large orders)."""
    L = chol_hpd(P)
    d = np.real(np.diagonal(L, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(d), axis=-1)


def log_divided_differences(w):
    """First divided differences of ``ln`` on an eigenvalue vector.

    Returns the matrix ``(ln w_i - ln w_j) / (w_i - w_j)``, replaced by
    ``1 / w_i`` where ``|w_i - w_j| < 1e-12 * max(w_i, w_j)``.
    """
    wi = w[..., :, None]
    wj = w[..., None, :]
    diff = wi - wj
    close = np.abs(diff) < _DD_GAP * np.maximum(wi, wj)
    safe = np.where(close, 1.0, diff)
    # log1p keeps full relative accuracy for nearby but distinct eigenvalues
    dd = np.log1p(safe / wj) / safe
    return np.where(close, 1.0 / wi, dd)


def dlog_kernel(V, L):
    """Frechet derivative of the matrix logarithm at ``V`` applied to ``L``.

    Evaluates ``int_0^1 [(V - I)s + I]^{-1} L [(V - I)s + I]^{-1} ds`` in
    closed form: in the eigenbasis of ``V`` the entries of ``L`` are scaled by
    the divided differences of ``ln``.

    Parameters
    ----------
    V : ndarray, shape (..., n, n)
        HPD base point.
    L : ndarray, shape (..., n, n)
        Hermitian direction.
    """
    V = check_hermitian(V, "V")
    L = check_hermitian(L, "L")
    check_same_order(V, L)
    w, U = _eigh(V)
    check_spectrum(w, "V")
    return _dlog_eig(w, U, L)


def _dlog_eig(w, U, L):
    Uh = ctranspose(U)
    Lt = Uh @ L @ U
    return hermitian_part(U @ (log_divided_differences(w) * Lt) @ Uh)
