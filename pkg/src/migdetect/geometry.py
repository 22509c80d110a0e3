"""Squared distances and divergences on the HPD manifold.

Four measures are supported:

* ``AIRM`` -- affine-invariant Riemannian distance,
  ``||Log(X^{-1/2} Y X^{-1/2})||_F^2``.
* ``LEM`` -- Log-Euclidean distance, ``||Log X - Log Y||_F^2``.
* ``JBLD`` -- Jensen-Bregman LogDet divergence,
  ``ln det((X + Y)/2) - ln det(XY)/2``.
* ``SKLD`` -- symmetrized Kullback-Leibler divergence,
  ``tr(Y^{-1}X + X^{-1}Y - 2I)/2``.
"""

from enum import Enum

import numpy as np

from .exceptions import DomainError, ValidationError
from .matlin import _eigh, ctranspose, logdet_hpd, logm
from .validation import check_hermitian, check_same_order, check_spectrum


class GeometricMeasure(str, Enum):
    AIRM = "AIRM"
    LEM = "LEM"
    JBLD = "JBLD"
    SKLD = "SKLD"

    @classmethod
    def parse(cls, value):
        """Accept an enum member or a case-insensitive name."""
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValidationError(
                f"unknown geometric measure {value!r}; expected one of "
                f"{[m.value for m in cls]}") from None

    def __str__(self):
        return self.value


MEASURES = tuple(GeometricMeasure)


def _clamp(d):
    # round-off can push a zero distance slightly negative
    return np.where(d < 0.0, 0.0, d)


def _hpd_eig(X, name):
    w, U = _eigh(X)
    check_spectrum(w, name)
    return w, U


def sq_dist_airm(X, Y):
    """Eigenvalue form: sum of ``ln^2`` of the eigenvalues of X^{-1/2} Y X^{-1/2}."""
    w, U = _hpd_eig(X, "X")
    Xis = (U * (1.0 / np.sqrt(w))[..., None, :]) @ ctranspose(U)
    M = Xis @ Y @ Xis
    lam = np.linalg.eigvalsh(0.5 * (M + ctranspose(M)))
    check_spectrum(lam, "Y")
    return np.sum(np.log(lam) ** 2, axis=-1)


def sq_dist_lem(X, Y):
    D = logm(X, check=False) - logm(Y, check=False)
    return np.sum(np.abs(D) ** 2, axis=(-2, -1))


def sq_dist_jbld(X, Y):
    return logdet_hpd(0.5 * (X + Y)) - 0.5 * (logdet_hpd(X) + logdet_hpd(Y))


def sq_dist_skld(X, Y):
    n = X.shape[-1]
    try:
        t1 = np.trace(np.linalg.solve(Y, X), axis1=-2, axis2=-1)
        t2 = np.trace(np.linalg.solve(X, Y), axis1=-2, axis2=-1)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"singular matrix in SKLD: {exc}") from None
    return 0.5 * np.real(t1 + t2) - n


_DISPATCH = {
    GeometricMeasure.AIRM: sq_dist_airm,
    GeometricMeasure.LEM: sq_dist_lem,
    GeometricMeasure.JBLD: sq_dist_jbld,
    GeometricMeasure.SKLD: sq_dist_skld,
}


def sq_dist(measure, X, Y, check=True):
    """Squared distance (or divergence) between HPD matrices.

    Parameters
    ----------
    measure : GeometricMeasure or str
        One of AIRM, LEM, JBLD, SKLD.
    X, Y : ndarray, shape (..., n, n)
        HPD matrices; leading axes broadcast.
    check : bool, default=True
        Validate Hermitian symmetry and equal orders.

    Returns
    -------
    float or ndarray
        Nonnegative values; round-off negatives are clamped to zero.
    """
    measure = GeometricMeasure.parse(measure)
    if check:
        X = check_hermitian(X, "X")
        Y = check_hermitian(Y, "Y")
        check_same_order(X, Y)
    else:
        X = np.asarray(X)
        Y = np.asarray(Y)
    if check and measure in (GeometricMeasure.JBLD, GeometricMeasure.SKLD):
        # neither formula factorizes its inputs spectrally; report a domain
        # error instead of a Cholesky failure or a meaningless value
        _hpd_eig(X, "X")
        _hpd_eig(Y, "Y")
    d = _clamp(np.real(_DISPATCH[measure](X, Y)))
    return float(d) if np.ndim(d) == 0 else d
