"""Geometric means and variance of HPD matrix sets.

All solvers accept a set of shape ``(K, n, n)`` or a batch of sets of shape
``(..., K, n, n)`` and return the mean with shape ``(n, n)`` or
``(..., n, n)``. Iterative solvers track convergence per set so that each
result depends only on its own set, whatever the batch composition.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import NumericError, ValidationError
from .geometry import GeometricMeasure, sq_dist
from .matlin import _eigh, _from_spectrum, ctranspose, expm, hermitian_part, invm, logm
from .validation import HPD_RCOND, check_hpd_set, check_same_order, check_spectrum


@dataclass(frozen=True)
class MeanConfig:
    """Settings for the iterative mean solvers.

    Attributes
    ----------
    max_iterations : int
        Iteration cap for the JBLD fixed point and the AIRM solvers.
    residual_tolerance : float
        JBLD: relative fixed-point residual ``||G(R) - R||_F / ||R||_F``. AIRM: bound
        on ``||sum_k Log(R^{-1/2} R_k R^{-1/2})||_F / K``.
    airm_relaxation : float, optional
        Relaxation ``a`` of the log-domain AIRM iteration; must lie in
        ``(1 - 1/K, 1)``. Defaults to ``1 - 1/(2K)``.
    airm_method : {"karcher", "log_domain"}
        Solver for the AIRM mean.
    """

    max_iterations: int = 200
    residual_tolerance: float = 1e-10
    airm_relaxation: Optional[float] = None
    airm_method: str = "karcher"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be positive")
        if not self.residual_tolerance > 0:
            raise ValidationError("residual_tolerance must be positive")
        if self.airm_method not in ("karcher", "log_domain"):
            raise ValidationError(
                f"unknown airm_method {self.airm_method!r}")

    def relaxation(self, K):
        a = self.airm_relaxation
        if a is None:
            return 1.0 - 1.0 / (2 * K)
        if not (1.0 - 1.0 / K < a < 1.0):
            raise ValidationError(
                f"airm_relaxation {a} outside ({1 - 1 / K}, 1) for K={K}")
        return a


DEFAULT_CONFIG = MeanConfig()
ANDERSON_DEPTH = 5


def _frob(A):
    return np.linalg.norm(A, axis=(-2, -1))


def arithmetic_mean(matrices):
    return np.mean(np.asarray(matrices), axis=-3)


def mean_lem(S):
    """Closed-form Log-Euclidean mean ``exp(mean_k Log R_k)``."""
    return expm(np.mean(logm(S, check=False), axis=-3), check=False)


def mean_skld(S):
    """Closed-form SKLD mean, the HPD solution of the Riccati equation
    ``R A R = B`` with ``A = sum R_k^{-1}`` and ``B = sum R_k``."""
    A = np.sum(invm(S, check=False), axis=-3)
    B = np.sum(S, axis=-3)
    w, U = _eigh(A)
    check_spectrum(w, "sum of inverses")
    Ah = _from_spectrum(np.sqrt(w), U)
    Aih = _from_spectrum(1.0 / np.sqrt(w), U)
    mid = hermitian_part(Ah @ B @ Ah)
    wm, Um = _eigh(mid)
    return hermitian_part(Aih @ _from_spectrum(np.sqrt(wm), Um) @ Aih)


def _jbld_map(R, S):
    H = np.mean(np.linalg.inv(0.5 * (R[..., None, :, :] + S)), axis=-3)
    return hermitian_part(np.linalg.inv(H))


def _as_real(A):
    flat = A.reshape(A.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1)


def mean_jbld(S, config=DEFAULT_CONFIG, init=None):
    """JBLD mean, the fixed point of ``R -> (mean_k ((R + R_k)/2)^{-1})^{-1}``.

    The plain iteration contracts slowly when the members differ widely in
    power, so it is accelerated by Anderson mixing over the last
    ``ANDERSON_DEPTH`` iterates. An extrapolated iterate that is not HPD is
    replaced by the plain update. Stops once
    ``||G(R) - R||_F / ||R||_F < residual_tolerance``. Initialized at the
    arithmetic mean unless ``init`` is given.
    """
    S = np.asarray(S, dtype=complex)
    R0 = arithmetic_mean(S) if init is None else np.array(init, dtype=complex)
    batch = R0.shape[:-2]
    n = R0.shape[-1]
    P = int(np.prod(batch, dtype=int))
    Sf = S.reshape((P,) + S.shape[-3:])
    R = R0.reshape(P, n, n).copy()
    G = _jbld_map(R, Sf)
    res = _frob(G - R) / _frob(R)
    active = res >= config.residual_tolerance
    g_hist, f_hist = [], []
    for _ in range(config.max_iterations):
        if not active.any():
            return R.reshape(batch + (n, n))
        idx = np.nonzero(active)[0]
        Ra, Ga = R[idx], G[idx]
        g_hist.append(_as_real(Ga))
        f_hist.append(_as_real(Ga - Ra))
        g_hist = g_hist[-(ANDERSON_DEPTH + 1):]
        f_hist = f_hist[-(ANDERSON_DEPTH + 1):]
        Rn = Ga
        if len(f_hist) > 1:
            F = np.stack(f_hist, axis=1)
            dF = np.diff(F, axis=1)
            dG = np.diff(np.stack(g_hist, axis=1), axis=1)
            gram = dF @ np.swapaxes(dF, -1, -2)
            reg = 1e-12 * np.trace(gram, axis1=-2, axis2=-1) + 1e-300
            gram = gram + reg[:, None, None] * np.eye(gram.shape[-1])
            rhs = dF @ F[:, -1, :, None]
            gamma = np.linalg.solve(gram, rhs)[..., 0]
            x = g_hist[-1] - np.einsum("pm,pmd->pd", gamma, dG)
            d = n * n
            cand = hermitian_part((x[:, :d] + 1j * x[:, d:]).reshape(-1, n, n))
            w = np.linalg.eigvalsh(cand)
            ok = (np.all(np.isfinite(w), axis=-1)
                  & (w[:, 0] > HPD_RCOND * np.abs(w[:, -1])))
            Rn = np.where(ok[:, None, None], cand, Ga)
        Gn = _jbld_map(Rn, Sf[idx])
        R[idx], G[idx] = Rn, Gn
        res[idx] = _frob(Gn - Rn) / _frob(Rn)
        still = res[idx] >= config.residual_tolerance
        active[idx] = still
        # keep histories aligned with the sets that remain active
        g_hist = [h[still] for h in g_hist]
        f_hist = [h[still] for h in f_hist]
    if not active.any():
        return R.reshape(batch + (n, n))
    raise NumericError(
        "JBLD fixed point did not converge",
        iterations=config.max_iterations,
        residual=float(np.max(res)))


def _airm_terms(R, S):
    """Return ``R^{1/2}``, ``sum_k Log(R^{-1/2} R_k R^{-1/2})``, the cost and
    the step suggested by the whitened condition numbers."""
    w, U = _eigh(R)
    check_spectrum(w, "AIRM iterate")
    Rh = _from_spectrum(np.sqrt(w), U)
    Rih = _from_spectrum(1.0 / np.sqrt(w), U)
    M = Rih[..., None, :, :] @ S @ Rih[..., None, :, :]
    wm, Um = _eigh(hermitian_part(M))
    check_spectrum(wm, "whitened set")
    lw = np.log(wm)
    T = np.sum(_from_spectrum(lw, Um), axis=-3)
    cost = np.sum(lw ** 2, axis=(-2, -1))
    # step 2 / sum_k (c_k + 1)/(c_k - 1) ln c_k, which tends to 1/K as the
    # whitened members approach the identity
    lc = lw[..., -1] - lw[..., 0]
    c = np.exp(lc)
    safe = np.where(lc > 1e-8, lc, 1.0)
    term = np.where(lc > 1e-8, (c + 1.0) / np.expm1(safe) * safe, 2.0)
    step = 2.0 / np.sum(term, axis=-1)
    return Rh, T, cost, step


def mean_airm_karcher(S, config=DEFAULT_CONFIG, init=None):
    """Karcher mean by Riemannian descent.

    Iterates ``R <- R^{1/2} exp(eps * theta * sum_k Log(R^{-1/2} R_k R^{-1/2})) R^{1/2}``
    where ``theta`` adapts to the spread of the whitened set (``theta -> 1/K``
    near convergence) and ``eps`` starts at 1 and is halved whenever the cost
    fails to decrease. Initialized at the Log-Euclidean mean. Stops once
    ``||sum_k Log(...)||_F < residual_tolerance * K``.
    """
    K = S.shape[-3]
    R = mean_lem(S) if init is None else np.array(init, dtype=complex)
    batch = R.shape[:-2]
    eps = np.ones(batch)
    Rh, T, cost, theta = _airm_terms(R, S)
    res = _frob(T)
    done = res < config.residual_tolerance * K
    for _ in range(config.max_iterations):
        if np.all(done):
            return R
        todo = ~done
        idx = np.nonzero(todo) if batch else ...
        step = (eps[idx] * theta[idx])[..., None, None]
        Rc = hermitian_part(Rh[idx] @ expm(step * T[idx], check=False) @ Rh[idx])
        Rhc, Tc, costc, thc = _airm_terms(Rc, S[idx])
        accept = costc <= cost[idx] * (1.0 + 1e-13)
        if batch:
            sel = tuple(i[accept] for i in idx)
            R[sel], Rh[sel], T[sel], cost[sel], theta[sel] = (
                Rc[accept], Rhc[accept], Tc[accept], costc[accept],
                thc[accept])
            rej = tuple(i[~accept] for i in idx)
            eps[rej] *= 0.5
            done = _frob(T) < config.residual_tolerance * K
        else:
            if accept:
                R, Rh, T, cost, theta = Rc, Rhc, Tc, costc, thc
            else:
                eps = eps * 0.5
            done = _frob(T) < config.residual_tolerance * K
    if np.all(done):
        return R
    raise NumericError(
        "AIRM Karcher iteration did not converge",
        iterations=config.max_iterations,
        residual=float(np.max(_frob(T))) / K)


def mean_airm_log_domain(S, config=DEFAULT_CONFIG):
    """Relaxed fixed point carried out on ``X = Log R``.

    ``X <- a X + (a - 1) sum_{k=2}^K Log(exp(X/2) R_k^{-1} exp(X/2))``,
    started at the mean of the logarithms; returns ``exp(X)``.

    The sum deliberately starts at the second element. The iteration
    reproduces the scalar two-element geometric mean but does not satisfy
    the Karcher condition in general; :func:`mean_airm_karcher` is the
    default solver.
    """
    if S.ndim != 3:
        raise ValidationError("log-domain AIRM solver takes a single set")
    K = S.shape[0]
    a = config.relaxation(K)
    Sinv = invm(S, check=False)
    X = np.mean(logm(S, check=False), axis=0)
    ch = np.inf
    for _ in range(config.max_iterations):
        E = expm(0.5 * X, check=False)
        L = logm(hermitian_part(E @ Sinv[1:] @ E), check=False).sum(axis=0)
        Xn = hermitian_part(a * X + (a - 1.0) * L)
        ch = _frob(Xn - X) / max(_frob(X), 1.0)
        X = Xn
        if ch < config.residual_tolerance:
            return expm(X, check=False)
    raise NumericError(
        "log-domain AIRM iteration did not converge",
        iterations=config.max_iterations, residual=float(ch))


def geometric_mean(measure, matrices, config=None, init=None):
    """Geometric mean of a set of HPD matrices under ``measure``.

    Parameters
    ----------
    measure : GeometricMeasure or str
    matrices : ndarray, shape (..., K, n, n)
        Nonempty HPD set, or a batch of sets.
    config : MeanConfig, optional
    init : ndarray, shape (..., n, n), optional
        Starting point for the iterative solvers (JBLD, AIRM Karcher).

    Returns
    -------
    ndarray, shape (..., n, n)

    Raises
    ------
    ValidationError
        Empty set or non-HPD members.
    NumericError
        An iterative solver did not converge within ``max_iterations``.
    """
    measure = GeometricMeasure.parse(measure)
    config = DEFAULT_CONFIG if config is None else config
    S = check_hpd_set(matrices)
    if S.shape[-3] == 1:
        return S[..., 0, :, :].copy()
    if measure is GeometricMeasure.LEM:
        return mean_lem(S)
    if measure is GeometricMeasure.SKLD:
        return mean_skld(S)
    if measure is GeometricMeasure.JBLD:
        return mean_jbld(S, config, init)
    if config.airm_method == "log_domain":
        return mean_airm_log_domain(S, config)
    return mean_airm_karcher(S, config, init)


def variance(measure, matrices, mean):
    """Mean squared distance of the set members to ``mean``."""
    S = check_hpd_set(matrices)
    mean = np.asarray(mean, dtype=complex)
    check_same_order(S, mean)
    d = sq_dist(measure, S, mean[..., None, :, :])
    return np.mean(d, axis=-1)


def karcher_residual(matrices, mean):
    """``||sum_k Log(R^{-1/2} R_k R^{-1/2})||_F`` at ``mean``."""
    _, T, _, _ = _airm_terms(np.asarray(mean, dtype=complex),
                          np.asarray(matrices, dtype=complex))
    return _frob(T)


def jbld_fixed_point_map(matrices, mean):
    """Right-hand side of the JBLD fixed point evaluated at ``mean``."""
    return _jbld_map(np.asarray(mean, dtype=complex),
                     np.asarray(matrices, dtype=complex))


__all__ = [
    "MeanConfig",
    "arithmetic_mean",
    "geometric_mean",
    "variance",
    "mean_lem",
    "mean_skld",
    "mean_jbld",
    "mean_airm_karcher",
    "mean_airm_log_domain",
    "karcher_residual",
    "jbld_fixed_point_map",
]
