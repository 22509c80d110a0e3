"""Unsupervised discriminative projection on the complex Stiefel manifold.

A projection ``W`` (``n x m`` with orthonormal columns) maps an HPD matrix
``R`` to ``W^H R W``. It is learned by maximizing the variance of the
compressed training set around its geometric mean, alternating

1. Riemannian gradient descent on ``psi(W) = -mean_i d^2(W^H R_i W, Z)``
   with ``Z`` held fixed, and
2. re-solving ``Z`` as the geometric mean of the compressed set.

The Euclidean gradients are the exact real gradients of ``psi`` with respect
to the inner product ``Re tr(X^H Y)``.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import NumericError, ValidationError
from .geometry import GeometricMeasure, sq_dist
from .matlin import _dlog_eig, _eigh, _from_spectrum, ctranspose, hermitian_part
from .means import MeanConfig, geometric_mean
from .validation import as_complex, check_hpd, check_hpd_set

ORTHONORMAL_ATOL = 1e-10
_MAX_HALVINGS = 60


@dataclass(frozen=True)
class LearnerConfig:
    outer_iterations: int = 50
    rgd_iterations: int = 20
    step_size: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    tol: float = 1e-8
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.outer_iterations < 1 or self.rgd_iterations < 1:
            raise ValidationError("iteration counts must be positive")
        if not self.step_size > 0:
            raise ValidationError("step_size must be positive")
        if not 0 < self.armijo_shrink < 1:
            raise ValidationError("armijo_shrink must lie in (0, 1)")
        if not 0 < self.armijo_slope < 1:
            raise ValidationError("armijo_slope must lie in (0, 1)")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")


@dataclass
class LearnedProjection:
    """Result of :func:`learn_projection`.

    ``objective_trace`` holds the variance at the re-solved mean after each
    outer iteration (entry 0 is the initialization). ``psi_traces`` holds, per
    outer iteration, the value of ``psi`` after every accepted RGD step.
    """

    W: np.ndarray
    measure: GeometricMeasure
    variance: float
    objective_trace: List[float]
    psi_traces: List[List[float]] = field(default_factory=list)
    grad_norms: List[float] = field(default_factory=list)
    max_orthonormality_defect: float = 0.0
    zero_variance: bool = False
    converged: bool = False


def orthonormality_defect(W):
    m = W.shape[-1]
    return float(np.linalg.norm(ctranspose(W) @ W - np.eye(m)))


def check_stiefel(W, atol=ORTHONORMAL_ATOL):
    W = as_complex(W)
    if W.ndim != 2 or W.shape[1] > W.shape[0] or W.shape[1] < 1:
        raise ValidationError(
            f"projection must be n x m with 1 <= m <= n, got {W.shape}")
    defect = orthonormality_defect(W)
    if defect > atol:
        raise ValidationError(
            f"projection columns are not orthonormal (defect {defect:.2e})")
    return W


def _qr_positive(A):
    Q, R = np.linalg.qr(A)
    d = np.diagonal(R)
    mag = np.abs(d)
    if mag.min() <= 1e-12 * max(mag.max(), np.finfo(float).tiny):
        raise NumericError("rank-deficient matrix in QR retraction")
    return Q * (d / mag)[None, :].conj()


def random_stiefel(n, m, rng):
    """Thin QR of a complex Gaussian ``n x m`` matrix."""
    A = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    return _qr_positive(A)


def compress(W, R):
    """``W^H R W`` for a single matrix or a stack."""
    W = as_complex(W)
    R = as_complex(R)
    if R.shape[-1] != W.shape[0] or R.shape[-2] != W.shape[0]:
        raise ValidationError(
            f"matrix order {R.shape[-1]} does not match projection "
            f"ambient dimension {W.shape[0]}")
    return hermitian_part(ctranspose(W) @ R @ W)


def sym(A):
    return hermitian_part(A)


def riem_grad(W, G):
    """Project a Euclidean gradient onto the tangent space at ``W``:
    ``G - W sym(W^H G)``."""
    W = as_complex(W)
    G = as_complex(G)
    if G.shape != W.shape:
        raise ValidationError(
            f"gradient shape {G.shape} does not match W shape {W.shape}")
    return G - W @ sym(ctranspose(W) @ G)


def retract(W, D, step):
    """QR retraction of ``W + step * D`` back onto the Stiefel manifold.

    The triangular factor is normalized to a positive real diagonal, so the
    retraction is a smooth map agreeing with the exponential map to first
    order. ``step == 0`` returns ``W`` unchanged.
    """
    W = as_complex(W)
    D = as_complex(D)
    if D.shape != W.shape:
        raise ValidationError(
            f"direction shape {D.shape} does not match W shape {W.shape}")
    if step == 0:
        return W.copy()
    return _qr_positive(W + step * D)


def _check_problem(W, data, Z):
    W = as_complex(W)
    data = as_complex(data)
    Z = as_complex(Z)
    if data.ndim != 3:
        raise ValidationError("data must have shape (n_samples, n, n)")
    if data.shape[-1] != W.shape[0]:
        raise ValidationError(
            f"data order {data.shape[-1]} does not match W rows {W.shape[0]}")
    if Z.shape != (W.shape[1], W.shape[1]):
        raise ValidationError(
            f"mean must be {W.shape[1]}x{W.shape[1]}, got {Z.shape}")
    return W, data, Z


def psi_loss(measure, W, data, Z):
    """Negated mean squared distance between ``W^H R_i W`` and ``Z``."""
    W, data, Z = _check_problem(W, data, Z)
    V = compress(W, data)
    return -float(np.mean(sq_dist(measure, V, Z, check=False)))


def _hpd_compressed(V):
    w, U = _eigh(V)
    lo = w[:, 0]
    bad = ~(lo > 1e-12 * w[:, -1])
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericError(
            f"compressed matrix {i} is numerically singular "
            f"(smallest eigenvalue {lo[i]:.3e})")
    return w, U


def euclid_grad(measure, W, data, Z):
    """Euclidean gradient of ``psi`` with respect to ``W``.

    Per measure, with ``V_i = W^H R_i W`` and ``J + K`` data matrices:

    * LEM:  ``-4/(J+K) sum R_i W (V^{-1} Log V - D Log_V[Log Z])``
    * AIRM: ``4/(J+K) sum R_i W V^{-1} Log(Z V^{-1})``
    * JBLD: ``-1/(J+K) sum R_i W (2 (V + Z)^{-1} - V^{-1})``
    * SKLD: ``-1/(J+K) sum R_i W (Z^{-1} - V^{-1} Z V^{-1})``

    where ``D Log_V`` is the Frechet derivative of the logarithm at ``V``
    (:func:`migdetect.matlin.dlog_kernel`).

    Raises
    ------
    NumericError
        If a compressed matrix ``V_i`` is numerically singular.
    """
    measure = GeometricMeasure.parse(measure)
    W, data, Z = _check_problem(W, data, Z)
    n_samples = data.shape[0]
    RW = data @ W
    V = hermitian_part(ctranspose(W) @ RW)
    w, U = _hpd_compressed(V)
    Uh = ctranspose(U)

    if measure is GeometricMeasure.LEM:
        wz, Uz = _eigh(Z)
        logZ = _from_spectrum(np.log(wz), Uz)
        VinvLogV = _from_spectrum(np.log(w) / w, U)
        S = VinvLogV - _dlog_eig(w, U, np.broadcast_to(logZ, V.shape))
        coef = -4.0
    elif measure is GeometricMeasure.AIRM:
        # V^{-1} Log(Z V^{-1}) = V^{-1/2} Log(V^{-1/2} Z V^{-1/2}) V^{-1/2}
        Vis = _from_spectrum(1.0 / np.sqrt(w), U)
        M = hermitian_part(Vis @ Z @ Vis)
        wm, Um = _eigh(M)
        S = Vis @ _from_spectrum(np.log(wm), Um) @ Vis
        coef = 4.0
    elif measure is GeometricMeasure.JBLD:
        Vinv = (U / w[:, None, :]) @ Uh
        S = 2.0 * np.linalg.inv(V + Z) - Vinv
        coef = -1.0
    else:
        Vinv = (U / w[:, None, :]) @ Uh
        S = np.linalg.inv(Z) - Vinv @ Z @ Vinv
        coef = -1.0
    return coef / n_samples * np.sum(RW @ S, axis=0)


@dataclass
class _Objective:
    measure: GeometricMeasure
    data: np.ndarray
    mean_config: MeanConfig

    def mean(self, W, init=None):
        return geometric_mean(self.measure, compress(W, self.data),
                              self.mean_config, init)

    def psi(self, W, Z):
        V = compress(W, self.data)
        # all four measures are symmetric; the single matrix goes first so
        # AIRM factors it once
        return -float(np.mean(sq_dist(self.measure, Z, V, check=False)))

    def grad(self, W, Z):
        return riem_grad(W, euclid_grad(self.measure, W, self.data, Z))


def _armijo(obj, W, Z, D, g2, psi0, eta, cfg):
    """Backtrack along ``-D``; return (W, psi, eta) or None."""
    for _ in range(_MAX_HALVINGS):
        Wc = retract(W, -D, eta)
        pc = obj.psi(Wc, Z)
        if pc <= psi0 - cfg.armijo_slope * eta * g2:
            return Wc, pc, eta
        eta *= cfg.armijo_shrink
    return None


def _negligible(g2, value):
    return np.sqrt(g2) <= 1e-9 * (1.0 + abs(value))


def learn_projection(measure, data, m, cfg=None, mean_config=None):
    """Learn a variance-maximizing Stiefel projection.

    Parameters
    ----------
    measure : GeometricMeasure or str
    data : ndarray, shape (n_samples, n, n)
        Training HPD matrices (clutter-only and target-bearing together).
    m : int
        Target dimension, ``1 <= m <= n``.
    cfg : LearnerConfig, optional
    mean_config : MeanConfig, optional
        Settings for the inner geometric-mean solves.

    Returns
    -------
    LearnedProjection
    """
    measure = GeometricMeasure.parse(measure)
    cfg = LearnerConfig() if cfg is None else cfg
    mean_config = MeanConfig() if mean_config is None else mean_config
    data = check_hpd_set(data, "training data")
    if data.ndim != 3:
        raise ValidationError("data must have shape (n_samples, n, n)")
    n = data.shape[-1]
    if not 1 <= m <= n:
        raise ValidationError(f"target dimension {m} outside [1, {n}]")

    rng = np.random.default_rng(cfg.seed)
    W = random_stiefel(n, m, rng)
    obj = _Objective(measure, data, mean_config)

    scale = np.linalg.norm(data[0])
    if np.all(np.linalg.norm(data - data[0], axis=(-2, -1)) <= 1e-14 * scale):
        return LearnedProjection(
            W=W, measure=measure, variance=0.0, objective_trace=[0.0],
            max_orthonormality_defect=orthonormality_defect(W),
            zero_variance=True, converged=True)

    Z = obj.mean(W)
    f = -obj.psi(W, Z)
    trace = [f]
    psi_traces = []
    grad_norms = []
    max_defect = orthonormality_defect(W)
    converged = False

    for _ in range(cfg.outer_iterations):
        # (a) RGD on psi with Z fixed
        Wi = W
        psi_i = -f
        eta = cfg.step_size
        steps = []
        first_dir = None
        for _ in range(cfg.rgd_iterations):
            D = obj.grad(Wi, Z)
            g2 = float(np.real(np.vdot(D, D)))
            if first_dir is None:
                first_dir = (D, g2)
                grad_norms.append(np.sqrt(g2))
            if _negligible(g2, psi_i):
                break
            found = _armijo(obj, Wi, Z, D, g2, psi_i,
                            min(cfg.step_size, 2.0 * eta), cfg)
            if found is None:
                if g2 <= 1e-12 * (1.0 + psi_i * psi_i):
                    break
                raise NumericError(
                    f"no Armijo step after {_MAX_HALVINGS} halvings "
                    f"(|grad|={np.sqrt(g2):.3e}, psi={psi_i:.6e})")
            Wi, psi_i, eta = found
            steps.append(psi_i)
            max_defect = max(max_defect, orthonormality_defect(Wi))

        # (b) re-solve the mean and evaluate the variance objective
        candidate = None
        if steps:
            Zc = obj.mean(Wi, Z)
            fc = -obj.psi(Wi, Zc)
            if fc >= f:
                candidate = (Wi, Zc, fc)
            else:
                # the fixed-Z gradient equals the gradient of the variance
                # at the re-solved mean, so a short enough step increases it
                candidate = _safeguard(obj, W, Z, first_dir, f, cfg)
        psi_traces.append(steps)
        if candidate is None:
            converged = True
            trace.append(f)
            break
        W, Z, f_new = candidate
        max_defect = max(max_defect, orthonormality_defect(W))
        trace.append(f_new)
        delta = abs(f_new - f)
        f = f_new
        if delta <= cfg.tol * max(1.0, abs(f)):
            converged = True
            break

    D = obj.grad(W, Z)
    grad_norms.append(float(np.sqrt(np.real(np.vdot(D, D)))))
    return LearnedProjection(
        W=W, measure=measure, variance=f, objective_trace=trace,
        psi_traces=psi_traces, grad_norms=grad_norms,
        max_orthonormality_defect=max_defect, converged=converged)


def _safeguard(obj, W, Z, first_dir, f, cfg):
    D, g2 = first_dir
    eta = cfg.step_size
    for _ in range(_MAX_HALVINGS):
        Wc = retract(W, -D, eta)
        Zc = obj.mean(Wc, Z)
        fc = -obj.psi(Wc, Zc)
        if fc >= f + cfg.armijo_slope * eta * g2:
            return Wc, Zc, fc
        eta *= cfg.armijo_shrink
    return None


class ManifoldProjection(TransformerMixin, BaseEstimator):
    """Variance-maximizing projection of HPD matrices to a lower order.

    Parameters
    ----------
    n_components : int, default=4
        Target order ``m`` of the compressed matrices.
    measure : {"AIRM", "LEM", "JBLD", "SKLD"}, default="JBLD"
        Geometric measure defining the variance.
    outer_iterations : int, default=50
    rgd_iterations : int, default=20
        RGD steps per outer iteration.
    step_size : float, default=1.0
        Initial Armijo step.
    armijo_shrink : float, default=0.5
    armijo_slope : float, default=1e-4
    tol : float, default=1e-8
        Relative change of the variance objective that stops the outer loop.
    mean_config : MeanConfig, optional
    random_state : int, optional
        Seed of the random Stiefel initialization.

    Attributes
    ----------
    W_ : ndarray, shape (n, n_components)
    variance_ : float
    objective_trace_ : list of float
    result_ : LearnedProjection
    """

    def __init__(self, n_components=4, measure="JBLD", outer_iterations=50,
                 rgd_iterations=20, step_size=1.0, armijo_shrink=0.5,
                 armijo_slope=1e-4, tol=1e-8, mean_config=None,
                 random_state=0):
        self.n_components = n_components
        self.measure = measure
        self.outer_iterations = outer_iterations
        self.rgd_iterations = rgd_iterations
        self.step_size = step_size
        self.armijo_shrink = armijo_shrink
        self.armijo_slope = armijo_slope
        self.tol = tol
        self.mean_config = mean_config
        self.random_state = random_state

    def learner_config(self):
        return LearnerConfig(
            outer_iterations=self.outer_iterations,
            rgd_iterations=self.rgd_iterations,
            step_size=self.step_size,
            armijo_shrink=self.armijo_shrink,
            armijo_slope=self.armijo_slope,
            tol=self.tol,
            seed=self.random_state)

    def fit(self, X, y=None):
        """Learn ``W`` from training HPD matrices ``X`` (labels ignored)."""
        result = learn_projection(self.measure, X, self.n_components,
                                  self.learner_config(), self.mean_config)
        self._set_result(result)
        return self

    def _set_result(self, result):
        self.result_ = result
        self.W_ = result.W
        self.variance_ = result.variance
        self.objective_trace_ = list(result.objective_trace)
        self.n_features_in_ = result.W.shape[0]
        return self

    @classmethod
    def from_matrix(cls, W, measure="JBLD"):
        """Wrap an already learned projection matrix."""
        W = check_stiefel(W)
        est = cls(n_components=W.shape[1], measure=measure)
        return est._set_result(LearnedProjection(
            W=W, measure=GeometricMeasure.parse(measure), variance=np.nan,
            objective_trace=[], converged=True,
            max_orthonormality_defect=orthonormality_defect(W)))

    def transform(self, X):
        """Compress HPD matrices: ``W^H X W``."""
        check_is_fitted(self, "W_")
        return compress(self.W_, check_hpd(X))
