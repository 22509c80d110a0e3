"""Nonhomogeneous clutter environment and training-set synthesis.

Clutter is complex circular Gaussian with covariance
``C = sigma_c^2 C0 + sigma_n^2 I`` where
``[C0]_{ij} = rho^|i-j| exp(i 2 pi f_c (i - j))`` and
``sigma_c^2 = sigma_n^2 10^(CNR/10)``.

Power conventions (steering vectors have unit norm):

* SCR = ``|alpha|^2 / sigma_c^2``
* INR = ``|beta|^2 / sigma_n^2`` for each interference of amplitude ``beta``

Randomness for detection trials is drawn from per-trial substreams
``default_rng([seed, stream, trial])`` so every trial is reproducible on its
own, independently of how trials are split across workers.
"""

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .exceptions import DomainError, ValidationError
from .matlin import chol_hpd
from .means import geometric_mean
from .observation import build_hpd_observation, steering

STREAM_THRESHOLD = 0
STREAM_PFA = 1
STREAM_PD = 2
STREAM_TRAINING = 3


def db2lin(db):
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class Interference:
    """Deterministic-power interferences injected into secondary cells.

    ``count`` interferences at Doppler ``doppler`` occupy the first ``count``
    secondary cells. ``in_null`` controls whether they are also present in
    the clutter-only trials used for threshold calibration.
    """

    count: int = 2
    doppler: float = 0.22
    inr_db: float = 20.0
    in_null: bool = True


@dataclass(frozen=True)
class ClutterScenario:
    n: int = 8
    cnr_db: float = 25.0
    rho: float = 0.95
    fc: float = 0.1
    sigma_n2: float = 1.0
    fs: float = 0.2
    interference: Interference = field(default_factory=Interference)

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("scenario dimension must be >= 2")
        if not 0 < self.rho < 1:
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.sigma_n2 > 0:
            raise ValidationError("sigma_n2 must be positive")
        if self.interference.count < 0:
            raise ValidationError("interference count must be >= 0")

    @property
    def sigma_c2(self):
        return self.sigma_n2 * db2lin(self.cnr_db)

    def target_amplitude(self, scr_db):
        return np.sqrt(self.sigma_c2 * db2lin(scr_db))

    @property
    def interference_amplitude(self):
        return np.sqrt(self.sigma_n2 * db2lin(self.interference.inr_db))

    def with_(self, **changes):
        return replace(self, **changes)


def clutter_cov(sc):
    """Clutter-plus-noise covariance of the scenario (Hermitian Toeplitz)."""
    i = np.arange(sc.n)
    lag = i[:, None] - i[None, :]
    C0 = sc.rho ** np.abs(lag) * np.exp(2j * np.pi * sc.fc * lag)
    C = sc.sigma_c2 * C0 + sc.sigma_n2 * np.eye(sc.n)
    w = np.linalg.eigvalsh(C)
    if not w[0] > 0:
        raise DomainError(f"clutter covariance not HPD (eigenvalue {w[0]})")
    return C


def circular_gaussian(rng, shape):
    """Standard circular complex Gaussian samples (variance 1/2 per part)."""
    return (rng.standard_normal(shape)
            + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_vector(C, rng, target=None, interference=None, factor=None):
    """Draw one snapshot ``L w (+ alpha p) (+ beta q)``.

    Parameters
    ----------
    C : ndarray, shape (N, N)
        Clutter covariance.
    rng : numpy.random.Generator
    target : tuple (alpha, p), optional
        Complex amplitude and steering vector of a target.
    interference : tuple (beta, doppler), optional
        Complex amplitude and Doppler of an interference.
    factor : ndarray, optional
        Precomputed Cholesky factor of ``C``.
    """
    L = chol_hpd(C) if factor is None else factor
    x = L @ circular_gaussian(rng, C.shape[-1])
    if target is not None:
        alpha, p = target
        x = x + alpha * np.asarray(p)
    if interference is not None:
        beta, f_i = interference
        x = x + beta * steering(C.shape[-1], f_i)
    return x


@dataclass
class TrainingSet:
    clutter_only: np.ndarray
    with_target: np.ndarray
    scr_db: float

    @property
    def data(self):
        return np.concatenate([self.clutter_only, self.with_target])


def gen_training(sc, J, K, scr_db, seed):
    """Synthesize ``J`` clutter-only and ``K`` target-bearing observations.

    Targets have ``|alpha|^2 = sigma_c^2 10^(SCR/10)`` and uniform random
    phase, along the steering vector at Doppler ``sc.fs``.
    """
    if J < 1 or K < 1:
        raise ValidationError("training subsets must be nonempty")
    rng = np.random.default_rng([int(seed), STREAM_TRAINING])
    C = clutter_cov(sc)
    L = chol_hpd(C)
    clutter = circular_gaussian(rng, (J, sc.n)) @ L.T
    noise = circular_gaussian(rng, (K, sc.n)) @ L.T
    phase = rng.uniform(0.0, 2 * np.pi, K)
    alpha = sc.target_amplitude(scr_db) * np.exp(1j * phase)
    targets = noise + alpha[:, None] * steering(sc.n, sc.fs)[None, :]
    return TrainingSet(build_hpd_observation(clutter),
                       build_hpd_observation(targets), float(scr_db))


class TrialBatch:
    """Raw snapshots for a block of detection trials.

    Attributes
    ----------
    secondary : ndarray, shape (T, K, N)
    cut : ndarray, shape (T, N)
    covariance : ndarray, shape (N, N)
        True clutter covariance (for the known-covariance benchmark).
    """

    def __init__(self, secondary, cut, covariance):
        self.secondary = secondary
        self.cut = cut
        self.covariance = covariance
        self._ccm = {}

    def __len__(self):
        return self.cut.shape[0]

    @cached_property
    def secondary_hpd(self):
        return build_hpd_observation(self.secondary)

    @cached_property
    def cut_hpd(self):
        return build_hpd_observation(self.cut)

    def ccm(self, measure, config):
        """Geometric-mean CCM per trial, cached per (measure, config)."""
        key = (str(measure), config)
        if key not in self._ccm:
            self._ccm[key] = geometric_mean(measure, self.secondary_hpd,
                                            config)
        return self._ccm[key]


def simulate_trials(sc, n_secondary, trials, seed, stream, scr_db=None):
    """Draw the snapshots of the given trial indices.

    Each trial uses its own generator ``default_rng([seed, stream, t])`` and
    draws, in order: secondary clutter, CUT clutter, target phase,
    interference phases. The same draws are made whether or not a target is
    present, so curves over SCR share their clutter realizations.
    """
    inter = sc.interference
    if inter.count > n_secondary:
        raise ValidationError(
            f"{inter.count} interferences exceed {n_secondary} secondary cells")
    trials = np.asarray(trials, dtype=np.int64)
    C = clutter_cov(sc)
    L = chol_hpd(C)
    N = sc.n
    T = trials.shape[0]
    sec = np.empty((T, n_secondary, N), dtype=complex)
    cut = np.empty((T, N), dtype=complex)
    tgt_phase = np.empty(T)
    int_phase = np.empty((T, inter.count))
    for row, t in enumerate(trials):
        rng = np.random.default_rng([int(seed), int(stream), int(t)])
        sec[row] = circular_gaussian(rng, (n_secondary, N))
        cut[row] = circular_gaussian(rng, N)
        tgt_phase[row] = rng.uniform(0.0, 2 * np.pi)
        int_phase[row] = rng.uniform(0.0, 2 * np.pi, inter.count)
    sec = sec @ L.T
    cut = cut @ L.T
    use_int = inter.count > 0 and (scr_db is not None or inter.in_null)
    if use_int:
        q = steering(N, inter.doppler)
        beta = sc.interference_amplitude * np.exp(1j * int_phase)
        sec[:, :inter.count, :] += beta[..., None] * q
    if scr_db is not None:
        alpha = sc.target_amplitude(scr_db) * np.exp(1j * tgt_phase)
        cut += alpha[:, None] * steering(N, sc.fs)
    return TrialBatch(sec, cut, C)
