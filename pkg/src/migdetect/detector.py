"""MIG detectors, the AMF baselines and Monte Carlo calibration.

A detector maps one trial (secondary data plus the cell under test) to a
nonnegative statistic and declares a target when the statistic exceeds its
threshold. ``fit`` calibrates the threshold on clutter-only trials for a
requested false-alarm probability, in the spirit of a CFAR design.
"""

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import MIGError, NumericError, ValidationError
from .geometry import GeometricMeasure, sq_dist
from .means import MeanConfig, geometric_mean
from .observation import build_hpd_observation, steering
from .projection import ManifoldProjection, check_stiefel, compress
from .scenario import (
    STREAM_PD,
    STREAM_THRESHOLD,
    simulate_trials,
)
from .validation import as_complex, check_hpd, check_hpd_set

__all__ = [
    "steering",
    "build_hpd_observation",
    "ccm_estimate",
    "mig_statistic",
    "amf_statistic",
    "threshold_from_statistics",
    "exceedance_rate",
    "MIGDetector",
    "AMFDetector",
    "run_trials",
    "run_trials_collect",
    "estimate_threshold",
    "estimate_pd",
]


def ccm_estimate(measure, secondary, config=None):
    """Clutter covariance estimate as the geometric mean of secondary data."""
    return geometric_mean(measure, secondary, config)


def _projection_matrix(projection):
    if projection is None:
        return None
    if isinstance(projection, ManifoldProjection):
        check_is_fitted(projection, "W_")
        return projection.W_
    return check_stiefel(projection)


def mig_statistic(measure, R_G, R_D, projection=None):
    """Squared geometric distance between the CCM estimate and the CUT.

    With a projection ``W`` both matrices are first compressed to
    ``W^H R W``.
    """
    R_G = check_hpd(R_G, "R_G")
    R_D = check_hpd(R_D, "R_D")
    if R_G.shape[-1] != R_D.shape[-1]:
        raise ValidationError("R_G and R_D orders differ")
    W = _projection_matrix(projection)
    if W is not None:
        R_G = compress(W, R_G)
        R_D = compress(W, R_D)
    return sq_dist(measure, R_G, R_D, check=False)


def secondary_covariance(secondary, loading="auto"):
    """Sample covariance ``(1/K) sum x_k x_k^H`` of secondary snapshots.

    With ``loading="auto"`` the estimate is loaded by ``1e-6 tr(S)/N I``
    whenever ``K < 2N``. ``loading=None`` disables loading; a float gives an
    explicit relative load.
    """
    X = as_complex(secondary)
    K, N = X.shape[-2], X.shape[-1]
    S = np.swapaxes(X, -1, -2) @ np.conj(X) / K
    if loading == "auto":
        loading = 1e-6 if K < 2 * N else None
    if loading:
        tr = np.real(np.trace(S, axis1=-2, axis2=-1))
        S = S + (loading * tr / N)[..., None, None] * np.eye(N)
    return S


def amf_statistic(x, secondary, p, covariance=None, loading="auto"):
    """Adaptive matched filter ``|p^H S^{-1} x|^2 / (p^H S^{-1} p)``.

    ``S`` is the secondary sample covariance unless ``covariance`` is given
    (the known-covariance benchmark). Broadcasts over leading trial axes.

    Raises
    ------
    NumericError
        If ``S`` is singular (only possible with loading disabled).
    """
    x = as_complex(x)
    p = as_complex(p)
    if covariance is None:
        S = secondary_covariance(secondary, loading)
    else:
        S = as_complex(covariance)
    rhs = np.stack(np.broadcast_arrays(x, p), axis=-1)
    S = np.broadcast_to(S, rhs.shape[:-2] + S.shape[-2:])
    cond = np.linalg.cond(S)
    if np.any(~np.isfinite(cond) | (cond > 1e15)):
        raise NumericError("singular sample covariance in AMF")
    sol = np.linalg.solve(S, rhs)
    num = np.abs(np.sum(np.conj(p) * sol[..., 0], axis=-1)) ** 2
    den = np.real(np.sum(np.conj(p) * sol[..., 1], axis=-1))
    out = num / den
    return float(out) if np.ndim(out) == 0 else out


def threshold_from_statistics(statistics, pfa):
    """Smallest threshold whose exceedance fraction does not exceed ``pfa``.

    The statistics are sorted in descending order and the value at rank
    ``ceil(pfa * n)`` (1-based) is returned; detection is ``stat > gamma``.
    """
    s = np.sort(np.asarray(statistics, dtype=float))[::-1]
    if s.size == 0:
        raise ValidationError("no statistics to calibrate on")
    if not 0 < pfa < 1:
        raise ValidationError(f"pfa must lie in (0, 1), got {pfa}")
    rank = max(1, math.ceil(pfa * s.size - 1e-9))
    return float(s[rank - 1])


def exceedance_rate(statistics, threshold):
    return float(np.mean(np.asarray(statistics) > threshold))


class _ThresholdMixin:
    """Threshold calibration shared by all detectors."""

    def calibrate(self, statistics):
        self.threshold_ = threshold_from_statistics(statistics, self.pfa)
        return self

    def fit_batch(self, batch):
        return self.calibrate(self.evaluate(batch))

    def decision_function(self, *args):
        check_is_fitted(self, "threshold_")
        return self.statistic(*args) - self.threshold_

    def predict(self, *args):
        """1 where the statistic exceeds the threshold, else 0."""
        return (np.asarray(self.decision_function(*args)) > 0).astype(int)


class MIGDetector(_ThresholdMixin, BaseEstimator):
    """Matrix-information-geometry detector.

    Parameters
    ----------
    measure : {"AIRM", "LEM", "JBLD", "SKLD"}, default="JBLD"
    projection : ManifoldProjection or ndarray, optional
        Fitted projection; when given, the CCM estimate and the CUT matrix
        are compressed before measuring their distance.
    pfa : float, default=1e-2
        False-alarm probability targeted by :meth:`fit`.
    mean_config : MeanConfig, optional
        Solver settings for the CCM geometric mean.
    threshold : float, optional
        Preset threshold; skips calibration.

    Attributes
    ----------
    threshold_ : float
    """

    def __init__(self, measure="JBLD", projection=None, pfa=1e-2,
                 mean_config=None, threshold=None):
        self.measure = measure
        self.projection = projection
        self.pfa = pfa
        self.mean_config = mean_config
        self.threshold = threshold
        if threshold is not None:
            self.threshold_ = float(threshold)

    @property
    def name(self):
        tag = "mig-proj" if self.projection is not None else "mig"
        return f"{tag}_{GeometricMeasure.parse(self.measure)}"

    def _mean_config(self):
        return MeanConfig() if self.mean_config is None else self.mean_config

    def _check_projection(self, n):
        W = _projection_matrix(self.projection)
        if W is not None and W.shape[0] != n:
            raise ValidationError(
                f"projection ambient dimension {W.shape[0]} != data order {n}")
        return W

    def statistic(self, secondary, cut):
        """Statistic for HPD secondary sets ``(..., K, N, N)`` and CUT
        matrices ``(..., N, N)``."""
        secondary = check_hpd_set(secondary, "secondary")
        cut = check_hpd(cut, "cut")
        W = self._check_projection(cut.shape[-1])
        R_G = ccm_estimate(self.measure, secondary, self._mean_config())
        return self._distance(W, R_G, cut)

    def _distance(self, W, R_G, R_D):
        if W is not None:
            R_G = compress(W, R_G)
            R_D = compress(W, R_D)
        return sq_dist(self.measure, R_G, R_D, check=False)

    def evaluate(self, batch):
        """Statistics for a :class:`~migdetect.scenario.TrialBatch`."""
        W = self._check_projection(batch.cut.shape[-1])
        R_G = batch.ccm(GeometricMeasure.parse(self.measure),
                        self._mean_config())
        return np.atleast_1d(self._distance(W, R_G, batch.cut_hpd))

    def fit(self, secondary, cut):
        """Calibrate the threshold on clutter-only trials."""
        return self.calibrate(np.atleast_1d(self.statistic(secondary, cut)))


class AMFDetector(_ThresholdMixin, BaseEstimator):
    """Adaptive matched filter baseline.

    Parameters
    ----------
    doppler : float, default=0.2
        Normalized Doppler of the target steering vector.
    known_covariance : bool, default=False
        Use the true clutter covariance instead of the secondary sample
        covariance (benchmark).
    loading : "auto", float or None, default="auto"
        Diagonal loading of the sample covariance.
    pfa : float, default=1e-2
    threshold : float, optional
    """

    def __init__(self, doppler=0.2, known_covariance=False, loading="auto",
                 pfa=1e-2, threshold=None):
        self.doppler = doppler
        self.known_covariance = known_covariance
        self.loading = loading
        self.pfa = pfa
        self.threshold = threshold
        if threshold is not None:
            self.threshold_ = float(threshold)

    @property
    def name(self):
        return "amf-known" if self.known_covariance else "amf"

    def statistic(self, secondary, cut, covariance=None):
        """Statistic from raw snapshots: secondary ``(..., K, N)`` and CUT
        ``(..., N)``."""
        cut = as_complex(cut)
        p = steering(cut.shape[-1], self.doppler)
        if self.known_covariance and covariance is None:
            raise ValidationError("known-covariance AMF needs a covariance")
        return amf_statistic(cut, secondary, p,
                             covariance if self.known_covariance else None,
                             self.loading)

    def evaluate(self, batch):
        return np.atleast_1d(
            self.statistic(batch.secondary, batch.cut, batch.covariance))

    def fit(self, secondary, cut, covariance=None):
        return self.calibrate(
            np.atleast_1d(self.statistic(secondary, cut, covariance)))


# Monte Carlo engine ---------------------------------------------------------

CHUNK_SIZE = 250


def default_workers():
    """Worker count from ``MIG_THREADS`` (0 or unset means all CPUs)."""
    value = os.environ.get("MIG_THREADS", "").strip()
    n = int(value) if value else 0
    return n if n > 0 else (os.cpu_count() or 1)


def _chunk(detectors, scenario, n_secondary, trials, seed, stream, scr_db,
           collect):
    batch = simulate_trials(scenario, n_secondary, trials, seed, stream,
                            scr_db)
    stats, times, errors = {}, {}, {}
    for name, det in detectors.items():
        t0 = time.perf_counter()
        try:
            stats[name] = det.evaluate(batch)
        except MIGError as exc:
            if not collect:
                raise
            errors[name] = f"{type(exc).__name__}: {exc}"
        times[name] = time.perf_counter() - t0
    return stats, times, errors


def _run_blocks(detectors, scenario, n_secondary, n_trials, seed, stream,
                scr_db, n_jobs, collect):
    if n_trials < 1:
        raise ValidationError("n_trials must be positive")
    blocks = [np.arange(a, min(a + CHUNK_SIZE, n_trials))
              for a in range(0, n_trials, CHUNK_SIZE)]
    args = (scenario, n_secondary)
    if n_jobs > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_chunk, detectors, *args, b, seed, stream,
                                   scr_db, collect) for b in blocks]
            parts = [f.result() for f in futures]
    else:
        parts = [_chunk(detectors, *args, b, seed, stream, scr_db, collect)
                 for b in blocks]
    errors = {}
    for _, _, errs in parts:
        for name, msg in errs.items():
            errors.setdefault(name, msg)
    stats = {name: np.concatenate([p[0][name] for p in parts])
             for name in detectors if name not in errors}
    times = {name: sum(p[1][name] for p in parts) for name in detectors}
    return stats, times, errors


def run_trials(detectors, scenario, n_secondary, n_trials, seed, stream,
               scr_db=None, n_jobs=1):
    """Evaluate detectors on shared Monte Carlo trials.

    Trials are processed in fixed blocks of :data:`CHUNK_SIZE`, each trial
    drawing from its own substream, so serial and parallel runs return
    identical statistics.

    Parameters
    ----------
    detectors : dict of name -> detector
    scenario : ClutterScenario
    n_secondary : int
        Number ``K`` of secondary cells per trial.
    n_trials : int
    seed, stream : int
        Substream coordinates.
    scr_db : float, optional
        Inject a target at this SCR into the CUT; clutter-only if None.
    n_jobs : int, default=1

    Returns
    -------
    dict of name -> ndarray of shape (n_trials,)
    """
    stats, _, _ = _run_blocks(detectors, scenario, n_secondary, n_trials,
                              seed, stream, scr_db, n_jobs, collect=False)
    return stats


def run_trials_collect(detectors, scenario, n_secondary, n_trials, seed,
                       stream, scr_db=None, n_jobs=1):
    """Like :func:`run_trials` but isolates failures per detector.

    Returns
    -------
    stats : dict of name -> ndarray
        Statistics of the detectors that succeeded on every block.
    times : dict of name -> float
        Evaluation wall time per detector, summed over blocks.
    errors : dict of name -> str
        First error message of each failed detector.
    """
    return _run_blocks(detectors, scenario, n_secondary, n_trials, seed,
                       stream, scr_db, n_jobs, collect=True)


def estimate_threshold(detector, scenario, pfa, n_trials, seed, n_secondary,
                       stream=STREAM_THRESHOLD, n_jobs=1):
    """Calibrate ``detector`` on ``n_trials`` clutter-only trials.

    Requires ``n_trials >= 10 / pfa``. Sets and returns ``threshold_``.
    """
    if not 0 < pfa < 1:
        raise ValidationError(f"pfa must lie in (0, 1), got {pfa}")
    if n_trials < 10 / pfa:
        raise ValidationError(
            f"{n_trials} trials too few for pfa={pfa} (need >= {10 / pfa:g})")
    stats = run_trials({"d": detector}, scenario, n_secondary, n_trials, seed,
                       stream, None, n_jobs)["d"]
    detector.pfa = pfa
    detector.calibrate(stats)
    return detector.threshold_


def estimate_pd(detector, scenario, scr_db, n_trials, seed, n_secondary,
                stream=STREAM_PD, n_jobs=1):
    """Fraction of target-bearing trials whose statistic exceeds the
    detector's threshold."""
    check_is_fitted(detector, "threshold_")
    if n_trials < 100:
        raise ValidationError("estimate_pd needs at least 100 trials")
    stats = run_trials({"d": detector}, scenario, n_secondary, n_trials, seed,
                       stream, scr_db, n_jobs)["d"]
    return exceedance_rate(stats, detector.threshold_)
