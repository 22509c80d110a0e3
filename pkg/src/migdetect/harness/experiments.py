"""Experiment orchestration: training sets, projections, detection sweeps,
distance clouds and timing benchmarks."""

import csv
import hashlib
import io
import json
import logging
import platform
import statistics
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .. import __version__
from ..detector import (
    AMFDetector,
    MIGDetector,
    default_workers,
    exceedance_rate,
    run_trials_collect,
)
from ..exceptions import MIGError
from ..geometry import GeometricMeasure, sq_dist
from ..means import arithmetic_mean, geometric_mean
from ..projection import (
    ManifoldProjection,
    compress,
    euclid_grad,
    random_stiefel,
)
from ..scenario import (
    STREAM_PD,
    STREAM_PFA,
    STREAM_THRESHOLD,
    gen_training,
)
from .config import ExperimentConfig, format_config
from .matrixio import write_matrices, write_matrix

log = logging.getLogger(__name__)

CSV_HEADER = ("detector", "measure", "M", "K", "scr_db", "threshold",
              "empirical_pfa", "pd", "trials")

DISCLOSURE = {
    "scr": "SCR = |alpha|^2 / sigma_c^2 with unit-norm steering vector",
    "inr": "INR = |beta|^2 / sigma_n^2 per interference, deterministic "
           "amplitude, uniform random phase, first `count` secondary cells",
    "interference_in_null": "interferences also present in clutter-only "
                            "(threshold and Pfa) trials unless "
                            "scenario.interference.in_null = false",
    "amf_loading": "sample covariance loaded by 1e-6 tr(S)/N I when K < 2N",
    "threshold_rule": "descending sort, value at rank ceil(pfa * n); "
                      "detection when statistic > threshold",
    "statistic": "squared measure between the CCM geometric mean and the "
                 "CUT matrix, both compressed when a projection is used",
    "training_clutter": "training observations contain no interference",
}

MEAN_COMPLEXITY = {
    "arithmetic": "O(N^2 (K-1))",
    "LEM": "O(N^4 K)",
    "AIRM": "O(N^4 (K-1)) per iteration",
    "JBLD": "O(N^3 (K+1)) per iteration",
    "SKLD": "O(N^3 (K+6))",
}

GRADIENT_COMPLEXITY = {
    "LEM": "O(2M^4) + O(N^2 M) per sample",
    "AIRM": "O(M^4) + O(2N^2 M) per sample",
    "JBLD": "O(2M^3) + O(2NM^2) + O(2N^2 M) per sample",
    "SKLD": "O(4M^3) + O(2NM^2) + O(2N^2 M) per sample",
}


def _fmt(x):
    return repr(float(x))


def _workers(cfg, n_jobs):
    if n_jobs is not None:
        return max(1, int(n_jobs))
    return cfg.n_jobs if cfg.n_jobs > 0 else default_workers()


def _out_dir(cfg, out_dir):
    path = Path(cfg.output_dir if out_dir is None else out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_metadata(cfg):
    """Run identity and environment recorded in every manifest."""
    text = format_config(cfg)
    meta = {
        "run_id": hashlib.sha1(text.encode()).hexdigest()[:12],
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    try:
        commit = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True,
            text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        if commit.returncode == 0:
            meta["git_commit"] = commit.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return meta


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


# training and projections ---------------------------------------------------

def make_training(cfg):
    return gen_training(cfg.scenario, cfg.training_j, cfg.training_k,
                        cfg.training_scr_db, cfg.seed)


def save_training(cfg, out_dir=None):
    """Write the training set as two stacked matrix files."""
    out = _out_dir(cfg, out_dir)
    ts = make_training(cfg)
    write_matrices(out / "training_clutter.migw", ts.clutter_only)
    write_matrices(out / "training_target.migw", ts.with_target)
    _write_json(out / "training.json", {
        "config": cfg.as_dict(),
        "metadata": run_metadata(cfg),
        "clutter_only": int(ts.clutter_only.shape[0]),
        "with_target": int(ts.with_target.shape[0]),
        "scr_db": ts.scr_db,
    })
    return ts


def learn_projections(cfg, data, m_list=None, measures=None):
    """Fit one projection per (measure, M).

    Returns ``{(measure, M): ManifoldProjection or error message}``.
    """
    out = {}
    for m in cfg.m_list if m_list is None else m_list:
        for measure in cfg.measures if measures is None else measures:
            lc = cfg.learner
            est = ManifoldProjection(
                n_components=m, measure=str(measure),
                outer_iterations=lc.outer_iterations,
                rgd_iterations=lc.rgd_iterations, step_size=lc.step_size,
                armijo_shrink=lc.armijo_shrink, armijo_slope=lc.armijo_slope,
                tol=lc.tol, mean_config=cfg.mean, random_state=lc.seed)
            t0 = time.perf_counter()
            try:
                est.fit(data)
                est.fit_time_ = time.perf_counter() - t0
                out[(GeometricMeasure.parse(measure), m)] = est
                log.info("learned %s M=%d variance=%.6g in %.1fs", measure, m,
                         est.variance_, est.fit_time_)
            except MIGError as exc:
                out[(GeometricMeasure.parse(measure), m)] = (
                    f"{type(exc).__name__}: {exc}")
                log.warning("projection %s M=%d failed: %s", measure, m, exc)
    return out


def projection_summary(est):
    r = est.result_
    return {
        "variance": r.variance,
        "objective_trace": list(r.objective_trace),
        "outer_iterations": len(r.objective_trace) - 1,
        "converged": bool(r.converged),
        "zero_variance": bool(r.zero_variance),
        "max_orthonormality_defect": r.max_orthonormality_defect,
        "final_grad_norm": r.grad_norms[-1] if r.grad_norms else None,
        "fit_time_s": getattr(est, "fit_time_", None),
    }


def save_projections(cfg, out_dir=None, data=None):
    """Learn and write ``W_<measure>_M<m>.migw`` for every configured pair."""
    out = _out_dir(cfg, out_dir)
    if data is None:
        data = make_training(cfg).data
    fitted = learn_projections(cfg, data)
    summary = {}
    errors = {}
    for (measure, m), est in fitted.items():
        key = f"{measure}_M{m}"
        if isinstance(est, str):
            errors[key] = est
            continue
        write_matrix(out / f"W_{key}.migw", est.W_)
        summary[key] = projection_summary(est)
    _write_json(out / "projections.json", {
        "config": cfg.as_dict(), "metadata": run_metadata(cfg),
        "projections": summary, "errors": errors})
    return fitted


# detection sweep ------------------------------------------------------------

@dataclass
class DetectorRun:
    name: str
    measure: str
    M: int
    K: int
    threshold: Optional[float] = None
    empirical_pfa: Optional[float] = None
    pd: Dict[float, float] = field(default_factory=dict)
    wall_time_s: float = 0.0
    error: Optional[str] = None
    csv: Optional[str] = None

    def rows(self, trials):
        return [(self.name, self.measure, self.M, self.K, _fmt(scr),
                 _fmt(self.threshold), _fmt(self.empirical_pfa), _fmt(pd),
                 trials)
                for scr, pd in self.pd.items()]

    def manifest_entry(self):
        return {
            "detector": self.name, "measure": self.measure, "M": self.M,
            "K": self.K, "threshold": self.threshold,
            "empirical_pfa": self.empirical_pfa,
            "pd": {_fmt(k): v for k, v in self.pd.items()},
            "wall_time_s": self.wall_time_s, "error": self.error,
            "csv": self.csv,
        }


def build_detectors(cfg, projections, m):
    """Detectors compared at target dimension ``m``."""
    dets = {}
    for measure in cfg.measures:
        unproj = MIGDetector(str(measure), pfa=cfg.pfa, mean_config=cfg.mean)
        dets[unproj.name] = unproj
        est = projections.get((measure, m))
        if isinstance(est, ManifoldProjection):
            proj = MIGDetector(str(measure), projection=est, pfa=cfg.pfa,
                               mean_config=cfg.mean)
            dets[proj.name] = proj
    for known in (False, True):
        amf = AMFDetector(doppler=cfg.scenario.fs, known_covariance=known,
                          pfa=cfg.pfa)
        dets[amf.name] = amf
    return dets


def _measure_label(det):
    return str(GeometricMeasure.parse(det.measure)) if isinstance(
        det, MIGDetector) else "none"


def sweep_one(cfg, detectors, m, k, n_jobs=1):
    """Threshold, independent Pfa check and Pd sweep for one (M, K)."""
    runs = {name: DetectorRun(name, _measure_label(det), m, k)
            for name, det in detectors.items()}
    live = dict(detectors)

    def step(n_trials, stream, scr):
        stats, times, errors = run_trials_collect(
            live, cfg.scenario, k, n_trials, cfg.seed, stream, scr, n_jobs)
        for name, seconds in times.items():
            runs[name].wall_time_s += seconds
        for name, msg in errors.items():
            runs[name].error = msg
            live.pop(name)
            log.warning("detector %s (M=%d, K=%d) failed: %s", name, m, k, msg)
        return stats

    try:
        stats = step(cfg.trials_threshold, STREAM_THRESHOLD, None)
        for name, s in stats.items():
            live[name].pfa = cfg.pfa
            live[name].calibrate(s)
            runs[name].threshold = live[name].threshold_
        stats = step(cfg.trials_pfa_check, STREAM_PFA, None)
        for name, s in stats.items():
            runs[name].empirical_pfa = exceedance_rate(
                s, live[name].threshold_)
        for scr in cfg.scr_db:
            stats = step(cfg.trials_pd, STREAM_PD, scr)
            for name, s in stats.items():
                runs[name].pd[float(scr)] = exceedance_rate(
                    s, live[name].threshold_)
    except MIGError as exc:
        # scenario-level failure (e.g. more interferences than cells)
        for name in list(live):
            runs[name].error = f"{type(exc).__name__}: {exc}"
        log.warning("sweep M=%d K=%d aborted: %s", m, k, exc)
    return runs


def _gnuplot(csv_name, title):
    return "\n".join([
        "set datafile separator ','",
        f"set title '{title}'",
        "set xlabel 'SCR (dB)'",
        "set ylabel 'Pd'",
        "set yrange [0:1]",
        "set key off",
        f"plot '{csv_name}' every ::1 using 5:8 with linespoints",
        "",
    ])


def run_sweep(cfg, out_dir=None, n_jobs=None, projections=None,
              training=None):
    """Full detection sweep; writes one CSV (and gnuplot script) per
    detector and (M, K), plus ``manifest.json``. Returns the manifest."""
    out = _out_dir(cfg, out_dir)
    workers = _workers(cfg, n_jobs)
    t_start = time.perf_counter()
    manifest = {
        "config": cfg.as_dict(), "seed": cfg.seed,
        "metadata": run_metadata(cfg), "disclosure": DISCLOSURE,
        "workers": workers, "projections": {}, "runs": [], "errors": [],
    }
    training = make_training(cfg) if training is None else training
    for m in cfg.m_list:
        if projections is None:
            fitted = learn_projections(cfg, training.data, [m])
        else:
            fitted = {key: est for key, est in projections.items()
                      if key[1] == m}
        for (measure, mm), est in fitted.items():
            key = f"{measure}_M{mm}"
            if isinstance(est, str):
                manifest["errors"].append(
                    {"stage": "learn-projection", "key": key, "error": est})
                manifest["projections"][key] = {"error": est}
            else:
                manifest["projections"][key] = projection_summary(est)
        detectors = build_detectors(cfg, fitted, m)
        for k in cfg.k_values(m):
            log.info("sweep M=%d K=%d with %d detectors", m, k,
                     len(detectors))
            runs = sweep_one(cfg, detectors, m, k, workers)
            for run in runs.values():
                if run.error is None:
                    name = f"{run.name}_M{m}_K{k}.csv"
                    _write_csv(out / name, CSV_HEADER,
                               run.rows(cfg.trials_pd))
                    (out / name.replace(".csv", ".gp")).write_text(
                        _gnuplot(name, f"{run.name} M={m} K={k}"))
                    run.csv = name
                else:
                    manifest["errors"].append(
                        {"stage": "sweep", "key": f"{run.name}_M{m}_K{k}",
                         "error": run.error})
                manifest["runs"].append(run.manifest_entry())
    manifest["wall_time_s"] = time.perf_counter() - t_start
    _write_json(out / "manifest.json", manifest)
    return manifest


# distance clouds ------------------------------------------------------------

def distance_clouds(cfg, training=None):
    """Squared distances of clutter-only and target-bearing training
    matrices to the geometric mean of the clutter-only subset."""
    ts = make_training(cfg) if training is None else training
    clouds = {}
    for measure in cfg.measures:
        ref = geometric_mean(measure, ts.clutter_only, cfg.mean)
        clouds[str(measure)] = (
            np.asarray(sq_dist(measure, ts.clutter_only, ref, check=False)),
            np.asarray(sq_dist(measure, ts.with_target, ref, check=False)))
    return clouds


def separation(clutter, target):
    """Gap of the target and clutter means in pooled standard deviations."""
    pooled = np.sqrt(0.5 * (np.var(clutter, ddof=1) + np.var(target, ddof=1)))
    return float((np.mean(target) - np.mean(clutter)) / pooled)


def run_distances(cfg, out_dir=None, training=None):
    """Write ``distances.csv`` (one row per training matrix, one column per
    measure) and ``distances.json`` with per-measure summaries."""
    out = _out_dir(cfg, out_dir)
    clouds = distance_clouds(cfg, training)
    names = list(clouds)
    header = ["set", "index"] + [f"d2_{n}" for n in names]
    rows = []
    for label, which in (("clutter", 0), ("target", 1)):
        size = clouds[names[0]][which].shape[0]
        for i in range(size):
            rows.append([label, i] + [_fmt(clouds[n][which][i])
                                      for n in names])
    _write_csv(out / "distances.csv", header, rows)
    summary = {}
    for n, (c, t) in clouds.items():
        summary[n] = {
            "clutter_mean": float(np.mean(c)), "clutter_std": float(np.std(c)),
            "target_mean": float(np.mean(t)), "target_std": float(np.std(t)),
            "separation_pooled_std": separation(c, t),
        }
    script = ["set datafile separator ','", "set ylabel 'squared distance'",
              "set logscale y"]
    plots = [f"'distances.csv' every ::1 using 2:{3 + i} title '{n}'"
             for i, n in enumerate(names)]
    script.append("plot " + ", ".join(plots))
    (out / "distances.gp").write_text("\n".join(script) + "\n")
    _write_json(out / "distances.json", {
        "config": cfg.as_dict(), "metadata": run_metadata(cfg),
        "reference": "geometric mean of the clutter-only subset",
        "summary": summary})
    return summary


# timing benchmark -----------------------------------------------------------

def random_hpd_set(rng, k, n):
    A = rng.standard_normal((k, n, 2 * n)) + 1j * rng.standard_normal(
        (k, n, 2 * n))
    return A @ np.conj(np.swapaxes(A, -1, -2)) / (2 * n) + 0.1 * np.eye(n)


def _median_time(fn, repeats):
    fn()  # warm-up
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_rows(cfg):
    """``(kind, name, N, K, M, median_s, repeats, complexity)`` rows."""
    rows = []
    k, m, reps = cfg.bench_k, cfg.bench_m, cfg.bench_repeats
    for n in cfg.bench_n_list:
        rng = np.random.default_rng([cfg.seed, n])
        S = random_hpd_set(rng, k, n)
        W = random_stiefel(n, m, rng)
        fns = {"arithmetic": lambda: arithmetic_mean(S)}
        for measure in cfg.measures:
            fns[str(measure)] = (
                lambda ms=measure: geometric_mean(ms, S, cfg.mean))
        for name, fn in fns.items():
            rows.append(("mean", name, n, k, m, _median_time(fn, reps), reps,
                         MEAN_COMPLEXITY[name]))
        V = compress(W, S)
        for measure in cfg.measures:
            Z = geometric_mean(measure, V, cfg.mean)
            t = _median_time(lambda ms=measure: euclid_grad(ms, W, S, Z), reps)
            rows.append(("gradient", str(measure), n, k, m, t, reps,
                         GRADIENT_COMPLEXITY[str(measure)]))
    return rows


def run_bench(cfg, out_dir=None):
    out = _out_dir(cfg, out_dir)
    rows = bench_rows(cfg)
    header = ("kind", "name", "N", "K", "M", "median_s", "repeats",
              "complexity")
    _write_csv(out / "bench.csv", header,
               [r[:5] + (_fmt(r[5]),) + r[6:] for r in rows])
    _write_json(out / "bench.json", {
        "config": cfg.as_dict(), "metadata": run_metadata(cfg)})
    return rows


__all__ = [
    "CSV_HEADER",
    "DetectorRun",
    "build_detectors",
    "make_training",
    "save_training",
    "learn_projections",
    "save_projections",
    "sweep_one",
    "run_sweep",
    "distance_clouds",
    "separation",
    "run_distances",
    "random_hpd_set",
    "bench_rows",
    "run_bench",
]
