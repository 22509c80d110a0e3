"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line; the lines are also
repeated in the pytest terminal summary.
"""

import time

import numpy as np
import pytest

from acceptance_report import report
from migdetect.geometry import MEASURES, GeometricMeasure, sq_dist
from migdetect.harness.config import ExperimentConfig, parse_config
from migdetect.harness.experiments import (
    bench_rows,
    distance_clouds,
    run_sweep,
    separation,
)
from migdetect.matlin import dlog_kernel
from migdetect.means import (
    MeanConfig,
    geometric_mean,
    jbld_fixed_point_map,
    karcher_residual,
    variance,
)
from migdetect.projection import (
    LearnerConfig,
    compress,
    euclid_grad,
    learn_projection,
    psi_loss,
    random_stiefel,
)
from migdetect.scenario import ClutterScenario, gen_training
from oracles import (
    cosine,
    dlog_quadrature,
    fd_gradient,
    random_hermitian,
    random_hpd,
    random_unitary,
    rel,
)


def _log_scale(X):
    return 1.0 + np.sum(np.log(np.linalg.eigvalsh(X)) ** 2, axis=-1)


def test_criterion_1_geometry_axioms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = {"self": 0.0, "sym": 0.0, "inv": 0.0}
    pairs = 0
    for n in range(1, 9):
        count = 125
        power = np.exp(rng.normal(0.0, 2.0, (count, 1, 1)))
        X = random_hpd(rng, n, size=count) * power
        Y = random_hpd(rng, n, size=count) * power[::-1]
        A = (rng.standard_normal((count, n, n))
             + 1j * rng.standard_normal((count, n, n)) + 3 * np.eye(n))
        U = random_unitary(rng, n, size=count)
        pairs += count
        for m in MEASURES:
            d = sq_dist(m, X, Y)
            self_d = sq_dist(m, X, X)
            worst["self"] = max(worst["self"],
                                float(np.max(self_d / _log_scale(X))))
            sym = np.abs(sq_dist(m, Y, X) - d) / np.maximum(d, 1e-300)
            worst["sym"] = max(worst["sym"], float(np.max(sym)))
            T = U if m is GeometricMeasure.LEM else A
            Th = np.conj(np.swapaxes(T, -1, -2))
            dt = sq_dist(m, T @ X @ Th, T @ Y @ Th)
            worst["inv"] = max(worst["inv"], float(np.max(
                np.abs(dt - d) / np.maximum(d, 1e-300))))
    elapsed = time.perf_counter() - t0
    ok = (pairs >= 1000 and worst["self"] <= 1e-12 and worst["sym"] <= 1e-10
          and worst["inv"] <= 1e-8 and elapsed < 30)
    report(1, ok, f"{pairs} pairs, self {worst['self']:.1e}, symmetry "
                  f"{worst['sym']:.1e}, invariance {worst['inv']:.1e}, "
                  f"{elapsed:.1f}s")
    assert ok


def test_criterion_2_means():
    rng = np.random.default_rng(2)
    scalars = np.array([[[1.0]], [[4.0]]])
    scalar_err = max(abs(geometric_mean(m, scalars)[0, 0] - 2.0)
                     for m in MEASURES)
    riccati = jbld = stationarity = 0.0
    idem = perm = 0.0
    for _ in range(20):
        S = random_hpd(rng, 5, size=6) * np.exp(rng.normal(0, 1, (6, 1, 1)))
        G = geometric_mean("SKLD", S)
        A = np.sum(np.linalg.inv(S), axis=0)
        riccati = max(riccati, rel(G @ A @ G, np.sum(S, axis=0)))
        G = geometric_mean("JBLD", S)
        jbld = max(jbld, rel(jbld_fixed_point_map(S, G), G))
        G = geometric_mean("AIRM", S)
        scale = np.sqrt(np.sum(np.log(np.linalg.eigvalsh(S)) ** 2))
        stationarity = max(stationarity,
                           float(karcher_residual(S, G)) / max(1.0, scale))
        P = S[0]
        p = rng.permutation(6)
        for m in MEASURES:
            idem = max(idem, rel(geometric_mean(m, np.stack([P] * 4)), P))
            perm = max(perm, rel(geometric_mean(m, S[p]),
                                 geometric_mean(m, S)))
    ok = (scalar_err <= 1e-8 and riccati <= 1e-10 and jbld <= 1e-8
          and stationarity <= 1e-6 and idem <= 1e-8 and perm <= 1e-8)
    report(2, ok, f"scalar {scalar_err:.1e}, Riccati {riccati:.1e}, JBLD "
                  f"{jbld:.1e}, AIRM stationarity {stationarity:.1e}, "
                  f"idempotence {idem:.1e}, permutation {perm:.1e}")
    assert ok


def test_criterion_3_dlog_kernel():
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(200):
        cond = 1e3 if i % 4 == 0 else 10.0 ** rng.uniform(0, 3)
        V = random_hpd(rng, 5, cond=cond) * np.exp(rng.normal())
        L = random_hermitian(rng, 5)
        worst = max(worst, rel(dlog_kernel(V, L), dlog_quadrature(V, L, 64)))
    ok = worst <= 1e-8
    report(3, ok, f"200 order-5 cases, cond <= 1e3, worst rel {worst:.1e}")
    assert ok


def test_criterion_4_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    data = random_hpd(rng, 6, size=8)
    W = random_stiefel(6, 3, rng)
    cos = {}
    for m in MEASURES:
        Z = geometric_mean(m, compress(W, data))
        G = euclid_grad(m, W, data, Z)
        F = fd_gradient(lambda X: psi_loss(m, X, data, Z), W)
        cos[str(m)] = cosine(G, F)
    elapsed = time.perf_counter() - t0
    ok = min(cos.values()) >= 0.999 and elapsed < 60
    report(4, ok, ", ".join(f"{k} cos {v:.9f}" for k, v in cos.items())
           + f", {elapsed:.1f}s")
    assert ok


def test_criterion_5_rgd_loop():
    sc = ClutterScenario()
    data = gen_training(sc, 150, 150, 25.0, seed=5).data
    cfg = LearnerConfig(outer_iterations=15, rgd_iterations=10)
    defect = 0.0
    psi_ok = trace_ok = True
    full_err = 0.0
    for m in MEASURES:
        res = learn_projection(m, data, 4, cfg)
        defect = max(defect, res.max_orthonormality_defect)
        for steps in res.psi_traces:
            psi_ok &= all(b < a for a, b in zip(steps, steps[1:]))
        tr = res.objective_trace
        trace_ok &= all(b >= a for a, b in zip(tr, tr[1:]))
        full = learn_projection(m, data, 8, LearnerConfig(
            outer_iterations=3, rgd_iterations=3))
        ref = variance(m, data, geometric_mean(m, data))
        full_err = max(full_err, abs(full.variance - ref) / ref)
    ok = defect <= 1e-10 and psi_ok and trace_ok and full_err <= 1e-6
    report(5, ok, f"max defect {defect:.1e}, psi decreasing {psi_ok}, "
                  f"objective nondecreasing {trace_ok}, m=n rel {full_err:.1e}")
    assert ok


# criterion 6 ----------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_sweep(tmp_path_factory):
    cfg = ExperimentConfig(m_list=(4,), k_multipliers=(1.0,))
    out = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    manifest = run_sweep(cfg, out)
    elapsed = time.perf_counter() - t0
    runs = {r["detector"]: r for r in manifest["runs"]}
    return cfg, runs, elapsed, manifest


def _curve(run):
    items = sorted((float(k), v) for k, v in run["pd"].items())
    return [s for s, _ in items], [p for _, p in items]


def test_criterion_6a_independent_pfa(desk_sweep):
    _, runs, _, manifest = desk_sweep
    pfa = {name: r["empirical_pfa"] for name, r in runs.items()}
    ok = (not manifest["errors"]
          and all(p is not None and 0.005 <= p <= 0.015 for p in pfa.values()))
    report("6a", ok, "empirical Pfa " + ", ".join(
        f"{k} {v}" for k, v in sorted(pfa.items())))
    assert ok


def test_criterion_6b_monotone_curves(desk_sweep):
    _, runs, _, _ = desk_sweep
    worst = {}
    for name, r in runs.items():
        _, pd = _curve(r)
        worst[name] = max([0.0] + [a - b for a, b in zip(pd, pd[1:])])
    ok = max(worst.values()) <= 0.05
    report("6b", ok, f"largest Pd drop {max(worst.values()):.3f}")
    assert ok


def test_criterion_6c_projection_helps_jbld(desk_sweep):
    _, runs, _, _ = desk_sweep
    scr, unproj = _curve(runs["mig_JBLD"])
    _, proj = _curve(runs["mig-proj_JBLD"])
    points = [(s, u, p) for s, u, p in zip(scr, unproj, proj)
              if 0.3 <= u <= 0.7]
    ok = bool(points) and all(p >= u - 0.03 for _, u, p in points)
    detail = "; ".join(f"SCR {s:g} dB: projected {p:.3f} vs unprojected "
                       f"{u:.3f}" for s, u, p in points)
    report("6c", ok, detail or "no SCR point with unprojected Pd in [0.3, 0.7]")
    assert ok


def test_criterion_6d_mig_versus_amf(desk_sweep):
    _, runs, _, _ = desk_sweep
    scr, amf = _curve(runs["amf"])
    worst = None
    for name, r in runs.items():
        if not name.startswith("mig"):
            continue
        _, pd = _curve(r)
        for s, a, p in zip(scr, amf, pd):
            gap = p - (a - 0.03)
            if worst is None or gap < worst[0]:
                worst = (gap, name, s, p, a)
    ok = worst[0] >= 0
    _, name, s, p, a = worst
    report("6d", ok, f"worst case {name} at SCR {s:g} dB: Pd {p:.3f} vs "
                     f"AMF {a:.3f}")
    assert ok


def test_criterion_6_runtime(desk_sweep):
    _, _, elapsed, manifest = desk_sweep
    ok = elapsed < 600
    report("6-runtime", ok, f"desk-scale sweep {elapsed:.0f}s on "
                            f"{manifest['workers']} worker(s)")
    assert ok


def test_criterion_7_complexity_trends():
    cfg = ExperimentConfig(bench_n_list=(32,), bench_k=16, bench_repeats=20)
    t = {r[1]: r[5] for r in bench_rows(cfg) if r[0] == "mean"}
    ok = (t["arithmetic"] == min(t.values())
          and t["AIRM"] >= 2 * t["LEM"] and t["SKLD"] < t["AIRM"])
    report(7, ok, "N=32 K=16 median ms: " + ", ".join(
        f"{k} {v * 1e3:.3f}" for k, v in t.items()))
    assert ok


def test_criterion_8_distance_separation():
    clouds = distance_clouds(ExperimentConfig())
    sep = {}
    ordered = True
    for name, (c, t) in clouds.items():
        ordered &= bool(np.mean(c) < np.mean(t))
        sep[name] = separation(c, t)
    ok = ordered and min(sep.values()) >= 1.0
    report(8, ok, "separation in pooled std: " + ", ".join(
        f"{k} {v:.2f}" for k, v in sep.items()))
    assert ok


def test_criterion_9_serial_parallel_identical(tmp_path):
    cfg = parse_config("""
    experiment.m_list = [4]
    experiment.scr_db = [10, 20]
    experiment.trials_threshold = 1000
    experiment.trials_pfa_check = 500
    experiment.trials_pd = 500
    training.j = 100
    training.k = 100
    learner.outer_iterations = 5
    """)
    run_sweep(cfg, tmp_path / "serial", n_jobs=1)
    run_sweep(cfg, tmp_path / "parallel", n_jobs=3)
    files = sorted(p.name for p in (tmp_path / "serial").glob("*.csv"))
    same = [(tmp_path / "serial" / f).read_bytes()
            == (tmp_path / "parallel" / f).read_bytes() for f in files]
    ok = len(files) == 10 and all(same)
    report(9, ok, f"{sum(same)}/{len(files)} CSV files byte-identical")
    assert ok
