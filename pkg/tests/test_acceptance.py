"""End-to-end acceptance checks, one recorded PASS/FAIL line per criterion."""
import time

import numpy as np
import pytest
from scipy import stats

from synover import harness, simgen
from synover.classifiers import fit_ks_plugin, fit_logistic, logistic_grad, logistic_loss
from synover.cli import main
from synover.data import LabeledDataset
from synover.density import kde_fit, l1_error_estimate
from synover.evaluation import am_risk, concentration_audit, load_test_functions
from synover.neighbors import NeighborIndex
from synover.oversampling import BandwidthSpec, OversamplerConfig, SmoteConfig, kdeo_sample, scott_bandwidth, \
    smote_sample
from synover.rng import RngStream, egpd_cdf, gpd_cdf, sample_egpd, sample_exponential, sample_gpd
from oracles import brute_force_knn, central_difference_grad, ecdf_sup_distance, point_on_segment_residual

EX2 = {"generator": {"family": "ex2", "d": 4, "n": 1000}}


def _finish(record, name, ok, detail, start, budget):
    elapsed = time.perf_counter() - start
    within = elapsed < budget
    record(name, ok and within, f"{detail}; {elapsed:.1f}s (budget {budget:.0f}s)")
    assert ok, detail
    assert within, f"runtime {elapsed:.1f}s over {budget}s"


def test_c1_smote_geometry(acceptance_record):
    start = time.perf_counter()
    X = RngStream(101).generator.normal(size=(200, 3))
    k = 5
    res = smote_sample(X, SmoteConfig(k), 10_000, RngStream(102))
    worst, bad_nbr = 0.0, 0
    knn_cache = {}
    for p, s, nb in zip(res.synthetic, res.seed_index, res.neighbor_index):
        seg = np.linalg.norm(X[s] - X[nb])
        worst = max(worst, point_on_segment_residual(p, X[s], X[nb]) / max(seg, 1e-300))
        if s not in knn_cache:
            knn_cache[s] = set(brute_force_knn(X, X[s], k, exclude=s))
        bad_nbr += nb not in knn_cache[s]
    ok = worst < 1e-12 and bad_nbr == 0
    _finish(acceptance_record, "C1 SMOTE geometry", ok,
            f"max residual/segment {worst:.2e}, neighbours outside brute-force k-NN {bad_nbr}", start, 5)


def test_c2_kdeo_degeneracy_and_law(acceptance_record):
    start = time.perf_counter()
    X = RngStream(201).generator.normal(size=(50, 2))
    tiny = kdeo_sample(X, BandwidthSpec.scalar(1e-13), 10_000, RngStream(202)).synthetic
    _, dist = NeighborIndex(X).query(tiny, 1)
    max_copy = float(dist.max())
    L = np.array([[1.0, 0.0], [0.6, 0.8]])
    res = kdeo_sample(X, BandwidthSpec.matrix(L), 100_000, RngStream(203))
    C = np.cov(res.synthetic - X[res.seed_index], rowvar=False)
    rel = float(np.max(np.abs(C - L @ L.T) / np.abs(L @ L.T)))
    ok = max_copy < 1e-9 and rel < 0.02
    _finish(acceptance_record, "C2 KDEO degeneracy and law", ok,
            f"bootstrap max distance {max_copy:.1e}, worst covariance entry error {rel:.2%}", start, 10)


def test_c3_am_risk_identities(acceptance_record):
    start = time.perf_counter()
    truth = np.array([1] * 50 + [0] * 50)
    const = am_risk(np.zeros(100, dtype=int), truth).risk
    g = RngStream(301).generator
    worst = 0.0
    for _ in range(100):
        y = g.integers(0, 2, 80)
        y[:2] = [0, 1]
        p = g.integers(0, 2, 80)
        worst = max(worst, abs(am_risk(p, y).risk + am_risk(1 - p, y).risk - 1.0))
    ok = const == 0.5 and worst < 1e-12
    _finish(acceptance_record, "C3 AM-risk identities", ok,
            f"constant rule risk {const}, complement identity max error {worst:.1e}", start, 1)


def _audit_ratio(method):
    funcs = load_test_functions(2)
    cfg = OversamplerConfig(method, k=5)
    medians = {}
    for n1 in (200, 1600):
        reports = concentration_audit(lambda r, n: simgen.sample_ex4_minority(r, n), cfg, n1, 4 * n1, funcs,
                                      reference_size=100_000, replications=50, rng=RngStream(400, (n1,)))
        medians[n1] = float(np.median([r.sup_discrepancy for r in reports]))
    return medians[200] / medians[1600], medians


@pytest.mark.slow
def test_c4a_smote_concentration_rate(acceptance_record):
    start = time.perf_counter()
    ratio, med = _audit_ratio("smote")
    _finish(acceptance_record, "C4a SMOTE concentration rate", ratio >= 1.8,
            f"median sup discrepancy {med[200]:.4f} -> {med[1600]:.4f}, ratio {ratio:.2f} (need >= 1.8)", start, 180)


@pytest.mark.slow
def test_c4b_kdeo_concentration_rate(acceptance_record):
    start = time.perf_counter()
    ratio, med = _audit_ratio("kdeo")
    _finish(acceptance_record, "C4b KDEO concentration rate", ratio >= 1.8,
            f"median sup discrepancy {med[200]:.4f} -> {med[1600]:.4f}, ratio {ratio:.2f} (need >= 1.8)", start, 180)


def test_c5_kde_l1_rate(acceptance_record):
    start = time.perf_counter()
    med = {}
    for n in (400, 6400):
        errs = []
        for s in range(20):
            pts = RngStream(500, (n, s)).generator.standard_normal((n, 1))
            model = kde_fit(pts, scott_bandwidth(pts))
            errs.append(l1_error_estimate(model, lambda x: stats.norm.pdf(x[:, 0]), (-8.0, 8.0), 4000))
        med[n] = float(np.median(errs))
    ratio = med[400] / med[6400]
    _finish(acceptance_record, "C5 KDE L1 rate", ratio >= 1.8,
            f"median L1 {med[400]:.4f} -> {med[6400]:.4f}, ratio {ratio:.2f} (need >= 1.8)", start, 60)


@pytest.fixture(scope="module")
def ex2_runs():
    spec = harness.ExperimentSpec(source=EX2, methods=("knn+smote", "ks+kdeo", "knn+kdeo", "knn+kdeo+cv"),
                                  replications=50, levels=(0.10, 0.20), seed=0)
    start = time.perf_counter()
    rows = harness.run_experiment(spec)
    elapsed = time.perf_counter() - start
    means = {(s["method"], s["p1"]): s["mean_am_risk"] for s in harness.summarize(rows)}
    failed = sum(1 for r in rows if r["error"])
    return means, failed, elapsed


@pytest.mark.slow
def test_c6_ks_kdeo_beats_knn_smote(acceptance_record, ex2_runs):
    means, failed, elapsed = ex2_runs
    ks, knn = means[("ks+kdeo", 0.10)], means[("knn+smote", 0.10)]
    ok = ks <= knn and failed == 0 and elapsed < 600
    acceptance_record("C6 KS+KDEO vs KNN+SMOTE ordering", ok,
                      f"mean AM-risk {ks:.4f} vs {knn:.4f} at p1=0.10; shared run {elapsed:.0f}s (budget 600s)")
    assert ok


@pytest.mark.slow
def test_c7_cv_improves_kdeo(acceptance_record, ex2_runs):
    means, failed, elapsed = ex2_runs
    parts, ok = [], failed == 0 and elapsed < 900
    for p1 in (0.20, 0.10):
        cv, base = means[("knn+kdeo+cv", p1)], means[("knn+kdeo", p1)]
        ok &= cv <= base + 0.01
        parts.append(f"p1={p1}: {cv:.4f} vs {base:.4f}")
    acceptance_record("C7 KDEO-CV improvement", ok, "; ".join(parts) + f"; shared run {elapsed:.0f}s (budget 900s)")
    assert ok


@pytest.mark.slow
def test_c8_lr_insensitive_to_oversampling_parameters(acceptance_record):
    start = time.perf_counter()
    spec = harness.ExperimentSpec(source=EX2, methods=("lr+kdeo", "lr+smote"), replications=20, levels=(0.10,),
                                  seed=0)
    rows = harness.sweep(spec, "kdeo_scale", [0.05, 1.0, 3.0]) + harness.sweep(spec, "smote_k", [7, 35, 65])
    means = [s["mean_am_risk"] for s in harness.summarize(rows)
             if (s["method"] == "lr+kdeo") == (s["axis"] == "kdeo_scale")]
    spread = max(means) - min(means)
    _finish(acceptance_record, "C8 LR insensitivity", spread < 0.02 and len(means) == 6,
            f"AM-risk range {spread:.4f} over 6 settings (need < 0.02)", start, 300)


@pytest.mark.slow
def test_c9_ks_plugin_near_bayes(acceptance_record):
    start = time.perf_counter()
    w = simgen.ex4_weights(0.5)
    spec = simgen.GeneratorSpec("ex4", params={"weights": w.tolist()}, n=4000)
    excess, agree = [], []
    for rep in range(50):
        root = RngStream(900, (rep,))
        train = simgen.generate(spec, root.substream(0))
        valid = simgen.balanced_validation_set(spec, root.substream(1))
        pred = fit_ks_plugin(train, rate_count="per_class").predict(valid.features).labels
        bayes = simgen.ex4_bayes_rule(valid.features, w)
        excess.append(am_risk(pred, valid.labels).risk - am_risk(bayes, valid.labels).risk)
        agree.append(float(np.mean(pred == bayes)))
    ok = np.mean(excess) < 0.05 and min(agree) >= 0.95
    _finish(acceptance_record, "C9 KS plug-in vs Bayes rule", ok,
            f"mean excess AM-risk {np.mean(excess):.4f}, agreement min {min(agree):.3f} "
            f"mean {np.mean(agree):.3f}", start, 120)


def test_c10_sampler_laws(acceptance_record):
    start = time.perf_counter()
    n = 100_000
    gpd = sample_gpd(RngStream(1001), 2.0, 0.5, size=n)
    egpd = sample_egpd(RngStream(1002), 1.7, 2.0, 0.5, size=n)
    expo = sample_exponential(RngStream(1003), 10.0, size=n)
    dists = {
        "gpd": ecdf_sup_distance(gpd, lambda z: gpd_cdf(z, 2.0, 0.5)),
        "egpd": ecdf_sup_distance(egpd, lambda z: egpd_cdf(z, 1.7, 2.0, 0.5)),
        "exp": ecdf_sup_distance(expo, lambda z: stats.expon.cdf(z, scale=0.1)),
    }
    same = np.array_equal(sample_egpd(RngStream(1004), 1.0, 2.0, 0.5, size=n),
                          sample_gpd(RngStream(1004), 2.0, 0.5, size=n))
    ok = max(dists.values()) < 0.01 and same
    detail = ", ".join(f"{k} {v:.4f}" for k, v in dists.items())
    _finish(acceptance_record, "C10 sampler laws", ok, f"sup CDF distance {detail}; kappa=1 identical {same}",
            start, 10)


def test_c11_logistic_optimizer(acceptance_record):
    start = time.perf_counter()
    g = RngStream(1101).generator
    X, y = g.normal(size=(100, 4)), g.integers(0, 2, 100).astype(float)
    worst = 0.0
    for _ in range(20):
        theta = g.normal(size=5)
        ana = logistic_grad(theta, X, y)
        num = central_difference_grad(lambda t: logistic_loss(t, X, y), theta)
        worst = max(worst, float(np.linalg.norm(num - ana) / np.linalg.norm(ana)))
    labels = np.array([1] * 25 + [0] * 75)
    model = fit_logistic(LabeledDataset(g.normal(size=(100, 4)), labels), l1_penalty=1e6)
    gap = abs(model.intercept - np.log(25 / 75))
    ok = worst < 1e-6 and gap < 1e-3
    _finish(acceptance_record, "C11 logistic optimizer", ok,
            f"gradient rel. error {worst:.1e}, intercept gap {gap:.1e}", start, 5)


def test_c12_experiment_determinism(acceptance_record, tmp_path):
    import json
    start = time.perf_counter()
    cfg = {"source": {"generator": {"family": "ex2", "d": 4, "n": 300}},
           "methods": ["knn+smote", "ks+kdeo", "lr", "bbc"], "replications": 3, "levels": [0.1],
           "mc_size": 200000, "validation_size": 2000, "seed": 11}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    texts = []
    for run in ("a", "b"):
        main(["experiment", "--config", str(path), "--output", str(tmp_path / f"{run}.csv")])
        lines = (tmp_path / f"{run}.csv").read_text().splitlines()
        texts.append("\n".join(",".join(line.split(",")[:-1]) for line in lines))
    same = texts[0] == texts[1]
    _finish(acceptance_record, "C12 experiment determinism", same,
            f"byte-identical CSV without wall time: {same}", start, 60)
