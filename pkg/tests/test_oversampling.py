import warnings

import numpy as np
import pytest
from scipy import stats

from synover.data import LabeledDataset, partition_classes
from synover.oversampling import (BandwidthError, BandwidthSpec, OversamplerConfig, SmoteConfig, kdeo_sample,
                                  oversample_to_balance, psd_cholesky, scott_bandwidth, smote_interpolate,
                                  smote_sample)
from synover.rng import RngStream
from oracles import brute_force_knn, ecdf_sup_distance, point_on_segment_residual


def test_scott_identity_covariance():
    # any sample whose covariance is exactly I: rows of sqrt(n-1) * orthonormal, centered
    n, d = 256, 4
    g = np.random.default_rng(0)
    A = g.normal(size=(n, d))
    A -= A.mean(axis=0)
    q, _ = np.linalg.qr(A)
    X = q * np.sqrt(n - 1)
    bw = scott_bandwidth(X)
    np.testing.assert_allclose(bw.factor, 0.5 * np.eye(d), atol=1e-12)


def test_scott_scale_linear():
    X = np.random.default_rng(1).normal(size=(50, 3))
    np.testing.assert_allclose(scott_bandwidth(X, scale=2.0).factor, 2 * scott_bandwidth(X).factor, rtol=1e-14)


def test_scott_degenerate_line():
    t = np.linspace(-1, 1, 30)
    X = np.column_stack([t, 2 * t])
    bw = scott_bandwidth(X)
    L = bw.factor
    assert np.allclose(L[:, 1], 0.0)
    C = np.cov(X, rowvar=False) * 30 ** (-2 / 6)
    np.testing.assert_allclose(L @ L.T, C, rtol=1e-10, atol=1e-14)


def test_scott_errors():
    with pytest.raises(BandwidthError):
        scott_bandwidth(np.zeros((1, 2)))
    with pytest.raises(BandwidthError):
        scott_bandwidth(np.zeros((5, 2)), scale=0.0)
    with pytest.raises(BandwidthError):
        psd_cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_psd_factor_reconstructs():
    g = np.random.default_rng(2)
    B = g.normal(size=(5, 3))
    C = B @ B.T  # rank 3 in 5-d
    L = psd_cholesky(C)
    assert np.linalg.norm(L @ L.T - C) / np.linalg.norm(C) < 1e-10
    assert np.allclose(L, np.tril(L))


def test_smote_single_point():
    X = np.array([[1.5, -2.0]])
    res = smote_sample(X, SmoteConfig(5), 5, RngStream(0))
    np.testing.assert_array_equal(res.synthetic, np.repeat(X, 5, axis=0))


def test_smote_lambda_zero_returns_seed():
    X = np.random.default_rng(3).normal(size=(10, 2))
    seeds = np.arange(10)
    nbrs = (seeds + 1) % 10
    out = smote_interpolate(X, seeds, nbrs, np.zeros(10))
    np.testing.assert_array_equal(out, X)


def test_smote_one_dimensional_segments():
    X = np.array([[0.0], [1.0], [2.0]])
    res = smote_sample(X, SmoteConfig(1), 10_000, RngStream(4))
    for p, s, nb in zip(res.synthetic, res.seed_index, res.neighbor_index):
        assert nb == brute_force_knn(X, X[s], 1, exclude=s)[0]
        assert point_on_segment_residual(p, X[s], X[nb]) <= 1e-12
    assert res.synthetic.min() >= 0 and res.synthetic.max() <= 2
    freq = np.bincount(res.seed_index, minlength=3) / 10_000
    np.testing.assert_allclose(freq, 1 / 3, atol=0.02)


def test_smote_convex_hull_via_provenance():
    X = np.random.default_rng(5).normal(size=(40, 3))
    res = smote_sample(X, SmoteConfig(5), 10_000, RngStream(5))
    resid = np.array([point_on_segment_residual(p, X[s], X[n])
                      for p, s, n in zip(res.synthetic, res.seed_index, res.neighbor_index)])
    seg = np.linalg.norm(X[res.seed_index] - X[res.neighbor_index], axis=1)
    assert np.all(resid <= 1e-12 * np.maximum(seg, 1.0))
    recon = (1 - res.lam)[:, None] * X[res.seed_index] + res.lam[:, None] * X[res.neighbor_index]
    np.testing.assert_allclose(res.synthetic, recon, rtol=0, atol=1e-15)


def test_smote_uniform_seed_distribution():
    X = np.random.default_rng(6).normal(size=(20, 2))
    res = smote_sample(X, SmoteConfig(5), 100_000, RngStream(6))
    counts = np.bincount(res.seed_index, minlength=20)
    assert stats.chisquare(counts).pvalue > 0.001


def test_smote_k_clamped_with_warning():
    X = np.random.default_rng(7).normal(size=(4, 2))
    with pytest.warns(RuntimeWarning, match="clamped"):
        res = smote_sample(X, SmoteConfig(10), 50, RngStream(0))
    assert res.k_used == 3 and res.clamped


def test_smote_errors():
    with pytest.raises(ValueError, match="empty minority"):
        smote_sample(np.empty((0, 2)), SmoteConfig(5), 3, RngStream(0))
    with pytest.raises(ValueError):
        smote_sample(np.zeros((3, 2)), SmoteConfig(1), -1, RngStream(0))
    with pytest.raises(ValueError):
        SmoteConfig(0)


def test_smote_deterministic():
    X = np.random.default_rng(8).normal(size=(30, 2))
    a = smote_sample(X, SmoteConfig(5), 100, RngStream(9))
    b = smote_sample(X, SmoteConfig(5), 100, RngStream(9))
    np.testing.assert_array_equal(a.synthetic, b.synthetic)
    np.testing.assert_array_equal(a.neighbor_index, b.neighbor_index)


def test_kdeo_zero_bandwidth_is_bootstrap():
    X = np.random.default_rng(10).normal(size=(15, 2))
    res = kdeo_sample(X, BandwidthSpec.scalar(0.0), 500, RngStream(0))
    np.testing.assert_array_equal(res.synthetic, X[res.seed_index])


def test_kdeo_displacement_covariance():
    X = np.random.default_rng(11).normal(size=(25, 2))
    res = kdeo_sample(X, BandwidthSpec.matrix(0.5 * np.eye(2)), 100_000, RngStream(1))
    disp = res.synthetic - X[res.seed_index]
    C = np.cov(disp, rowvar=False)
    np.testing.assert_allclose(np.diag(C), 0.25, rtol=0.02)
    assert abs(C[0, 1]) < 0.02 * 0.25


def test_kdeo_single_point_standard_normal():
    res = kdeo_sample(np.zeros((1, 2)), BandwidthSpec.matrix(np.eye(2)), 100_000, RngStream(2))
    for j in range(2):
        assert ecdf_sup_distance(res.synthetic[:, j], stats.norm.cdf) < 0.01


def test_kdeo_mean_displacement_centered():
    X = np.random.default_rng(12).normal(size=(30, 3))
    L = np.array([[0.4, 0, 0], [0.1, 0.3, 0], [0.0, -0.2, 0.5]])
    res = kdeo_sample(X, BandwidthSpec.matrix(L), 100_000, RngStream(3))
    disp = (res.synthetic - X[res.seed_index]).mean(axis=0)
    assert np.linalg.norm(disp) < 4 * np.linalg.norm(L) / np.sqrt(100_000 * 3)


def test_kdeo_scalar_matches_matrix():
    X = np.random.default_rng(13).normal(size=(10, 3))
    a = kdeo_sample(X, BandwidthSpec.scalar(0.3), 200, RngStream(4))
    b = kdeo_sample(X, BandwidthSpec.matrix(0.3 * np.eye(3)), 200, RngStream(4))
    np.testing.assert_array_equal(a.synthetic, b.synthetic)


def test_kdeo_errors():
    with pytest.raises(ValueError):
        kdeo_sample(np.empty((0, 2)), BandwidthSpec.scalar(1.0), 3, RngStream(0))
    with pytest.raises(ValueError):
        kdeo_sample(np.zeros((2, 2)), BandwidthSpec.scalar(1.0), -2, RngStream(0))


def _imbalanced(n1=30, n0=100, seed=0):
    g = np.random.default_rng(seed)
    X = np.vstack([g.normal(1, 1, size=(n1, 2)), g.normal(-1, 1, size=(n0, 2))])
    return LabeledDataset(X, np.array([1] * n1 + [0] * n0))


@pytest.mark.parametrize("method", ["smote", "kdeo"])
def test_balance_pure_synthetic(method):
    ds = _imbalanced()
    out = oversample_to_balance(ds, OversamplerConfig(method), RngStream(0))
    view = partition_classes(out)
    assert (view.n1, view.n0) == (100, 100)
    assert np.all(out.ids[out.labels == 1] == -1)
    assert set(out.ids[out.labels == 0]) == set(range(30, 130))


def test_balance_topup():
    ds = _imbalanced()
    out = oversample_to_balance(ds, OversamplerConfig("smote", mode="topup"), RngStream(0))
    minority_ids = out.ids[out.labels == 1]
    assert (minority_ids >= 0).sum() == 30 and (minority_ids == -1).sum() == 70


def test_balance_empty_minority_noop():
    ds = _imbalanced(n1=0)
    assert oversample_to_balance(ds, OversamplerConfig("kdeo"), RngStream(0)) is ds


def test_unknown_method():
    with pytest.raises(ValueError):
        OversamplerConfig("adasyn")


def test_balance_deterministic_and_clamp_quiet():
    ds = _imbalanced(n1=3, n0=20)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = oversample_to_balance(ds, OversamplerConfig("smote", k=5), RngStream(5))
    b = oversample_to_balance(ds, OversamplerConfig("smote", k=5), RngStream(5))
    np.testing.assert_array_equal(a.features, b.features)
