"""Tests for PCA, UMAP and the reduction dispatcher."""

from __future__ import annotations

import numpy as np
import pytest

from biaslens._rand import philox
from biaslens.cluster import kmeans
from biaslens.metrics import contingency, hungarian_accuracy
from biaslens.reduce import (
    PcaModel,
    ReductionConfig,
    jacobi_eigh,
    pca_fit,
    pca_transform,
    reduce,
    umap_embed,
)


def _trustworthiness(X: np.ndarray, Z: np.ndarray, k: int) -> float:
    """Direct rank-based trustworthiness, coded independently of the library."""
    n = X.shape[0]
    d_high = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    d_low = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d_high, np.inf)
    np.fill_diagonal(d_low, np.inf)
    rank_high = np.argsort(np.argsort(d_high, axis=1), axis=1) + 1
    penalty = 0.0
    for i in range(n):
        high_nn = set(np.argsort(d_high[i])[:k].tolist())
        low_nn = np.argsort(d_low[i])[:k]
        for j in low_nn:
            if int(j) not in high_nn:
                penalty += rank_high[i, j] - k
    return 1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty


def test_jacobi_matches_numpy():
    for seed in range(8):
        rng = philox(971, seed)
        d = int(rng.integers(2, 12))
        A = rng.normal(0, 1, (d, d))
        S = (A + A.T) / 2.0
        w, V = jacobi_eigh(S)
        np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(S),
                                   atol=1e-9)
        np.testing.assert_allclose(V.T @ V, np.eye(d), atol=1e-9)
        np.testing.assert_allclose(S @ V, V @ np.diag(w), atol=1e-8)
        assert np.all(np.diff(w) <= 1e-12)


def test_jacobi_corner_cases():
    w, _ = jacobi_eigh(np.diag([1.0, -1.0]))  # zero trace
    np.testing.assert_allclose(w, [1.0, -1.0], atol=1e-12)
    w, V = jacobi_eigh(np.zeros((3, 3)))
    np.testing.assert_allclose(w, 0.0, atol=1e-300)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)
    with pytest.raises(ValueError, match="symmetric"):
        jacobi_eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="square"):
        jacobi_eigh(np.zeros((2, 3)))


def test_pca_line_along_axis():
    t = np.linspace(-2, 2, 9)
    X = np.zeros((9, 3))
    X[:, 1] = t
    model = pca_fit(X, 1)
    np.testing.assert_allclose(model.components, [[0.0, 1.0, 0.0]], atol=1e-9)
    assert model.explained_variance[0] == pytest.approx(np.var(t, ddof=1),
                                                        rel=1e-9)


def test_pca_two_points():
    X = np.array([[0.0, 0.0, 0.0], [2.0, 1.0, -2.0]])
    model = pca_fit(X, 1)
    direction = X[1] - X[0]
    direction /= np.linalg.norm(direction)
    np.testing.assert_allclose(np.abs(model.components[0] @ direction), 1.0,
                               atol=1e-9)
    cov = np.cov(X.T, ddof=1)
    np.testing.assert_allclose(model.explained_variance[0],
                               np.linalg.eigvalsh(cov)[-1], atol=1e-9)


def test_pca_matches_numpy_eigh_dual_route():
    for seed in range(5):
        rng = philox(972, seed)
        X = rng.normal(0, 1, (40, 7)) @ np.diag(rng.uniform(0.2, 3.0, 7))
        model = pca_fit(X, 7)
        cov = np.cov(X.T, ddof=1)
        want = np.linalg.eigvalsh(cov)[::-1]
        np.testing.assert_allclose(model.explained_variance, want, atol=1e-9)
        # components diagonalize the covariance
        np.testing.assert_allclose(
            model.components @ cov @ model.components.T,
            np.diag(model.explained_variance),
            atol=1e-8,
        )


def test_pca_sign_convention():
    rng = philox(973)
    X = rng.normal(0, 1, (30, 5))
    model = pca_fit(X, 5)
    for row in model.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_pca_transform_properties():
    rng = philox(974)
    X = rng.normal(3.0, 2.0, (50, 6))
    model = pca_fit(X, 4)
    Z = pca_transform(model, X)
    assert Z.shape == (50, 4)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(Z.var(axis=0, ddof=1),
                               model.explained_variance, atol=1e-6)
    np.testing.assert_allclose(
        pca_transform(model, np.tile(model.mean, (3, 1))), 0.0, atol=1e-12
    )


def test_pca_total_variance_bound():
    rng = philox(975)
    X = rng.normal(0, 1, (60, 8))
    total = float(np.var(X, axis=0, ddof=1).sum())
    partial = pca_fit(X, 3)
    assert partial.explained_variance.sum() <= total + 1e-9
    full = pca_fit(X, 8)
    assert full.explained_variance.sum() == pytest.approx(total, rel=1e-9)


def test_pca_isotropic_variances_close():
    rng = philox(976)
    X = rng.normal(0, 1, (10_000, 5))
    model = pca_fit(X, 2)
    ev = model.explained_variance
    assert ev[0] / ev[1] < 1.1


def test_pca_rank_deficiency_warns():
    rng = philox(977)
    base = rng.normal(0, 1, (20, 2))
    X = np.hstack([base, base @ rng.normal(0, 1, (2, 4))])  # rank 2 in d=6
    with pytest.warns(UserWarning, match="rank"):
        model = pca_fit(X, 5)
    assert np.all(model.explained_variance[2:] == 0.0)
    model.validate()


def test_pca_rejects_bad_args():
    with pytest.raises(ValueError):
        pca_fit(np.zeros((1, 4)), 1)
    with pytest.raises(ValueError):
        pca_fit(np.zeros((5, 3)), 4)
    with pytest.raises(ValueError):
        pca_fit(np.full((5, 3), np.nan), 2)
    with pytest.raises(ValueError, match="width"):
        pca_transform(
            PcaModel(mean=np.zeros(3), components=np.eye(3),
                     explained_variance=np.ones(3)),
            np.zeros((2, 4)),
        )


def _blob_data(seed: int, n_per: int = 150, d: int = 10, sep: float = 20.0):
    rng = philox(978, seed)
    X = np.vstack([
        rng.normal(0, 1, (n_per, d)),
        rng.normal(0, 1, (n_per, d)) + sep / np.sqrt(d),
    ])
    y = np.repeat(np.arange(2), n_per)
    return X.astype(np.float64), y


def test_umap_deterministic():
    X, _ = _blob_data(0, n_per=60, d=6)
    cfg = ReductionConfig(backend="umap", out_dim=2, umap_epochs=50, seed=7)
    a = umap_embed(X, cfg)
    b = umap_embed(X, cfg)
    np.testing.assert_array_equal(a, b)
    c = umap_embed(X, ReductionConfig(backend="umap", out_dim=2,
                                      umap_epochs=50, seed=8))
    assert not np.array_equal(a, c)


def test_umap_output_shape_and_finite():
    X, _ = _blob_data(1, n_per=50, d=5)
    cfg = ReductionConfig(backend="umap", out_dim=3, umap_epochs=30, seed=0)
    Z = umap_embed(X, cfg)
    assert Z.shape == (100, 3)
    assert np.all(np.isfinite(Z))


def test_umap_separates_blobs():
    X, y = _blob_data(2, n_per=300, d=8)
    cfg = ReductionConfig(backend="umap", out_dim=2, seed=0)
    Z = umap_embed(X, cfg)
    res = kmeans(Z, 2, restarts=20, seed=0)
    acc = hungarian_accuracy(contingency(y, res.assignments)).accuracy
    assert acc >= 0.99


def test_umap_duplicates_stay_together():
    rng = philox(979)
    base = np.vstack([
        rng.normal(0, 1, (50, 6)),
        rng.normal(0, 1, (50, 6)) + 6.0,
    ])
    X = np.vstack([base, base])  # every point duplicated
    # co-location needs a converged layout; the late small-step epochs are
    # what pull zero-distance pairs together
    cfg = ReductionConfig(backend="umap", out_dim=2, seed=3, umap_epochs=600)
    Z = umap_embed(X, cfg)
    gaps = np.linalg.norm(Z[:100] - Z[100:], axis=1)
    share = float(np.mean(gaps <= 2.0 * cfg.umap_min_dist))
    assert share >= 0.95


def test_umap_trustworthy_on_blobs():
    X, _ = _blob_data(3, n_per=100, d=6)
    cfg = ReductionConfig(backend="umap", out_dim=2, seed=1)
    Z = umap_embed(X, cfg)
    assert _trustworthiness(X, Z, k=15) >= 0.90


def test_umap_rejects_small_or_bad_input():
    cfg = ReductionConfig(backend="umap", out_dim=2, umap_neighbors=15)
    with pytest.raises(ValueError, match="neighbors"):
        umap_embed(np.zeros((10, 3)), cfg)
    with pytest.raises(ValueError, match="finite"):
        umap_embed(np.full((40, 3), np.nan), cfg)


def test_reduction_config_validation():
    with pytest.raises(ValueError, match="backend"):
        ReductionConfig(backend="tsne")
    with pytest.raises(ValueError):
        ReductionConfig(out_dim=0)
    with pytest.raises(ValueError):
        ReductionConfig(umap_neighbors=1)
    with pytest.raises(ValueError):
        ReductionConfig(umap_min_dist=-0.5)
    with pytest.raises(ValueError):
        ReductionConfig(umap_epochs=0)


def test_reduce_none_identity():
    rng = philox(980)
    X = rng.normal(0, 1, (20, 5)).astype(np.float32)
    cfg = ReductionConfig(backend="none", out_dim=999)
    out = reduce(X, cfg)
    assert out.dtype == np.float64
    np.testing.assert_array_equal(out, X.astype(np.float64))


def test_reduce_pca_matches_fit_transform():
    rng = philox(981)
    X = rng.normal(0, 1, (30, 6))
    cfg = ReductionConfig(backend="pca", out_dim=3)
    out = reduce(X, cfg)
    model = pca_fit(X, 3)
    np.testing.assert_allclose(out, pca_transform(model, X), atol=1e-12)


def test_reduce_umap_matches_direct_call():
    X, _ = _blob_data(4, n_per=40, d=5)
    cfg = ReductionConfig(backend="umap", out_dim=2, umap_epochs=20, seed=5)
    np.testing.assert_array_equal(reduce(X, cfg), umap_embed(X, cfg))


def test_reduce_rejects_wide_out_dim():
    X = np.zeros((30, 4))
    with pytest.raises(ValueError, match="out_dim"):
        reduce(X, ReductionConfig(backend="pca", out_dim=5))
    with pytest.raises(ValueError, match="out_dim"):
        reduce(np.ones((30, 4)), ReductionConfig(backend="umap", out_dim=5))
