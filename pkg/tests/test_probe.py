"""Tests for the linear probe, k-NN and prompt characterization."""

from __future__ import annotations

import numpy as np
import pytest

from biaslens._rand import philox
from biaslens.corpus import EmbeddingSet
from biaslens.pipeline import ExperimentConfig
from biaslens.probe import (
    DEFAULT_PROMPTS,
    CharacterizationResult,
    ProbeConfig,
    ProbeModel,
    PromptBank,
    assign_prompt_categories,
    characterize,
    eval_probe,
    knn_classify,
    load_probe,
    probe_loss_and_grad,
    save_probe,
    split_stratified,
    train_linear_probe,
    two_corpus_probe_vs_cluster,
)
from biaslens.reduce import ReductionConfig


def _two_blobs(seed: int, n_per: int = 40, d: int = 5, sep: float = 8.0):
    rng = philox(960, seed)
    offset = np.zeros(d)
    offset[0] = sep
    X = np.vstack([
        rng.normal(0, 1, (n_per, d)),
        rng.normal(0, 1, (n_per, d)) + offset,
    ])
    y = np.repeat(np.arange(2), n_per)
    return X, y


def test_gradient_matches_finite_differences():
    rng = philox(961)
    X = rng.normal(0, 1, (5, 3))
    y = rng.integers(0, 2, 5)
    y[0] = 0
    y[1] = 1
    max_rel = 0.0
    for trial in range(10):
        trng = philox(962, trial)
        weights = trng.normal(0, 1, (2, 3))
        bias = trng.normal(0, 1, 2)
        _, d_weights, d_bias = probe_loss_and_grad(weights, bias, X, y, 1e-4)
        eps = 1e-4
        flat = np.concatenate([weights.ravel(), bias])
        analytic = np.concatenate([d_weights.ravel(), d_bias])
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            for sign, store in ((1.0, 0), (-1.0, 1)):
                bumped = flat.copy()
                bumped[i] += sign * eps
                w_b = bumped[:6].reshape(2, 3)
                b_b = bumped[6:]
                loss = probe_loss_and_grad(w_b, b_b, X, y, 1e-4)[0]
                if store == 0:
                    plus = loss
                else:
                    minus = loss
            numeric[i] = (plus - minus) / (2.0 * eps)
        scale = np.maximum(np.abs(analytic), 1e-8)
        max_rel = max(max_rel, float(np.max(np.abs(analytic - numeric) / scale)))
    assert max_rel <= 1e-4


def test_probe_fits_separable_blobs():
    X, y = _two_blobs(0)
    model = train_linear_probe(X, y)
    acc, table = eval_probe(model, X, y)
    assert acc == 1.0
    assert table.counts.shape == (2, 2)
    assert np.asarray(model.train_losses).shape == (501,)


def test_probe_loss_non_increasing():
    X, y = _two_blobs(1)
    model = train_linear_probe(X, y, ProbeConfig(learning_rate=2.0, epochs=80))
    losses = np.asarray(model.train_losses)
    assert np.all(np.diff(losses) <= 1e-12)


def test_probe_shuffled_labels_near_chance():
    rng = philox(963)
    accs = []
    for trial in range(10):
        X, y = _two_blobs(trial + 10, n_per=90)
        y_shuffled = rng.permutation(y)
        train, test = split_stratified(y_shuffled, seed=trial)
        model = train_linear_probe(X[train], y_shuffled[train],
                                   ProbeConfig(epochs=200))
        acc, _ = eval_probe(model, X[test], y_shuffled[test])
        accs.append(acc)
    assert float(np.mean(accs)) == pytest.approx(0.5, abs=0.03)


def test_probe_deterministic():
    X, y = _two_blobs(2)
    a = train_linear_probe(X, y)
    b = train_linear_probe(X, y)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.bias, b.bias)


def test_probe_rejects_bad_input():
    X = np.zeros((4, 2))
    with pytest.raises(ValueError, match="2 classes"):
        train_linear_probe(X, np.zeros(4, dtype=int))
    with pytest.raises(ValueError):
        train_linear_probe(X, np.array([0, 1]))
    with pytest.raises(ValueError, match="n >= k"):
        train_linear_probe(np.eye(2), np.array([0, 2]))
    with pytest.raises(ValueError):
        ProbeConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        ProbeConfig(epochs=0)
    with pytest.raises(ValueError):
        ProbeConfig(l2=-1.0)


def test_probe_model_validation():
    with pytest.raises(ValueError, match="k >= 2"):
        ProbeModel(weights=np.zeros((1, 3)), bias=np.zeros(1),
                   classes=["a"], train_config=ProbeConfig())
    with pytest.raises(ValueError, match="non-finite"):
        ProbeModel(weights=np.full((2, 3), np.nan), bias=np.zeros(2),
                   classes=["a", "b"], train_config=ProbeConfig())


def test_eval_zero_model_predicts_class_zero():
    model = ProbeModel(weights=np.zeros((3, 4)), bias=np.zeros(3),
                       classes=["a", "b", "c"], train_config=ProbeConfig())
    rng = philox(964)
    X = rng.normal(0, 1, (30, 4))
    y = rng.integers(0, 3, 30)
    acc, table = eval_probe(model, X, y)
    assert acc == pytest.approx(float(np.mean(y == 0)), abs=1e-12)
    assert table.counts[:, 1:].sum() == 0


def test_eval_probe_dimension_checks():
    model = ProbeModel(weights=np.zeros((2, 4)), bias=np.zeros(2),
                       classes=["a", "b"], train_config=ProbeConfig())
    with pytest.raises(ValueError, match="width"):
        eval_probe(model, np.zeros((3, 5)), np.zeros(3, dtype=int))
    with pytest.raises(ValueError, match="labels"):
        eval_probe(model, np.zeros((3, 4)), np.array([0, 1, 2]))


def test_probe_save_load_round_trip(tmp_path):
    X, y = _two_blobs(3)
    model = train_linear_probe(X, y, classes=["left", "right"])
    path = tmp_path / "probe.json"
    save_probe(model, path)
    back = load_probe(path)
    np.testing.assert_allclose(back.weights, model.weights, atol=1e-12)
    np.testing.assert_allclose(back.bias, model.bias, atol=1e-12)
    assert back.classes == ["left", "right"]
    acc_a, _ = eval_probe(model, X, y)
    acc_b, _ = eval_probe(back, X, y)
    assert acc_a == acc_b


def _knn_oracle(X_train, y_train, X_test, k):
    n_classes = int(np.max(y_train)) + 1
    preds = []
    for x in X_test:
        d2 = ((X_train - x) ** 2).sum(axis=1)
        order = sorted(range(len(d2)), key=lambda i: (d2[i], i))[:k]
        votes = np.bincount(y_train[order], minlength=n_classes)
        preds.append(int(np.argmax(votes)))
    return np.array(preds)


def test_knn_identity_k1():
    X, y = _two_blobs(4)
    np.testing.assert_array_equal(knn_classify(X, y, X, 1), y)


def test_knn_single_training_point():
    X_train = np.array([[1.0, 2.0]])
    y_train = np.array([5])
    X_test = philox(965).normal(0, 1, (10, 2))
    np.testing.assert_array_equal(
        knn_classify(X_train, y_train, X_test, 1), np.full(10, 5)
    )


def test_knn_matches_oracle_fuzz():
    for seed in range(10):
        rng = philox(966, seed)
        n_train = int(rng.integers(5, 200))
        n_test = int(rng.integers(1, 40))
        d = int(rng.integers(1, 6))
        k = int(rng.integers(1, min(8, n_train) + 1))
        n_classes = int(rng.integers(2, 5))
        # Integer coordinates keep every squared distance exact in float64,
        # so distance ties are genuine and both tie rules get exercised.
        X_train = rng.integers(-9, 10, (n_train, d)).astype(float)
        y_train = rng.integers(0, n_classes, n_train)
        X_test = rng.integers(-9, 10, (n_test, d)).astype(float)
        got = knn_classify(X_train, y_train, X_test, k)
        want = _knn_oracle(X_train, y_train, X_test, k)
        np.testing.assert_array_equal(got, want)


def test_knn_rejects_bad_k():
    X, y = _two_blobs(5, n_per=3)
    with pytest.raises(ValueError):
        knn_classify(X, y, X, 0)
    with pytest.raises(ValueError):
        knn_classify(X, y, X, 7)


def test_default_prompts_shape():
    assert len(DEFAULT_PROMPTS) == 3
    assert sum(len(prompts) for _, prompts in DEFAULT_PROMPTS) == 9
    names = [name for name, _ in DEFAULT_PROMPTS]
    assert names == ["Person/Indoor", "Commercial", "Scenic/Outdoor"]


def _orthonormal_bank(d: int = 8):
    cats = []
    idx = 0
    for name in ("alpha", "beta", "gamma"):
        rows = np.zeros((2, d))
        rows[0, idx] = 1.0
        rows[1, idx + 1] = 1.0
        idx += 2
        cats.append((name, rows))
    return PromptBank(categories=cats)


def test_prompt_bank_validation():
    with pytest.raises(ValueError, match="unit-norm"):
        PromptBank(categories=[("a", np.array([[2.0, 0.0]]))])
    with pytest.raises(ValueError, match="categories"):
        PromptBank(categories=[])
    with pytest.raises(ValueError, match="widths"):
        PromptBank(categories=[("a", np.eye(2)), ("b", np.eye(3))])
    bank = _orthonormal_bank()
    assert bank.d == 8
    assert bank.category_names == ["alpha", "beta", "gamma"]


def test_prompt_bank_from_embedding_set():
    vecs = np.eye(4, dtype=np.float32)
    es = EmbeddingSet(vecs, np.array([0, 0, 1, 1], np.uint16),
                      ["cat-a", "cat-b"], "bank")
    bank = PromptBank.from_embedding_set(es)
    assert bank.category_names == ["cat-a", "cat-b"]
    assert bank.categories[0][1].shape == (2, 4)


def test_assign_exact_prompt_match():
    bank = _orthonormal_bank()
    emb = np.zeros((1, 8))
    emb[0, 4] = 3.0  # scaled copy of the first "gamma" prompt
    cat_idx, excluded = assign_prompt_categories(emb, bank)
    assert cat_idx.tolist() == [2]
    assert not excluded.any()


def test_assign_tie_breaks_to_lowest_category():
    bank = _orthonormal_bank()
    emb = np.ones((1, 8))  # equal similarity to every prompt
    cat_idx, _ = assign_prompt_categories(emb, bank)
    assert cat_idx.tolist() == [0]


def test_assign_zero_vector_excluded():
    bank = _orthonormal_bank()
    emb = np.zeros((2, 8))
    emb[1, 0] = 1.0
    cat_idx, excluded = assign_prompt_categories(emb, bank)
    assert cat_idx.tolist() == [-1, 0]
    assert excluded.tolist() == [True, False]


def test_assign_scale_invariant():
    bank = _orthonormal_bank()
    rng = philox(967)
    emb = rng.normal(0, 1, (50, 8))
    scales = rng.uniform(0.1, 90.0, 50)[:, None]
    base, _ = assign_prompt_categories(emb, bank)
    scaled, _ = assign_prompt_categories(emb * scales, bank)
    np.testing.assert_array_equal(base, scaled)


def test_characterize_rows_sum_100():
    bank = _orthonormal_bank()
    rng = philox(968)
    vecs = rng.normal(0, 1, (90, 8)).astype(np.float32)
    labels = rng.integers(0, 3, 90).astype(np.uint16)
    es = EmbeddingSet(vecs, labels, ["d0", "d1", "d2"])
    result = characterize(es, bank)
    assert isinstance(result, CharacterizationResult)
    np.testing.assert_allclose(result.percentages.sum(axis=1), 100.0, atol=1e-6)
    assert result.counts.sum() == 90
    assert result.excluded_total == 0
    assert result.datasets == ["d0", "d1", "d2"]
    assert result.categories == ["alpha", "beta", "gamma"]


def test_characterize_empty_dataset_flagged():
    bank = _orthonormal_bank()
    vecs = np.zeros((2, 8), dtype=np.float32)
    vecs[1, 0] = 1.0
    es = EmbeddingSet(vecs, np.array([0, 1], np.uint16), ["dead", "live"])
    with pytest.warns(UserWarning, match="no usable"):
        result = characterize(es, bank)
    assert np.all(np.isnan(result.percentages[0]))
    assert result.excluded_total == 1
    np.testing.assert_allclose(result.percentages[1].sum(), 100.0)


def test_split_stratified_shares():
    labels = np.repeat(np.arange(3), 30)
    train, test = split_stratified(labels, seed=0)
    assert train.size == 60 and test.size == 30
    assert np.intersect1d(train, test).size == 0
    union = np.union1d(train, test)
    np.testing.assert_array_equal(union, np.arange(90))
    for cls in range(3):
        assert int(np.sum(labels[train] == cls)) == 20


def test_split_stratified_seed_changes_split():
    labels = np.repeat(np.arange(2), 50)
    a, _ = split_stratified(labels, seed=0)
    b, _ = split_stratified(labels, seed=1)
    assert not np.array_equal(a, b)


def _cmp_cfg(seeds=(0,)):
    return ExperimentConfig(
        reduction=ReductionConfig(backend="pca", out_dim=4, seed=0),
        k=2,
        restarts=10,
        seeds=seeds,
        algorithm="kmeans",
    )


def test_two_corpus_identical_near_chance():
    rng = philox(969)
    vecs = rng.normal(0, 1, (120, 8)).astype(np.float32)
    A = EmbeddingSet(vecs, np.zeros(120, np.uint16), ["src"])
    B = EmbeddingSet(vecs.copy(), np.zeros(120, np.uint16), ["src"])
    report = two_corpus_probe_vs_cluster(A, B, _cmp_cfg())
    rows = {row["method"]: row for row in report["rows"]}
    assert rows["random-chance"]["accuracy_pct"] == 50.0
    # identical point clouds: any split of the merged cloud matches exactly
    # half of the duplicated labels
    assert rows["clustering-kmeans"]["accuracy_pct"] == pytest.approx(50.0, abs=1e-9)
    assert rows["clustering-kmeans"]["nmi_pct"] == pytest.approx(0.0, abs=1e-6)


def test_two_corpus_separated_all_methods():
    rng = philox(970)
    A = EmbeddingSet(rng.normal(0, 1, (90, 6)).astype(np.float32),
                     np.zeros(90, np.uint16), ["a"])
    B = EmbeddingSet((rng.normal(0, 1, (90, 6)) + 8.0).astype(np.float32),
                     np.zeros(90, np.uint16), ["b"])
    report = two_corpus_probe_vs_cluster(A, B, _cmp_cfg(seeds=(0, 1)))
    rows = {row["method"]: row for row in report["rows"]}
    assert rows["linear-probe"]["accuracy_pct"] >= 99.0
    assert rows["knn-10"]["accuracy_pct"] >= 99.0
    assert rows["clustering-kmeans"]["accuracy_pct"] >= 99.0
    assert report["n"] == 180


def test_two_corpus_rejects_width_mismatch():
    A = EmbeddingSet(np.zeros((3, 4), np.float32), np.zeros(3, np.uint16), ["a"])
    B = EmbeddingSet(np.zeros((3, 5), np.float32), np.zeros(3, np.uint16), ["b"])
    with pytest.raises(ValueError, match="mismatch"):
        two_corpus_probe_vs_cluster(A, B, _cmp_cfg())
