"""Supervised contrasts on frozen features, plus prompt characterization.

The linear probe is a multinomial logistic regression trained by full-batch
gradient descent (deterministic; no batch-order effects).  k-NN provides a
second supervised reference.  Prompt characterization assigns each image
embedding to the category of its most cosine-similar text-prompt embedding,
aggregated into per-dataset percentage tables.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from biaslens._rand import mix64, philox
from biaslens.cluster import kmeans, ward
from biaslens.corpus import EmbeddingSet, merge_sets
from biaslens.metrics import ContingencyTable, contingency, hungarian_accuracy, nmi
from biaslens.reduce import reduce as reduce_features


@dataclass(frozen=True)
class ProbeConfig:
    """Hyperparameters of the full-batch probe optimizer."""

    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass
class ProbeModel:
    """Trained linear classifier over frozen features."""

    weights: np.ndarray
    bias: np.ndarray
    classes: list[str]
    train_config: ProbeConfig
    train_losses: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        k = self.weights.shape[0]
        if k < 2:
            raise ValueError(f"probe needs k >= 2 classes, got {k}")
        if self.bias.shape != (k,):
            raise ValueError("bias shape does not match weights")
        if len(self.classes) != k:
            raise ValueError("class-name count does not match weights")
        if not (np.all(np.isfinite(self.weights))
                and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite probe parameters")


def probe_loss_and_grad(weights: np.ndarray, bias: np.ndarray, X: np.ndarray,
                        y: np.ndarray, l2: float
                        ) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-entropy + L2 loss with analytic gradients.

    loss = mean CE + (l2/2)·||W||²; the bias is not regularized.  Returns
    (loss, dW, db).
    """
    n = X.shape[0]
    scores = X @ weights.T + bias
    scores -= scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(scores).sum(axis=1))
    log_p = scores - log_z[:, None]
    loss = float(-log_p[np.arange(n), y].mean()
                 + 0.5 * l2 * float((weights ** 2).sum()))
    probs = np.exp(log_p)
    probs[np.arange(n), y] -= 1.0
    probs /= n
    d_weights = probs.T @ X + l2 * weights
    d_bias = probs.sum(axis=0)
    return loss, d_weights, d_bias


def train_linear_probe(X: np.ndarray, y: np.ndarray,
                       cfg: ProbeConfig = ProbeConfig(),
                       classes: list[str] | None = None) -> ProbeModel:
    """Fit the probe by full-batch gradient descent from zero init.

    The objective is convex, so zero initialization makes training fully
    deterministic.  The step size halves whenever a step would increase
    the loss (the step is rejected first), so the recorded loss sequence
    is non-increasing.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with matching 1-D labels")
    k = int(y.max()) + 1
    if np.unique(y).size < 2:
        raise ValueError("probe needs at least 2 classes present")
    if X.shape[0] < k:
        raise ValueError(f"need n >= k, got n={X.shape[0]}, k={k}")
    if classes is None:
        classes = [str(i) for i in range(k)]
    if len(classes) != k:
        raise ValueError("class-name count does not match label range")
    weights = np.zeros((k, X.shape[1]))
    bias = np.zeros(k)
    lr = cfg.learning_rate
    loss, d_weights, d_bias = probe_loss_and_grad(weights, bias, X, y, cfg.l2)
    losses = [loss]
    for _ in range(cfg.epochs):
        new_weights = weights - lr * d_weights
        new_bias = bias - lr * d_bias
        new_loss, new_dw, new_db = probe_loss_and_grad(
            new_weights, new_bias, X, y, cfg.l2
        )
        if new_loss > loss:
            lr *= 0.5
        else:
            weights, bias = new_weights, new_bias
            loss, d_weights, d_bias = new_loss, new_dw, new_db
        losses.append(loss)
    return ProbeModel(
        weights=weights,
        bias=bias,
        classes=classes,
        train_config=cfg,
        train_losses=np.array(losses),
    )


def eval_probe(model: ProbeModel, X: np.ndarray, y: np.ndarray
               ) -> tuple[float, ContingencyTable]:
    """Accuracy and confusion table of the probe on labeled features.

    Predictions take the arg-max class score; ties go to the lowest class
    index.  The confusion table is k x k even when some classes are absent
    from ``y``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    k, d = model.weights.shape
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(
            f"feature width {X.shape[-1]} does not match probe width {d}"
        )
    if y.shape != (X.shape[0],) or (y.size and int(y.max()) >= k):
        raise ValueError("labels do not match probe classes")
    preds = np.argmax(X @ model.weights.T + model.bias, axis=1)
    accuracy = float(np.mean(preds == y))
    return accuracy, contingency(y, preds, n_true=k, n_pred=k)


def save_probe(model: ProbeModel, path) -> None:
    """Persist a probe as JSON (weights row-major) for re-evaluation."""
    payload = {
        "weights": model.weights.ravel().tolist(),
        "bias": model.bias.tolist(),
        "shape": list(model.weights.shape),
        "classes": model.classes,
        "train_config": {
            "learning_rate": model.train_config.learning_rate,
            "epochs": model.train_config.epochs,
            "l2": model.train_config.l2,
            "seed": model.train_config.seed,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_probe(path) -> ProbeModel:
    """Load a probe saved by :func:`save_probe`."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    k, d = payload["shape"]
    return ProbeModel(
        weights=np.array(payload["weights"], dtype=float).reshape(k, d),
        bias=np.array(payload["bias"], dtype=float),
        classes=list(payload["classes"]),
        train_config=ProbeConfig(**payload["train_config"]),
    )


def knn_classify(X_train: np.ndarray, y_train: np.ndarray,
                 X_test: np.ndarray, k: int) -> np.ndarray:
    """Euclidean k-nearest-neighbour majority vote.

    Distance ties prefer the lower training index (stable sort); vote ties
    prefer the lowest class index.
    """
    X_train = np.asarray(X_train, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    y_train = np.asarray(y_train, dtype=np.int64)
    if not 1 <= k <= X_train.shape[0]:
        raise ValueError(f"k={k} outside [1, n_train={X_train.shape[0]}]")
    n_classes = int(y_train.max()) + 1
    sq_train = np.einsum("ij,ij->i", X_train, X_train)
    preds = np.empty(X_test.shape[0], dtype=np.int64)
    chunk = max(1, int(2_000_000 // max(1, X_train.shape[0])))
    for lo in range(0, X_test.shape[0], chunk):
        block = X_test[lo:lo + chunk]
        d2 = (np.einsum("ij,ij->i", block, block)[:, None]
              + sq_train[None, :] - 2.0 * (block @ X_train.T))
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = y_train[order]
        for row in range(votes.shape[0]):
            preds[lo + row] = np.argmax(np.bincount(votes[row],
                                                    minlength=n_classes))
    return preds


# ---------------------------------------------------------------------------
# Prompt characterization

DEFAULT_PROMPTS: list[tuple[str, list[str]]] = [
    ("Person/Indoor", ["man, woman", "indoor scene", "clothing photograph"]),
    ("Commercial", ["product photograph", "logo, cartoon", "text, diagram"]),
    ("Scenic/Outdoor", ["natural view", "car, bus, truck, bike",
                        "street, building"]),
]


@dataclass
class PromptBank:
    """Unit-norm text-prompt embeddings grouped into named categories."""

    categories: list[tuple[str, np.ndarray]]
    model_tag: str = ""

    def __post_init__(self) -> None:
        if not self.categories:
            raise ValueError("prompt bank has no categories")
        cleaned = []
        d = None
        for name, embs in self.categories:
            if not name:
                raise ValueError("empty category name")
            embs = np.asarray(embs, dtype=float)
            if embs.ndim != 2 or embs.shape[0] < 1:
                raise ValueError(f"category {name!r} needs an m x d matrix")
            if d is None:
                d = embs.shape[1]
            elif embs.shape[1] != d:
                raise ValueError("prompt embedding widths differ")
            norms = np.linalg.norm(embs, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError(
                    f"prompt embeddings in {name!r} are not unit-norm"
                )
            cleaned.append((name, embs))
        self.categories = cleaned

    @property
    def d(self) -> int:
        return self.categories[0][1].shape[1]

    @property
    def category_names(self) -> list[str]:
        return [name for name, _ in self.categories]

    @classmethod
    def from_embedding_set(cls, es: EmbeddingSet) -> "PromptBank":
        """Interpret an EMB1 payload as a bank (datasets = category names)."""
        cats = []
        vectors = np.asarray(es.vectors, dtype=float)
        for idx, name in enumerate(es.datasets):
            rows = vectors[es.labels == idx]
            if rows.shape[0] == 0:
                raise ValueError(f"category {name!r} has no prompts")
            cats.append((name, rows))
        return cls(categories=cats, model_tag=es.model_tag)


@dataclass
class CharacterizationResult:
    """Per-dataset percentage of images falling in each prompt category."""

    percentages: np.ndarray
    counts: np.ndarray
    excluded: np.ndarray
    datasets: list[str]
    categories: list[str]

    @property
    def excluded_total(self) -> int:
        return int(self.excluded.sum())


def assign_prompt_categories(embs: np.ndarray, bank: PromptBank
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Best-matching category per embedding row.

    Returns (category_index, excluded_mask).  Rows are normalized
    internally; zero-norm rows are excluded (index -1).  The winning
    prompt is the arg-max cosine similarity over all prompts in category
    order, so exact ties resolve to the lowest category / prompt index.
    """
    embs = np.asarray(embs, dtype=float)
    if embs.ndim != 2 or embs.shape[1] != bank.d:
        raise ValueError(
            f"embedding width {embs.shape[-1]} does not match bank width "
            f"{bank.d}"
        )
    norms = np.linalg.norm(embs, axis=1)
    excluded = norms == 0.0
    safe = np.where(excluded, 1.0, norms)
    unit = embs / safe[:, None]
    prompt_mat = np.concatenate([embs_c for _, embs_c in bank.categories])
    owner = np.concatenate([
        np.full(embs_c.shape[0], ci, dtype=np.int64)
        for ci, (_, embs_c) in enumerate(bank.categories)
    ])
    sims = unit @ prompt_mat.T
    best = np.argmax(sims, axis=1)
    cat_idx = owner[best]
    cat_idx[excluded] = -1
    return cat_idx, excluded


def characterize(images: EmbeddingSet, bank: PromptBank
                 ) -> CharacterizationResult:
    """Aggregate prompt-category assignments into per-dataset percentages.

    Each row of ``percentages`` sums to 100 (NaN for a dataset whose
    images were all excluded as zero-norm, with a warning).
    """
    cat_idx, excluded_mask = assign_prompt_categories(images.vectors, bank)
    n_data = len(images.datasets)
    n_cat = len(bank.categories)
    counts = np.zeros((n_data, n_cat), dtype=np.int64)
    excluded = np.zeros(n_data, dtype=np.int64)
    labels = np.asarray(images.labels, dtype=np.int64)
    for ds in range(n_data):
        sel = labels == ds
        excluded[ds] = int(np.sum(excluded_mask[sel]))
        kept = cat_idx[sel]
        kept = kept[kept >= 0]
        counts[ds] = np.bincount(kept, minlength=n_cat)
    totals = counts.sum(axis=1, keepdims=True).astype(float)
    if np.any(totals == 0):
        warnings.warn(
            "dataset with no usable images in characterization; "
            "emitting NaN row",
            stacklevel=2,
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        percentages = counts / totals * 100.0
    percentages[totals[:, 0] == 0] = np.nan
    return CharacterizationResult(
        percentages=percentages,
        counts=counts,
        excluded=excluded,
        datasets=list(images.datasets),
        categories=bank.category_names,
    )


# ---------------------------------------------------------------------------
# Two-corpus comparison (supervised vs unsupervised on the same vectors)


def split_stratified(labels: np.ndarray, seed: int,
                     train_share: float = 2.0 / 3.0
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic stratified train/test split (default 2:1).

    Each class is permuted by a stream keyed on (seed, class); the first
    round(share * m) indices train.  Returned index arrays are sorted.
    """
    labels = np.asarray(labels, dtype=np.int64)
    train_parts = []
    test_parts = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        perm = philox(mix64(seed, int(cls))).permutation(idx.size)
        cut = int(round(train_share * idx.size))
        train_parts.append(idx[perm[:cut]])
        test_parts.append(idx[perm[cut:]])
    return (np.sort(np.concatenate(train_parts)),
            np.sort(np.concatenate(test_parts)))


def two_corpus_probe_vs_cluster(A: EmbeddingSet, B: EmbeddingSet, cfg,
                                knn_k: int = 10,
                                probe_cfg: ProbeConfig = ProbeConfig(),
                                ) -> dict:
    """Four-row comparison of corpus A vs corpus B on shared embeddings.

    Merges A (label 0) and B (label 1), then reports random chance, linear
    probe and k-NN test accuracy (2:1 stratified split seeded by the first
    configured seed), and the unsupervised reduce-and-cluster accuracy/NMI
    averaged over the configured seeds.  ``cfg`` carries reduction,
    restarts, algorithm and seeds fields.
    """
    if A.d != B.d:
        raise ValueError(f"embedding width mismatch: {A.d} != {B.d}")
    merged = merge_sets([
        EmbeddingSet(A.vectors, np.zeros(A.n, dtype=np.uint16), ["corpus_a"],
                     A.model_tag),
        EmbeddingSet(B.vectors, np.zeros(B.n, dtype=np.uint16), ["corpus_b"],
                     B.model_tag),
    ])
    X = np.asarray(merged.vectors, dtype=float)
    y = np.asarray(merged.labels, dtype=np.int64)
    seeds = list(cfg.seeds)
    train_idx, test_idx = split_stratified(y, seed=seeds[0])
    model = train_linear_probe(X[train_idx], y[train_idx], probe_cfg,
                               classes=list(merged.datasets))
    probe_acc, _ = eval_probe(model, X[test_idx], y[test_idx])
    knn_preds = knn_classify(X[train_idx], y[train_idx], X[test_idx], knn_k)
    knn_acc = float(np.mean(knn_preds == y[test_idx]))
    accs = []
    nmis = []
    for seed in seeds:
        reduction = replace(cfg.reduction, seed=seed)
        Z = reduce_features(X, reduction)
        if cfg.algorithm == "ward":
            result = ward(Z, 2)
        else:
            result = kmeans(Z, 2, restarts=cfg.restarts, seed=seed)
        table = contingency(y, result.assignments)
        accs.append(hungarian_accuracy(table).accuracy * 100.0)
        nmis.append(nmi(table))
    return {
        "experiment": "two-corpus-comparison",
        "n": merged.n,
        "d": merged.d,
        "seeds": seeds,
        "rows": [
            {"method": "random-chance", "accuracy_pct": 50.0},
            {"method": "linear-probe", "accuracy_pct": probe_acc * 100.0},
            {"method": f"knn-{knn_k}", "accuracy_pct": knn_acc * 100.0},
            {"method": f"clustering-{cfg.algorithm}",
             "accuracy_pct": float(np.mean(accs)),
             "nmi_pct": float(np.mean(nmis)),
             "accuracy_spread": float(np.max(accs) - np.min(accs))},
        ],
    }
