"""End-to-end experiment orchestration and deterministic report emission.

Three experiment families: the unsupervised semantic-bias assessment
(reduce, cluster, match, score), robustness sweeps over reduction dims /
backends / algorithms, and the synthetic artifact-channel experiment that
contrasts a pixel-feature linear probe with unsupervised clustering on two
corpora differing only in native resolution.

Reports are plain dicts with a stable JSON rendering; a config hash makes
every cell reproducible from the report alone.  The provenance timestamp is
the only non-deterministic field.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
from dataclasses import asdict, dataclass, replace
from typing import Iterable

import numpy as np

from biaslens import __version__
from biaslens._rand import mix64
from biaslens.cluster import ClusterResult, kmeans, ward
from biaslens.corpus import EmbeddingSet
from biaslens.imglab import (
    FakeSpec,
    TEXTURE_KINDS,
    gen_fake,
    pixel_features,
    residual_image,
    resize_bilinear,
)
from biaslens.metrics import contingency, hungarian_accuracy, nmi
from biaslens.probe import (
    ProbeConfig,
    eval_probe,
    split_stratified,
    train_linear_probe,
)
from biaslens.reduce import ReductionConfig, reduce as reduce_features

_ALGORITHMS = ("kmeans", "ward")


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by the clustering-based experiments."""

    reduction: ReductionConfig = ReductionConfig()
    k: int | str = "auto"
    restarts: int = 100
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    algorithm: str = "kmeans"
    report_path: str = ""

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.algorithm not in _ALGORITHMS:
            raise ValueError(
                f"unknown algorithm {self.algorithm!r}; "
                f"expected one of {_ALGORITHMS}"
            )
        if self.k != "auto" and (not isinstance(self.k, int) or self.k < 1):
            raise ValueError("k must be a positive integer or 'auto'")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


def config_hash(payload) -> str:
    """sha256 over a canonical JSON rendering of a config-like object."""
    if hasattr(payload, "__dataclass_fields__"):
        payload = asdict(payload)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _provenance() -> dict:
    return {
        "tool": "biaslens",
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }


def save_report(report: dict, path) -> None:
    """Write a report as stable, sorted-key JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def strip_timestamp(report: dict) -> dict:
    """Copy of a report without its provenance timestamp.

    Reports are byte-deterministic except for this one field; comparisons
    should go through here.
    """
    out = json.loads(json.dumps(report))
    out.get("provenance", {}).pop("timestamp", None)
    return out


def _resolve_k(cfg: ExperimentConfig, es: EmbeddingSet) -> int:
    if cfg.k == "auto":
        return len(es.datasets)
    return int(cfg.k)


def _cluster_once(Z: np.ndarray, k: int, algorithm: str, restarts: int,
                  seed: int) -> ClusterResult:
    if algorithm == "ward":
        return ward(Z, k)
    return kmeans(Z, k, restarts=restarts, seed=seed)


def _score(y: np.ndarray, assignments: np.ndarray) -> tuple[float, float]:
    table = contingency(y, assignments)
    return hungarian_accuracy(table).accuracy * 100.0, nmi(table)


def assess_semantic_bias(es: EmbeddingSet, cfg: ExperimentConfig) -> dict:
    """Unsupervised separability of the datasets inside an embedding set.

    Per seed: reduce the vectors, cluster with k clusters (k defaults to
    the number of datasets), and score matched accuracy plus NMI against
    the dataset labels.  The report carries per-seed cells and a
    mean/spread summary.
    """
    if len(es.datasets) < 2:
        raise ValueError("need at least 2 datasets to assess bias")
    k = _resolve_k(cfg, es)
    X = np.asarray(es.vectors, dtype=float)
    y = np.asarray(es.labels, dtype=np.int64)
    cells = []
    accs = []
    nmis = []
    for seed in cfg.seeds:
        reduction = replace(cfg.reduction, seed=seed)
        Z = reduce_features(X, reduction)
        result = _cluster_once(Z, k, cfg.algorithm, cfg.restarts, seed)
        acc, mutual = _score(y, result.assignments)
        accs.append(acc)
        nmis.append(mutual)
        cells.append({
            "settings": {
                "backend": reduction.backend,
                "out_dim": reduction.out_dim,
                "algorithm": cfg.algorithm,
                "k": k,
                "restarts": cfg.restarts,
                "seed": int(seed),
            },
            "accuracy_pct": acc,
            "nmi_pct": mutual,
        })
    report = {
        "experiment": "semantic-bias",
        "config_hash": config_hash(cfg),
        "n": es.n,
        "d": es.d,
        "datasets": list(es.datasets),
        "cells": cells,
        "summary": {
            "accuracy_pct_mean": float(np.mean(accs)),
            "accuracy_pct_min": float(np.min(accs)),
            "accuracy_pct_max": float(np.max(accs)),
            "accuracy_pct_spread": float(np.max(accs) - np.min(accs)),
            "accuracy_pct_std": float(np.std(accs)),
            "nmi_pct_mean": float(np.mean(nmis)),
            "nmi_pct_spread": float(np.max(nmis) - np.min(nmis)),
        },
        "provenance": _provenance(),
    }
    return report


def robustness_matrix(es: EmbeddingSet, dims: Iterable[int],
                      backends: Iterable[str], algorithms: Iterable[str],
                      seeds: Iterable[int], restarts: int = 100,
                      k: int | str = "auto") -> dict:
    """Full cross-product sweep of reduction dims x backends x algorithms.

    Each cell averages accuracy/NMI over the seeds.  A cell is flagged when
    its accuracy deviates by more than 5 points from the median of its row
    (row = one backend+algorithm combination across dims).  Reductions are
    cached per (backend, dim, seed) so the sweep does not recompute shared
    work; the ``none`` backend ignores dims by construction.
    """
    dims = [int(v) for v in dims]
    backends = list(backends)
    algorithms = list(algorithms)
    seeds = [int(s) for s in seeds]
    if not dims or not backends or not algorithms or not seeds:
        raise ValueError("dims, backends, algorithms and seeds must be non-empty")
    for alg in algorithms:
        if alg not in _ALGORITHMS:
            raise ValueError(f"unknown algorithm {alg!r}")
    k_eff = len(es.datasets) if k == "auto" else int(k)
    X = np.asarray(es.vectors, dtype=float)
    y = np.asarray(es.labels, dtype=np.int64)
    cache: dict[tuple, np.ndarray] = {}

    def reduced(backend: str, dim: int, seed: int) -> np.ndarray:
        key = (backend, None if backend == "none" else dim, seed)
        if key not in cache:
            cfg = ReductionConfig(backend=backend, out_dim=dim, seed=seed)
            cache[key] = reduce_features(X, cfg)
        return cache[key]

    cells = []
    rows = []
    for backend in backends:
        for algorithm in algorithms:
            row_cells = []
            for dim in dims:
                accs = []
                nmis = []
                for seed in seeds:
                    Z = reduced(backend, dim, seed)
                    result = _cluster_once(Z, k_eff, algorithm, restarts,
                                           seed)
                    acc, mutual = _score(y, result.assignments)
                    accs.append(acc)
                    nmis.append(mutual)
                row_cells.append({
                    "settings": {
                        "backend": backend,
                        "algorithm": algorithm,
                        "out_dim": dim,
                        "k": k_eff,
                        "restarts": restarts,
                        "seeds": seeds,
                    },
                    "accuracy_pct": float(np.mean(accs)),
                    "nmi_pct": float(np.mean(nmis)),
                    "spread": float(np.max(accs) - np.min(accs)),
                })
            median = float(np.median([c["accuracy_pct"] for c in row_cells]))
            flagged_dims = []
            for cell, dim in zip(row_cells, dims):
                cell["flagged"] = bool(
                    abs(cell["accuracy_pct"] - median) > 5.0
                )
                if cell["flagged"]:
                    flagged_dims.append(dim)
            rows.append({
                "backend": backend,
                "algorithm": algorithm,
                "median_accuracy_pct": median,
                "flagged_dims": flagged_dims,
            })
            cells.extend(row_cells)
    report = {
        "experiment": "robustness-matrix",
        "config_hash": config_hash({
            "dims": dims, "backends": backends, "algorithms": algorithms,
            "seeds": seeds, "restarts": restarts, "k": k_eff,
        }),
        "n": es.n,
        "d": es.d,
        "cells": cells,
        "rows": rows,
        "provenance": _provenance(),
    }
    return report


def filter_correctly_clustered(es: EmbeddingSet, cfg: ExperimentConfig
                               ) -> tuple[EmbeddingSet, dict]:
    """Subset of an embedding set that the unsupervised pipeline gets right.

    Runs reduce + cluster once (first configured seed), matches clusters to
    dataset labels, and keeps the images whose matched cluster label equals
    their true label.  Returns the filtered set plus a small summary dict.
    Used by prompt characterization when restricted to correctly clustered
    images.
    """
    k = _resolve_k(cfg, es)
    seed = cfg.seeds[0]
    X = np.asarray(es.vectors, dtype=float)
    y = np.asarray(es.labels, dtype=np.int64)
    Z = reduce_features(X, replace(cfg.reduction, seed=seed))
    result = _cluster_once(Z, k, cfg.algorithm, cfg.restarts, seed)
    match = hungarian_accuracy(contingency(y, result.assignments))
    matched_label = np.full(k, -1, dtype=np.int64)
    for cluster, label in match.mapping.items():
        if cluster < k:
            matched_label[cluster] = label
    keep = matched_label[result.assignments] == y
    if not np.any(keep):
        raise ValueError("no correctly clustered images to keep")
    filtered = EmbeddingSet(
        vectors=es.vectors[keep],
        labels=es.labels[keep],
        datasets=list(es.datasets),
        model_tag=es.model_tag,
    )
    summary = {
        "kept": int(keep.sum()),
        "total": es.n,
        "clustering_accuracy_pct": match.accuracy * 100.0,
        "seed": int(seed),
    }
    return filtered, summary


@dataclass(frozen=True)
class ArtifactLabConfig:
    """Optional knobs of the artifact-channel experiment."""

    mid: int | None = None
    restarts: int = 100
    umap_dim: int = 20
    probe: ProbeConfig = ProbeConfig()
    kinds: tuple[str, ...] = TEXTURE_KINDS
    compute_clustering: bool = True
    compute_residuals: bool = True


def artifact_channel_experiment(res_a: int, res_b: int, n_per: int,
                                final_side: int, seed: int,
                                lab: ArtifactLabConfig = ArtifactLabConfig(),
                                ) -> dict:
    """Probe-vs-clustering contrast on two same-process fake corpora.

    Generates ``n_per`` images per corpus from the identical texture
    process at native sizes res_a² and res_b², features them as
    ``final_side``² pixel thumbnails, and reports:

    * linear-probe train/test accuracy (2:1 stratified split),
    * the same probe on two-step-resized features (native → mid → final,
      mid defaulting to final/2),
    * unsupervised UMAP + k-means accuracy/NMI on the one-step features,
    * mean |residual| per corpus at the pipeline size.

    ``res_a == res_b`` is permitted as a no-artifact control.
    """
    if n_per < 100:
        raise ValueError("n_per must be >= 100")
    if final_side < 8:
        raise ValueError("final_side must be >= 8")
    mid = lab.mid if lab.mid is not None else max(2, final_side // 2)
    d = final_side * final_side * 3
    n_total = 2 * n_per
    feats_one = np.empty((n_total, d))
    feats_two = np.empty((n_total, d))
    y = np.repeat(np.array([0, 1], dtype=np.int64), n_per)
    resid_means = [0.0, 0.0]
    names = [f"fake{res_a}", f"fake{res_b}"]
    for corpus, res in enumerate((res_a, res_b)):
        for i in range(n_per):
            kind = lab.kinds[i % len(lab.kinds)]
            spec = FakeSpec(width=res, height=res, texture_kind=kind,
                            seed=mix64(seed, corpus, i))
            img = gen_fake(spec)
            row = corpus * n_per + i
            feats_one[row] = pixel_features(img, final_side)
            feats_two[row] = pixel_features(
                resize_bilinear(img, mid, mid), final_side
            )
            if lab.compute_residuals:
                resid_means[corpus] += residual_image(
                    img, final_side
                ).mean_abs()
        resid_means[corpus] /= n_per
    train_idx, test_idx = split_stratified(y, seed=mix64(seed, 0x5350))
    report: dict = {
        "experiment": "artifact-channel",
        "config_hash": config_hash({
            "res_a": res_a, "res_b": res_b, "n_per": n_per,
            "final_side": final_side, "mid": mid, "seed": seed,
            "restarts": lab.restarts, "umap_dim": lab.umap_dim,
            "kinds": list(lab.kinds),
        }),
        "corpora": names,
        "control": res_a == res_b,
        "settings": {
            "res_a": res_a, "res_b": res_b, "n_per": n_per,
            "final_side": final_side, "mid": mid, "seed": seed,
        },
        "provenance": _provenance(),
    }
    for tag, feats in (("one_step", feats_one), ("two_step", feats_two)):
        model = train_linear_probe(feats[train_idx], y[train_idx], lab.probe,
                                   classes=names)
        train_acc, _ = eval_probe(model, feats[train_idx], y[train_idx])
        test_acc, _ = eval_probe(model, feats[test_idx], y[test_idx])
        report[f"probe_{tag}"] = {
            "train_accuracy": train_acc,
            "test_accuracy": test_acc,
        }
    if lab.compute_clustering:
        reduction = ReductionConfig(backend="umap", out_dim=lab.umap_dim,
                                    seed=seed)
        Z = reduce_features(feats_one, reduction)
        result = kmeans(Z, 2, restarts=lab.restarts, seed=seed)
        acc, mutual = _score(y, result.assignments)
        report["clustering"] = {
            "accuracy_pct": acc,
            "nmi_pct": mutual,
            "backend": "umap",
            "out_dim": lab.umap_dim,
        }
        report["gap_pct"] = (
            report["probe_one_step"]["test_accuracy"] * 100.0 - acc
        )
    if lab.compute_residuals:
        report["residual_mean_abs"] = {
            names[0]: resid_means[0],
            names[1]: resid_means[1],
        }
    return report
