"""Agreement metrics between partitions: matched accuracy, NMI, confusion.

Cluster labels are arbitrary, so accuracy is computed after an optimal
one-to-one matching of clusters to reference labels (a minimum-cost
assignment on negated co-occurrence counts).  NMI uses natural-log mutual
information normalized by the arithmetic mean of the two entropies, scaled
to percent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from biaslens._rand import mix64
from biaslens.cluster import kmeans


@dataclass
class ContingencyTable:
    """Co-occurrence counts: rows index reference labels, columns clusters."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2:
            raise ValueError("counts must be 2-D")
        if np.any(self.counts < 0):
            raise ValueError("negative counts")
        if self.counts.sum() < 1:
            raise ValueError("empty contingency table")

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def contingency(y_true: np.ndarray, y_pred: np.ndarray,
                n_true: int | None = None,
                n_pred: int | None = None) -> ContingencyTable:
    """Count label co-occurrences.

    Table dimensions default to ``max label + 1`` per side; pass ``n_true``
    / ``n_pred`` to force a fixed shape (e.g. a square k x k confusion
    matrix even when some labels never occur).
    """
    yt = np.asarray(y_true)
    yp = np.asarray(y_pred)
    if yt.shape != yp.shape or yt.ndim != 1 or yt.size == 0:
        raise ValueError("labels must be equal-length non-empty 1-D arrays")
    yt = yt.astype(np.int64)
    yp = yp.astype(np.int64)
    if yt.min() < 0 or yp.min() < 0:
        raise ValueError("labels must be non-negative")
    kt = int(yt.max()) + 1 if n_true is None else n_true
    kp = int(yp.max()) + 1 if n_pred is None else n_pred
    if int(yt.max()) >= kt or int(yp.max()) >= kp:
        raise ValueError("labels exceed requested table shape")
    flat = np.bincount(yt * kp + yp, minlength=kt * kp)
    return ContingencyTable(flat.reshape(kt, kp))


def solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect assignment on a square cost matrix.

    Shortest-augmenting-path implementation with row/column potentials,
    O(n^3).  Returns the column assigned to each row.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(cost)):
        raise ValueError("non-finite costs")
    n = cost.shape[0]
    INF = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    out = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        out[p[j] - 1] = j - 1
    return out


@dataclass
class MatchResult:
    """Best cluster-to-label matching and the accuracy it achieves."""

    accuracy: float
    mapping: dict[int, int]
    matched: int


def hungarian_accuracy(table: ContingencyTable) -> MatchResult:
    """Accuracy under the best one-to-one cluster-to-label matching.

    The count matrix is zero-padded to square, negated, and solved as a
    minimum-cost assignment; ``mapping`` sends cluster index to reference
    label and omits pairings against padding.
    """
    counts = table.counts
    kt, kp = counts.shape
    size = max(kt, kp)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[:kt, :kp] = counts
    col_for_row = solve_assignment(-padded.T.astype(float))
    mapping: dict[int, int] = {}
    matched = 0
    for cluster in range(kp):
        label = int(col_for_row[cluster])
        if label < kt:
            mapping[cluster] = label
            matched += int(counts[label, cluster])
    return MatchResult(
        accuracy=matched / table.n,
        mapping=mapping,
        matched=matched,
    )


def nmi(table: ContingencyTable) -> float:
    """Normalized mutual information in percent.

    Natural-log entropies from the table marginals; normalization by the
    arithmetic mean of the entropies, with the convention that two
    deterministic (zero-entropy) partitions agree perfectly (100).  The
    result is clamped to [0, 100].
    """
    counts = table.counts.astype(float)
    total = counts.sum()
    pij = counts / total
    pi = pij.sum(axis=1)
    pj = pij.sum(axis=0)
    nz = pij > 0
    outer = pi[:, None] * pj[None, :]
    info = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    hi = float(-np.sum(pi[pi > 0] * np.log(pi[pi > 0])))
    hj = float(-np.sum(pj[pj > 0] * np.log(pj[pj > 0])))
    if hi + hj == 0.0:
        return 100.0
    val = 100.0 * 2.0 * info / (hi + hj)
    return min(100.0, max(0.0, val))


def confusion_normalized(table: ContingencyTable) -> np.ndarray:
    """Row-normalized confusion matrix in percent.

    Rows with zero total become NaN and trigger a warning, since percent
    shares are undefined for an absent label.
    """
    counts = table.counts.astype(float)
    row_sums = counts.sum(axis=1, keepdims=True)
    if np.any(row_sums == 0):
        warnings.warn(
            "confusion matrix has empty reference rows; emitting NaN",
            stacklevel=2,
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        out = counts / row_sums * 100.0
    out[row_sums[:, 0] == 0] = np.nan
    return out


def granularity_sweep(Z: np.ndarray, y_true: np.ndarray,
                      k_range: list[int] | range, restarts: int = 100,
                      seed: int = 0) -> list[tuple[int, float]]:
    """NMI against reference labels for a range of cluster counts.

    Each k gets its own restart family (streams keyed on ``(seed, k)``), so
    entries are reproducible independently of the sweep order.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y_true, dtype=np.int64)
    results: list[tuple[int, float]] = []
    for k in k_range:
        if not 1 <= k <= Z.shape[0]:
            raise ValueError(f"k={k} outside [1, {Z.shape[0]}]")
        res = kmeans(Z, k, restarts=restarts, seed=mix64(seed, k))
        results.append((k, nmi(contingency(y, res.assignments))))
    return results
