"""Clustering on reduced embeddings: restarted k-means and Ward linkage.

Both algorithms are deterministic given their arguments.  k-means draws all
randomness from streams keyed on (seed, restart index), so each restart is
reproducible in isolation; Ward is deterministic outright, with merge ties
broken on the smallest pair of lowest original indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from biaslens._rand import mix64, philox


@dataclass
class ClusterResult:
    """Assignments plus the context needed to reproduce them."""

    assignments: np.ndarray
    centroids: np.ndarray | None
    objective: float
    k: int
    algorithm: str
    seed: int = 0
    restarts: int = 1

    def __post_init__(self) -> None:
        self.assignments = np.ascontiguousarray(self.assignments, dtype=np.int64)
        if self.assignments.ndim != 1:
            raise ValueError("assignments must be 1-D")
        if self.assignments.size and not (
            0 <= int(self.assignments.min())
            and int(self.assignments.max()) < self.k
        ):
            raise ValueError("assignment labels outside [0, k)")


def _sq_dists_to_centers(Z: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance matrix (n, k), clamped at zero."""
    d2 = (
        np.einsum("ij,ij->i", Z, Z)[:, None]
        - 2.0 * (Z @ centers.T)
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeans_objective(Z: np.ndarray, assignments: np.ndarray,
                     centers: np.ndarray) -> float:
    """Within-cluster sum of squared distances."""
    diff = Z - centers[assignments]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeanspp_init(Z: np.ndarray, k: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding: each next center is drawn with probability
    proportional to the squared distance to the closest chosen center."""
    n = Z.shape[0]
    centers = np.empty((k, Z.shape[1]))
    first = int(rng.integers(n))
    centers[0] = Z[first]
    d2 = ((Z - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), u, side="right"))
            idx = min(idx, n - 1)
        centers[c] = Z[idx]
        np.minimum(d2, ((Z - centers[c]) ** 2).sum(axis=1), out=d2)
    return centers


def lloyd_iterate(Z: np.ndarray, centers: np.ndarray,
                  max_iter: int = 300) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    """Lloyd's algorithm from given centers to an assignment fixpoint.

    Returns (assignments, centers, objective, objective_history); the
    history is non-increasing.  Ties in the assignment step go to the
    lowest cluster index.  A cluster left empty after assignment is
    re-seeded with the point farthest from its current centroid.
    """
    k = centers.shape[0]
    centers = centers.copy()
    prev: np.ndarray | None = None
    history: list[float] = []
    assign = np.zeros(Z.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists_to_centers(Z, centers)
        assign = np.argmin(d2, axis=1)
        counts = np.bincount(assign, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            point_cost = d2[np.arange(Z.shape[0]), assign]
            farthest = int(np.argmax(point_cost))
            centers[empty] = Z[farthest]
            assign[farthest] = empty
            d2[:, empty] = ((Z - centers[empty]) ** 2).sum(axis=1)
            counts = np.bincount(assign, minlength=k)
        history.append(kmeans_objective(Z, assign, centers))
        if prev is not None and np.array_equal(assign, prev):
            break
        for c in range(k):
            members = assign == c
            centers[c] = Z[members].mean(axis=0)
        history.append(kmeans_objective(Z, assign, centers))
        prev = assign
    return assign, centers, history[-1], history


def kmeans(Z: np.ndarray, k: int, restarts: int = 100,
           seed: int = 0) -> ClusterResult:
    """Restarted k-means with distance-weighted seeding.

    Runs ``restarts`` independent restarts (stream keyed on
    ``(seed, restart)``) and keeps the assignment with the lowest
    within-cluster sum of squares; ties keep the lowest restart index.

    Seeding draws candidate rows by position, so permuting the input rows
    changes which initializations the restarts see.  The returned partition
    is permutation-stable only where the best objective is unique and the
    restart budget finds it; per-run reproducibility is exact either way.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError("Z must be 2-D")
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite values in Z")
    n = Z.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, n={n}]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best: tuple[float, int, np.ndarray, np.ndarray] | None = None
    for r in range(restarts):
        rng = philox(mix64(seed, r))
        init = _kmeanspp_init(Z, k, rng)
        assign, centers, objective, _ = lloyd_iterate(Z, init)
        if best is None or objective < best[0]:
            best = (objective, r, assign, centers)
    objective, _, assign, centers = best
    return ClusterResult(
        assignments=assign,
        centroids=centers,
        objective=objective,
        k=k,
        algorithm="kmeans",
        seed=seed,
        restarts=restarts,
    )


# ---------------------------------------------------------------------------
# Ward agglomeration


def ward_cost(size_a: float, size_b: float, cen_a: np.ndarray,
              cen_b: np.ndarray) -> float:
    """Increase in within-cluster variance caused by merging two clusters."""
    diff = np.asarray(cen_a, dtype=float) - np.asarray(cen_b, dtype=float)
    return size_a * size_b / (size_a + size_b) * float(diff @ diff)


@numba.njit(cache=True)
def _ward_trace(Z: np.ndarray):
    """Greedy Ward agglomeration by full-scan minimum selection.

    Clusters live in array slots; a merge keeps the lower slot and kills
    the higher one.  Returns per merge the two cluster representatives
    (lowest original member indices, ordered) and the merge cost.
    """
    n, d = Z.shape
    size = np.ones(n)
    cent = Z.copy()
    rep = np.arange(n)
    alive = np.ones(n, dtype=np.bool_)
    cost = np.full((n, n), np.inf)
    for i in range(n - 1):
        for j in range(i + 1, n):
            s = 0.0
            for t in range(d):
                diff = cent[i, t] - cent[j, t]
                s += diff * diff
            cost[i, j] = 0.5 * s
    out_a = np.empty(n - 1, dtype=np.int64)
    out_b = np.empty(n - 1, dtype=np.int64)
    out_cost = np.empty(n - 1)
    for m in range(n - 1):
        best = np.inf
        bi = -1
        bj = -1
        best_ra = -1
        best_rb = -1
        for i in range(n - 1):
            if not alive[i]:
                continue
            for j in range(i + 1, n):
                if not alive[j]:
                    continue
                c = cost[i, j]
                if c > best:
                    continue
                if rep[i] < rep[j]:
                    ra, rb = rep[i], rep[j]
                else:
                    ra, rb = rep[j], rep[i]
                if (c < best or ra < best_ra
                        or (ra == best_ra and rb < best_rb)):
                    best = c
                    bi = i
                    bj = j
                    best_ra = ra
                    best_rb = rb
        out_a[m] = best_ra
        out_b[m] = best_rb
        out_cost[m] = best
        new_size = size[bi] + size[bj]
        for t in range(d):
            cent[bi, t] = (size[bi] * cent[bi, t]
                           + size[bj] * cent[bj, t]) / new_size
        size[bi] = new_size
        rep[bi] = best_ra
        alive[bj] = False
        for o in range(n):
            if not alive[o] or o == bi:
                continue
            s = 0.0
            for t in range(d):
                diff = cent[bi, t] - cent[o, t]
                s += diff * diff
            c = new_size * size[o] / (new_size + size[o]) * s
            if o < bi:
                cost[o, bi] = c
            else:
                cost[bi, o] = c
    return out_a, out_b, out_cost


def ward_linkage(Z: np.ndarray) -> list[tuple[int, int, float]]:
    """Greedy Ward merge trace.

    Returns n-1 merges as (rep_a, rep_b, cost) with rep the lowest original
    index of each merged cluster and rep_a < rep_b.  Each step merges the
    globally cheapest pair; cost ties prefer the lexicographically smallest
    (rep_a, rep_b).
    """
    Z = np.ascontiguousarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise ValueError("Z must be a non-empty 2-D array")
    if Z.shape[0] == 1:
        return []
    out_a, out_b, out_cost = _ward_trace(Z)
    return [(int(a), int(b), float(c))
            for a, b, c in zip(out_a, out_b, out_cost)]


def ward(Z: np.ndarray, k: int) -> ClusterResult:
    """Cut the greedy Ward merge sequence at ``k`` clusters.

    Assignments are numbered by first occurrence over the rows; centroids
    are not part of the result (the model is hierarchical, not centroidal),
    and the reported objective is the within-cluster sum of squares of the
    final partition.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError("Z must be 2-D")
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite values in Z")
    n = Z.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, n={n}]")
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for ra, rb, _ in ward_linkage(Z)[: n - k]:
        fa, fb = find(ra), find(rb)
        parent[max(fa, fb)] = min(fa, fb)
    assign = np.empty(n, dtype=np.int64)
    relabel: dict[int, int] = {}
    for i in range(n):
        root = find(i)
        if root not in relabel:
            relabel[root] = len(relabel)
        assign[i] = relabel[root]
    objective = 0.0
    for c in range(k):
        block = Z[assign == c]
        objective += float(((block - block.mean(axis=0)) ** 2).sum())
    return ClusterResult(
        assignments=assign,
        centroids=None,
        objective=objective,
        k=k,
        algorithm="ward",
    )


def relabel_canonical(result: ClusterResult) -> ClusterResult:
    """Renumber cluster labels by order of first appearance.

    Centroid rows are permuted to match; clusters that never appear keep
    their relative order after the observed ones.
    """
    assign = result.assignments
    mapping: dict[int, int] = {}
    for label in assign:
        if int(label) not in mapping:
            mapping[int(label)] = len(mapping)
    for label in range(result.k):
        if label not in mapping:
            mapping[label] = len(mapping)
    new_assign = np.array([mapping[int(a)] for a in assign], dtype=np.int64)
    centroids = result.centroids
    if centroids is not None:
        order = np.empty(result.k, dtype=np.int64)
        for old, new in mapping.items():
            order[new] = old
        centroids = centroids[order]
    return ClusterResult(
        assignments=new_assign,
        centroids=centroids,
        objective=result.objective,
        k=result.k,
        algorithm=result.algorithm,
        seed=result.seed,
        restarts=result.restarts,
    )
