"""Dimensionality reduction backends: PCA, UMAP and passthrough.

PCA diagonalizes the sample covariance with cyclic Jacobi rotations.  UMAP
follows the standard reference construction -- exact k-nearest-neighbour
graph, smoothed-distance calibration per point, fuzzy symmetrization, and a
negative-sampling stochastic layout -- but every random draw comes from
counter-based streams keyed on (seed, epoch, edge, sample), so results are
reproducible to the bit across runs and platforms regardless of thread
count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.optimize
import scipy.sparse

from biaslens._rand import mix64, philox

_BACKENDS = ("umap", "pca", "none")

_SMOOTH_K_TOLERANCE = 1e-5
_MIN_K_DIST_SCALE = 1e-3


@dataclass(frozen=True)
class ReductionConfig:
    """Backend choice plus the knobs shared by reduction calls."""

    backend: str = "umap"
    out_dim: int = 20
    umap_neighbors: int = 15
    umap_min_dist: float = 0.1
    umap_epochs: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.backend not in _BACKENDS:
            raise ValueError(
                f"unknown backend {self.backend!r}; expected one of {_BACKENDS}"
            )
        if self.out_dim < 1:
            raise ValueError(f"out_dim must be >= 1, got {self.out_dim}")
        if self.umap_neighbors < 2:
            raise ValueError("umap_neighbors must be >= 2")
        if self.umap_min_dist < 0:
            raise ValueError("umap_min_dist must be >= 0")
        if self.umap_epochs < 1:
            raise ValueError("umap_epochs must be >= 1")


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaModel:
    """Mean vector plus leading principal axes (rows) and their variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def validate(self) -> None:
        m, d = self.components.shape
        if self.mean.shape != (d,):
            raise ValueError("mean / components shape mismatch")
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(m), atol=1e-6):
            raise ValueError("components are not orthonormal")
        ev = self.explained_variance
        if ev.shape != (m,):
            raise ValueError("explained_variance shape mismatch")
        if np.any(ev < -1e-12) or np.any(np.diff(ev) > 1e-9):
            raise ValueError("explained_variance must be non-negative, non-increasing")


@numba.njit(cache=True)
def _jacobi_eigh(A: np.ndarray, threshold: float, max_sweeps: int = 100):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues, eigenvectors-as-columns), unordered.  Sweeps stop
    once every off-diagonal magnitude falls below ``threshold``.
    """
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) > off:
                    off = abs(A[p, q])
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= threshold:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for i in range(n):
                    aip = A[i, p]
                    aiq = A[i, q]
                    A[i, p] = c * aip - s * aiq
                    A[i, q] = s * aip + c * aiq
                for i in range(n):
                    api = A[p, i]
                    aqi = A[q, i]
                    A[p, i] = c * api - s * aqi
                    A[q, i] = s * api + c * aqi
                A[p, q] = 0.0
                A[q, p] = 0.0
                for i in range(n):
                    vip = V[i, p]
                    viq = V[i, q]
                    V[i, p] = c * vip - s * viq
                    V[i, q] = s * vip + c * viq
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i]
    return w, V


def jacobi_eigh(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in non-increasing order and the matching
    eigenvectors as columns.  The off-diagonal convergence threshold is
    1e-12 times the trace magnitude (absolute 1e-300 floor for the
    zero-trace corner).
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(S, S.T, atol=1e-10 * max(1.0, float(np.abs(S).max()))):
        raise ValueError("matrix must be symmetric")
    threshold = max(1e-12 * abs(float(np.trace(S))), 1e-300)
    w, V = _jacobi_eigh(S.copy(), threshold)
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def pca_fit(X: np.ndarray, out_dim: int) -> PcaModel:
    """Fit PCA by Jacobi eigendecomposition of the sample covariance.

    Requires n >= 2 and out_dim <= min(n - 1, d).  When the covariance rank
    is below ``out_dim`` a warning is issued and the trailing explained
    variances are reported as exactly zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n, d = X.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 rows, got {n}")
    if not 1 <= out_dim <= min(n - 1, d):
        raise ValueError(
            f"out_dim {out_dim} outside [1, min(n-1, d)] = "
            f"[1, {min(n - 1, d)}]"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite values in X")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (n - 1)
    w, V = jacobi_eigh(cov)
    tol = 1e-12 * max(float(np.trace(cov)), 0.0)
    rank = int(np.sum(w > tol))
    if rank < out_dim:
        warnings.warn(
            f"covariance rank {rank} is below out_dim {out_dim}; "
            "trailing variances reported as zero",
            stacklevel=2,
        )
    ev = np.maximum(w[:out_dim], 0.0)
    ev[rank:] = 0.0
    components = V[:, :out_dim].T.copy()
    for row in components:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    model = PcaModel(mean=mean, components=components, explained_variance=ev)
    model.validate()
    return model


def pca_transform(model: PcaModel, X: np.ndarray) -> np.ndarray:
    """Project rows of X onto the model's principal axes."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.mean.shape[0]:
        raise ValueError(
            f"X width {X.shape[-1]} does not match model width "
            f"{model.mean.shape[0]}"
        )
    return (X - model.mean) @ model.components.T


# ---------------------------------------------------------------------------
# UMAP


def _exact_knn(X: np.ndarray, k: int,
               chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force Euclidean k-nearest neighbours including the point itself.

    Returns (indices, distances) of shape (n, k), sorted by distance with
    stable index order on ties.
    """
    n = X.shape[0]
    sq = np.einsum("ij,ij->i", X, X)
    indices = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (X[lo:hi] @ X.T)
        np.maximum(d2, 0.0, out=d2)
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        part_d = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, part_d), axis=1)
        indices[lo:hi] = np.take_along_axis(part, order, axis=1)
        dists[lo:hi] = np.sqrt(np.take_along_axis(part_d, order, axis=1))
    return indices, dists


@numba.njit(cache=True)
def _smooth_knn_dist(dists: np.ndarray, k: float, n_iter: int = 64):
    """Per-point kernel calibration.

    For each point, finds rho (distance to the nearest other point) and a
    scale sigma such that the smoothed membership weights of its neighbour
    distances sum to log2(k).
    """
    n = dists.shape[0]
    target = np.log2(k)
    rho = np.zeros(n)
    sigma = np.zeros(n)
    mean_all = np.mean(dists)
    for i in range(n):
        lo = 0.0
        hi = np.inf
        mid = 1.0
        row = dists[i]
        nonzero_min = 0.0
        for j in range(row.shape[0]):
            if row[j] > 0.0:
                nonzero_min = row[j]
                break
        rho[i] = nonzero_min
        for _ in range(n_iter):
            psum = 0.0
            for j in range(1, row.shape[0]):
                d = row[j] - rho[i]
                if d > 0.0:
                    psum += np.exp(-d / mid)
                else:
                    psum += 1.0
            if abs(psum - target) < _SMOOTH_K_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                if hi == np.inf:
                    mid *= 2.0
                else:
                    mid = (lo + hi) / 2.0
        sigma[i] = mid
        if rho[i] > 0.0:
            mean_i = np.mean(row)
            if sigma[i] < _MIN_K_DIST_SCALE * mean_i:
                sigma[i] = _MIN_K_DIST_SCALE * mean_i
        else:
            if sigma[i] < _MIN_K_DIST_SCALE * mean_all:
                sigma[i] = _MIN_K_DIST_SCALE * mean_all
    return rho, sigma


def _membership_graph(indices: np.ndarray, dists: np.ndarray,
                      rho: np.ndarray, sigma: np.ndarray,
                      n: int) -> scipy.sparse.coo_matrix:
    """Directed membership strengths, then fuzzy-union symmetrization."""
    k = indices.shape[1]
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = indices.ravel()
    d = dists.ravel()
    r = np.repeat(rho, k)
    s = np.repeat(sigma, k)
    vals = np.exp(-np.maximum(d - r, 0.0) / s)
    vals[cols == rows] = 0.0
    A = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    T = A.transpose().tocoo()
    prod = A.multiply(T)
    W = (A + T - prod).tocoo()
    W.sum_duplicates()
    return W


def find_ab_params(spread: float, min_dist: float) -> tuple[float, float]:
    """Fit the (a, b) pair of the low-dimensional similarity curve.

    Least-squares fit of 1 / (1 + a x^(2b)) to the piecewise target that is
    1 below ``min_dist`` and exp(-(x - min_dist) / spread) beyond it.
    """

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.zeros_like(xv)
    yv[xv < min_dist] = 1.0
    mask = xv >= min_dist
    yv[mask] = np.exp(-(xv[mask] - min_dist) / spread)
    params, _ = scipy.optimize.curve_fit(curve, xv, yv)
    return float(params[0]), float(params[1])


def _make_epochs_per_sample(weights: np.ndarray, n_epochs: int) -> np.ndarray:
    """Edge sampling cadence: stronger edges are stepped more often."""
    result = -1.0 * np.ones_like(weights)
    n_samples = n_epochs * (weights / weights.max())
    result[n_samples > 0] = n_epochs / n_samples[n_samples > 0]
    return result


@numba.njit(inline="always")
def _mix_u64(z):
    z = (z + numba.uint64(0x9E3779B97F4A7C15)) & numba.uint64(0xFFFFFFFFFFFFFFFF)
    z = (z ^ (z >> numba.uint64(30))) * numba.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> numba.uint64(27))) * numba.uint64(0x94D049BB133111EB)
    return z ^ (z >> numba.uint64(31))


@numba.njit(inline="always")
def _hash4(a, b, c, d):
    h = _mix_u64(numba.uint64(a))
    h = _mix_u64(h ^ numba.uint64(b))
    h = _mix_u64(h ^ numba.uint64(c))
    h = _mix_u64(h ^ numba.uint64(d))
    return h


@numba.njit(cache=True)
def _optimize_layout(emb, head, tail, epochs_per_sample, a, b, gamma,
                     initial_alpha, n_epochs, neg_sample_rate, seed):
    """Sequential stochastic layout with counter-based negative sampling.

    The random vertex for each negative sample is a hash of (seed, epoch,
    edge, sample), so the layout is independent of thread count and
    iteration order changes elsewhere.
    """
    n_vertices = emb.shape[0]
    dim = emb.shape[1]
    n_edges = head.shape[0]
    epochs_per_negative = epochs_per_sample / neg_sample_rate
    epoch_of_next_sample = epochs_per_sample.copy()
    epoch_of_next_negative = epochs_per_negative.copy()
    for epoch in range(n_epochs):
        alpha = initial_alpha * (1.0 - epoch / n_epochs)
        for e in range(n_edges):
            if epoch_of_next_sample[e] > epoch:
                continue
            i = head[e]
            j = tail[e]
            d2 = 0.0
            for t in range(dim):
                diff = emb[i, t] - emb[j, t]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (
                    a * d2 ** b + 1.0
                )
            else:
                coeff = 0.0
            for t in range(dim):
                grad = coeff * (emb[i, t] - emb[j, t])
                if grad > 4.0:
                    grad = 4.0
                elif grad < -4.0:
                    grad = -4.0
                emb[i, t] += alpha * grad
                emb[j, t] -= alpha * grad
            epoch_of_next_sample[e] += epochs_per_sample[e]
            n_neg = int(
                (epoch - epoch_of_next_negative[e]) / epochs_per_negative[e]
            )
            for p in range(n_neg):
                other = int(
                    _hash4(seed, epoch, e, p) % numba.uint64(n_vertices)
                )
                d2 = 0.0
                for t in range(dim):
                    diff = emb[i, t] - emb[other, t]
                    d2 += diff * diff
                if d2 > 0.0:
                    coeff = (2.0 * gamma * b) / (
                        (0.001 + d2) * (a * d2 ** b + 1.0)
                    )
                elif i == other:
                    continue
                else:
                    coeff = 0.0
                for t in range(dim):
                    if coeff > 0.0:
                        grad = coeff * (emb[i, t] - emb[other, t])
                        if grad > 4.0:
                            grad = 4.0
                        elif grad < -4.0:
                            grad = -4.0
                    else:
                        grad = 4.0
                    emb[i, t] += alpha * grad
            epoch_of_next_negative[e] += n_neg * epochs_per_negative[e]
    return emb


def umap_embed(X: np.ndarray, cfg: ReductionConfig) -> np.ndarray:
    """Embed rows of X into ``cfg.out_dim`` dimensions.

    Reference pipeline: exact kNN graph, per-point kernel calibration,
    fuzzy-union symmetrization, weak-edge pruning, then ``cfg.umap_epochs``
    of attract/repel updates with five negative samples per positive step.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite values in X")
    n = X.shape[0]
    k = cfg.umap_neighbors
    if n <= k:
        raise ValueError(
            f"need more rows ({n}) than umap_neighbors ({k})"
        )
    indices, dists = _exact_knn(X, k)
    rho, sigma = _smooth_knn_dist(dists, float(k))
    W = _membership_graph(indices, dists, rho, sigma, n)
    n_epochs = cfg.umap_epochs
    data = W.data.copy()
    if n_epochs > 10:
        data[data < data.max() / float(n_epochs)] = 0.0
    keep = data > 0.0
    head = W.row[keep].astype(np.int64)
    tail = W.col[keep].astype(np.int64)
    weights = data[keep]
    epochs_per_sample = _make_epochs_per_sample(weights, n_epochs)
    a, b = find_ab_params(1.0, cfg.umap_min_dist)
    rng = philox(mix64(cfg.seed, 0x554D4150))
    emb = rng.uniform(-10.0, 10.0, size=(n, cfg.out_dim))
    span_min = emb.min(axis=0)
    span_max = emb.max(axis=0)
    emb = 10.0 * (emb - span_min) / (span_max - span_min)
    emb = _optimize_layout(
        emb, head, tail, epochs_per_sample, a, b, 1.0, 1.0,
        n_epochs, 5, cfg.seed & ((1 << 64) - 1),
    )
    return np.asarray(emb, dtype=float)


def reduce(X: np.ndarray, cfg: ReductionConfig) -> np.ndarray:
    """Dispatch to the configured backend.

    ``none`` returns the input unchanged; ``pca`` and ``umap`` return an
    (n, cfg.out_dim) float array.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite values in X")
    if cfg.backend == "none":
        return X
    if cfg.out_dim > X.shape[1]:
        raise ValueError(
            f"out_dim {cfg.out_dim} exceeds input width {X.shape[1]}"
        )
    if cfg.backend == "pca":
        model = pca_fit(X, cfg.out_dim)
        return pca_transform(model, X)
    return umap_embed(X, cfg)
