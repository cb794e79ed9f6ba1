"""Resolution statistics and Gaussian kernel density diagnostics.

Image size is summarized by a scalar proxy, the mean of width and height.
Per-dataset proxy distributions are compared through Gaussian KDEs with a
Silverman rule-of-thumb bandwidth, plus an overlap coefficient between
densities and a subsample-convergence report.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from biaslens._rand import mix64, philox
from biaslens.corpus import CorpusManifest

_GRID_PAD_BANDWIDTHS = 6.0


def resolution_proxy(width: float, height: float) -> float:
    """Scalar size proxy: the mean of width and height in pixels."""
    if width <= 0 or height <= 0:
        raise ValueError(f"non-positive dimensions: {width}x{height}")
    return (float(width) + float(height)) / 2.0


def silverman_bandwidth(samples: np.ndarray) -> float:
    """Rule-of-thumb bandwidth 0.9 * min(std, IQR/1.34) * n**(-1/5).

    Falls back to 1.0 when the scale estimate degenerates to zero (all
    samples identical, or a single sample).
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    std = float(np.std(x))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    h = 0.9 * min(std, iqr / 1.34) * n ** (-0.2)
    if h <= 0.0:
        return 1.0
    return h


@dataclass
class ResolutionProfile:
    """Samples of the size proxy for one dataset plus a KDE bandwidth."""

    samples: np.ndarray
    bandwidth: float
    dataset: str = ""

    def __post_init__(self) -> None:
        self.samples = np.ascontiguousarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("profile needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite samples in profile")
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def n(self) -> int:
        return self.samples.size


def kde_fit(samples: np.ndarray, bandwidth: float | None = None,
            dataset: str = "") -> ResolutionProfile:
    """Build a profile, deriving the bandwidth by Silverman's rule if absent."""
    x = np.asarray(samples, dtype=float)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    return ResolutionProfile(samples=x, bandwidth=bandwidth, dataset=dataset)


def kde_eval(profile: ResolutionProfile, grid: np.ndarray) -> np.ndarray:
    """Evaluate the Gaussian KDE of ``profile`` on ``grid``.

    density(x) = (1 / (n h)) * sum_i phi((x - s_i) / h) with the standard
    normal pdf phi.  Evaluation is chunked over the grid so large profiles
    stay within a small memory envelope.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1:
        raise ValueError("grid must be 1-D")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite grid values")
    h = profile.bandwidth
    s = profile.samples
    norm = 1.0 / (s.size * h * np.sqrt(2.0 * np.pi))
    out = np.empty_like(x)
    step = max(1, int(2_000_000 // max(1, s.size)))
    for lo in range(0, x.size, step):
        block = x[lo:lo + step, None]
        z = (block - s[None, :]) / h
        out[lo:lo + step] = norm * np.exp(-0.5 * z * z).sum(axis=1)
    return out


def default_grid(profiles: list[ResolutionProfile], points: int = 2048,
                 pad_bandwidths: float = _GRID_PAD_BANDWIDTHS) -> np.ndarray:
    """Shared evaluation grid spanning all profiles plus a bandwidth margin."""
    if not profiles:
        raise ValueError("default_grid needs at least one profile")
    lo = min(float(p.samples.min()) - pad_bandwidths * p.bandwidth
             for p in profiles)
    hi = max(float(p.samples.max()) + pad_bandwidths * p.bandwidth
             for p in profiles)
    return np.linspace(lo, hi, points)


def overlap_coefficient(p: ResolutionProfile, q: ResolutionProfile,
                        grid: np.ndarray) -> float:
    """Overlap of two KDEs: the integral of min(density_p, density_q).

    Integration uses the trapezoid rule on ``grid``; the result is clamped
    into [0, 1].  A warning is issued when the grid does not extend at
    least six bandwidths beyond both sample supports, since mass outside
    the grid is silently dropped.
    """
    x = np.asarray(grid, dtype=float)
    if x.size < 2 or np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing with >= 2 points")
    for prof in (p, q):
        lo_needed = float(prof.samples.min()) - _GRID_PAD_BANDWIDTHS * prof.bandwidth
        hi_needed = float(prof.samples.max()) + _GRID_PAD_BANDWIDTHS * prof.bandwidth
        if x[0] > lo_needed or x[-1] < hi_needed:
            warnings.warn(
                "overlap grid narrower than six bandwidths beyond the "
                "sample support; the coefficient may be underestimated",
                stacklevel=2,
            )
            break
    dens_p = kde_eval(p, x)
    dens_q = kde_eval(q, x)
    val = float(np.trapezoid(np.minimum(dens_p, dens_q), x))
    return min(1.0, max(0.0, val))


def kde_convergence_report(samples: np.ndarray, subset_sizes: list[int],
                           seed: int = 0,
                           grid_points: int = 1024) -> list[tuple[int, float]]:
    """L1 distance between the full-sample KDE and subsample KDEs.

    For each requested size a subset is drawn without replacement from a
    stream keyed on ``(seed, size)``, refit with its own Silverman
    bandwidth, and compared to the full-sample density on a shared grid.
    Requesting the full size returns distance exactly 0.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("samples must be a non-empty 1-D array")
    full = kde_fit(x)
    grid = default_grid([full], points=grid_points)
    dens_full = kde_eval(full, grid)
    report: list[tuple[int, float]] = []
    for size in subset_sizes:
        if size < 1 or size > x.size:
            raise ValueError(
                f"subset size {size} outside [1, {x.size}]"
            )
        if size == x.size:
            report.append((size, 0.0))
            continue
        rng = philox(mix64(seed, size))
        subset = rng.choice(x, size=size, replace=False)
        dens_sub = kde_eval(kde_fit(subset), grid)
        dist = float(np.trapezoid(np.abs(dens_sub - dens_full), grid))
        report.append((size, dist))
    return report


def profiles_from_manifest(manifest: CorpusManifest,
                           bandwidth: float | None = None,
                           ) -> dict[str, ResolutionProfile]:
    """Group manifest records by dataset and fit one profile per dataset."""
    grouped: dict[str, list[float]] = {}
    for rec in manifest.records:
        grouped.setdefault(rec.dataset, []).append(
            resolution_proxy(rec.width, rec.height)
        )
    return {
        name: kde_fit(np.array(vals), bandwidth=bandwidth, dataset=name)
        for name, vals in grouped.items()
    }
