"""K-means over movement vectors, elbow-based choice of k, and outlier flags."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import _kernels as K
from .errors import DegenerateElbowWarning, DimensionMismatch, TooFewPoints, TooFewSamples

DEFAULT_MAX_ITER = 300
DEFAULT_RESTARTS = 10
OUTLIER_Z = 3.5


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    seed: int
    trace: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "inertia": self.inertia,
            "assignments": self.assignments.tolist(),
            "centroids": self.centroids.tolist(),
        }


def _as_points(vectors) -> np.ndarray:
    try:
        pts = np.asarray(vectors, dtype=float)
    except ValueError:
        raise DimensionMismatch("vectors have unequal lengths") from None
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise DimensionMismatch("vectors must form an (n, d) array")
    return np.ascontiguousarray(pts)


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding; falls back to a uniform pick once every point is covered."""
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rest[rng.integers(len(rest))])
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int = DEFAULT_MAX_ITER):
    """Lloyd iterations from the given centroids.

    Returns ``(centroids, labels, inertia, trace)``; ``trace`` holds the
    inertia after every assignment and every update step, so it is
    non-increasing.  An empty cluster takes over the point farthest from its
    current centroid.
    """
    centroids = np.array(centroids, dtype=float)
    k = len(centroids)
    labels, d2 = K.assign_nearest(points, centroids)
    trace = [float(d2.sum())]
    for _ in range(max_iter):
        for c in range(k):
            if not np.any(labels == c):
                # donor must not be the last member of its own cluster
                sizes = np.bincount(labels, minlength=k)
                movable = np.where(sizes[labels] > 1, d2, -1.0)
                far = int(np.argmax(movable))
                labels[far] = c
                d2[far] = 0.0
                centroids[c] = points[far]
        for c in range(k):
            centroids[c] = points[labels == c].mean(axis=0)
        diff = points - centroids[labels]
        trace.append(float(np.einsum("nd,nd->", diff, diff)))
        new_labels, d2 = K.assign_nearest(points, centroids)
        trace.append(float(d2.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, labels, float(d2.sum()), tuple(trace)


def kmeans_fit(vectors, k: int, seed: int = 0, max_iter: int = DEFAULT_MAX_ITER,
               n_init: int = DEFAULT_RESTARTS) -> ClusterModel:
    """k-means++ seeded Lloyd clustering, best inertia over ``n_init`` restarts.

    Restart ``r`` draws from ``default_rng([seed, r])``.  Equal inertias keep
    the earliest restart.
    """
    points = _as_points(vectors)
    n = len(points)
    if k < 1 or n < k:
        raise TooFewSamples(f"need n >= k >= 1, got n={n}, k={k}")
    if max_iter < 1 or n_init < 1:
        raise ValueError("max_iter and n_init must be at least 1")
    best = None
    for r in range(n_init):
        rng = np.random.default_rng([seed, r])
        init = kmeans_plus_plus(points, k, rng)
        centroids, labels, inertia, trace = lloyd(points, init, max_iter)
        if best is None or inertia < best[2]:
            best = (centroids, labels, inertia, trace)
    centroids, labels, inertia, trace = best
    return ClusterModel(k, centroids, labels, inertia, seed, trace)


def recompute_inertia(model: ClusterModel, vectors) -> float:
    points = _as_points(vectors)
    diff = points - model.centroids[model.assignments]
    return float(np.sum(diff * diff))


def inertia_curve(vectors, kmax: int, seed: int = 0, n_init: int = DEFAULT_RESTARTS,
                  max_iter: int = DEFAULT_MAX_ITER) -> dict:
    """Best inertia for every k in 1..kmax."""
    return {
        k: kmeans_fit(vectors, k, seed, max_iter, n_init).inertia
        for k in range(1, kmax + 1)
    }


def default_kmax(n: int) -> int:
    return min(10, n - 1)


def chord_distances(inertia_by_k: Mapping[int, float]) -> dict:
    """Perpendicular distance of each (k, inertia) point to the end-to-end chord."""
    ks = sorted(inertia_by_k)
    if len(ks) < 3:
        raise TooFewPoints("elbow selection needs inertias for at least 3 values of k")
    if ks != list(range(1, ks[-1] + 1)):
        raise TooFewPoints("inertias must cover k = 1..kmax")
    vals = np.array([inertia_by_k[k] for k in ks], dtype=float)
    if np.any(vals < 0):
        raise ValueError("inertias must be nonnegative")
    k_arr = np.array(ks, dtype=float)
    dk = k_arr[-1] - k_arr[0]
    dv = vals[-1] - vals[0]
    cross = dk * (vals - vals[0]) - dv * (k_arr - k_arr[0])
    dist = np.abs(cross) / np.hypot(dk, dv)
    return dict(zip(ks, dist.tolist()))


def elbow_select(inertia_by_k: Mapping[int, float]) -> int:
    """k with the largest distance to the chord; ties go to the smaller k.

    A flat (collinear) curve returns 1 and emits :class:`DegenerateElbowWarning`.
    """
    dist = chord_distances(inertia_by_k)
    scale = max(abs(v) for v in inertia_by_k.values()) or 1.0
    best = max(dist.values())
    if best <= 1e-12 * scale:
        warnings.warn("inertia curve has no elbow (collinear points)", DegenerateElbowWarning)
        return 1
    return min(k for k, d in dist.items() if d == best)


def modified_z_scores(distances) -> np.ndarray:
    """0.6745 * (d - median) / MAD, with the mean absolute deviation as fallback."""
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        return d
    med = np.median(d)
    dev = np.abs(d - med)
    spread = np.median(dev)
    if spread == 0:
        spread = dev.mean()
    if spread == 0:
        return np.zeros_like(d)
    return 0.6745 * (d - med) / spread


def flag_outliers(distances, threshold: float = OUTLIER_Z) -> list:
    return [int(i) for i in np.nonzero(modified_z_scores(distances) > threshold)[0]]


def detect_outliers(model: Optional[ClusterModel], vectors, threshold: float = OUTLIER_Z) -> list:
    """Indices of samples unusually far from their assigned centroid."""
    points = _as_points(vectors) if len(vectors) else np.empty((0, 1))
    if model is None or len(points) == 0:
        return []
    diff = points - model.centroids[model.assignments]
    return flag_outliers(np.sqrt(np.sum(diff * diff, axis=1)), threshold)


def assign(model: ClusterModel, vector) -> int:
    """Nearest centroid; ties resolve to the lower index."""
    v = np.atleast_1d(np.asarray(vector, dtype=float))
    if v.shape != model.centroids.shape[1:]:
        raise DimensionMismatch(f"vector length {v.shape} vs centroid length {model.centroids.shape[1:]}")
    labels, _ = K.assign_nearest(np.ascontiguousarray(v[None, :]), np.ascontiguousarray(model.centroids))
    return int(labels[0])


@dataclass(frozen=True)
class ClusterAnalysis:
    model: ClusterModel
    inertia_by_k: dict
    chosen_k: int
    degenerate_elbow: bool
    outliers: tuple
    kept_index: tuple

    def assignment_for_all(self, n: int) -> list:
        """Per-sample cluster index, ``None`` for excluded outliers."""
        out = [None] * n
        for pos, idx in enumerate(self.kept_index):
            out[idx] = int(self.model.assignments[pos])
        return out


def analyze(vectors, seed: int = 0, kmax: Optional[int] = None,
            n_init: int = DEFAULT_RESTARTS, max_iter: int = DEFAULT_MAX_ITER) -> ClusterAnalysis:
    """Inertia curve -> elbow k -> fit -> drop outliers -> refit once with the same k and seed."""
    points = _as_points(vectors)
    n = len(points)
    if kmax is None:
        kmax = default_kmax(n)
    if kmax < 3:
        raise TooFewPoints(f"kmax={kmax}; elbow selection needs at least 4 samples")
    curve = inertia_curve(points, kmax, seed, n_init, max_iter)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateElbowWarning)
        k = elbow_select(curve)
    degenerate = any(issubclass(w.category, DegenerateElbowWarning) for w in caught)
    model = kmeans_fit(points, k, seed, max_iter, n_init)
    outliers = detect_outliers(model, points)
    kept = [i for i in range(n) if i not in set(outliers)]
    if outliers and len(kept) >= k:
        model = kmeans_fit(points[kept], k, seed, max_iter, n_init)
    else:
        outliers, kept = [], list(range(n))
    return ClusterAnalysis(model, curve, k, degenerate, tuple(outliers), tuple(kept))
