"""Feature-quality diagnostics: stability ratios, clustering, 2-D projection.

All functions are pure functions of the feature arrays they receive, so every
diagnostic can be recomputed from the persisted CSVs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import substream

MEAN_EPS = 1e-12
LLOYD_TOL = 1e-9
LLOYD_MAX_ITER = 300


@dataclass
class StabilityRecord:
    series_id: str
    ratios: np.ndarray  # per-feature std / |mean| over the series' windows
    aggregate: float
    flagged_features: list[int] = field(default_factory=list)  # |mean| below threshold


@dataclass
class ClusterReport:
    k: int
    assignments: np.ndarray
    inertia: float
    silhouette: float
    centroids: np.ndarray
    feature_means: np.ndarray  # (k, n_features)
    feature_stds: np.ndarray  # (k, n_features)


def stability(window_features: dict[str, np.ndarray]) -> list[StabilityRecord]:
    """Per-series, per-feature ratio of (population) std to |mean| across
    windows.  Features whose mean is ~0 are flagged rather than dropped."""
    records = []
    for sid, feats in window_features.items():
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError(f"series {sid!r}: expected a (windows, features) array")
        if len(feats) < 2:
            records.append(
                StabilityRecord(sid, np.full(feats.shape[1], np.nan), np.nan,
                                flagged_features=list(range(feats.shape[1])))
            )
            continue
        std = feats.std(axis=0)
        mean = np.abs(feats.mean(axis=0))
        flagged = np.flatnonzero(mean < MEAN_EPS).tolist()
        ratios = np.where(mean < MEAN_EPS, np.nan, std / np.maximum(mean, MEAN_EPS))
        ok = ~np.isnan(ratios)
        aggregate = float(ratios[ok].mean()) if np.any(ok) else np.nan
        records.append(StabilityRecord(sid, ratios, aggregate, flagged))
    return records


def histogram_bins(values: np.ndarray, n_bins: int = 30) -> list[tuple[float, float, int]]:
    """(lo, hi, count) rows for finite values; empty input yields no rows."""
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if len(values) == 0:
        return []
    counts, edges = np.histogram(values, bins=n_bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(n_bins)]


def _euclidean_sq(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _plus_plus_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    for _ in range(1, k):
        d2 = _euclidean_sq(points, np.stack(centers)).min(axis=1)
        total = d2.sum()
        if total <= 0:
            raise ValueError("fewer distinct points than clusters")
        probs = d2 / total
        centers.append(points[rng.choice(len(points), p=probs)])
    return np.stack(centers)


def _lloyd(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    for _ in range(LLOYD_MAX_ITER):
        assign = _euclidean_sq(points, centers).argmin(axis=1)
        new_centers = centers.copy()
        for j in range(len(centers)):
            members = points[assign == j]
            if len(members):
                new_centers[j] = members.mean(axis=0)
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < LLOYD_TOL:
            break
    assign = _euclidean_sq(points, centers).argmin(axis=1)
    inertia = float(_euclidean_sq(points, centers)[np.arange(len(points)), assign].sum())
    return assign, centers, inertia


def silhouette_score(points: np.ndarray, assign: np.ndarray) -> float:
    """Mean silhouette over all points, Euclidean distance; singleton
    clusters score 0 for their members."""
    n = len(points)
    labels = np.unique(assign)
    if len(labels) < 2:
        return 0.0
    dist = np.sqrt(_euclidean_sq(points, points))
    scores = np.zeros(n)
    for i in range(n):
        own = assign == assign[i]
        n_own = int(own.sum())
        if n_own <= 1:
            continue
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, assign == c].mean() for c in labels if c != assign[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def kmeans_pp(features: np.ndarray, k: int, restarts: int = 10, seed: int = 0,
              extra_inits: list[np.ndarray] | None = None) -> ClusterReport:
    """k-means++ seeding plus Lloyd iterations; best of `restarts` runs by
    inertia.  `extra_inits` adds warm-start candidates to the pool."""
    points = np.asarray(features, dtype=np.float64)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(points):
        raise ValueError(f"k={k} exceeds the number of points {len(points)}")
    if len(np.unique(points, axis=0)) < k:
        raise ValueError(f"fewer than k={k} distinct points")
    rng = substream(seed, "clustering")
    best = None
    inits = [_plus_plus_seed(points, k, rng) for _ in range(restarts)]
    inits.extend(extra_inits or [])
    for init in inits:
        assign, centers, inertia = _lloyd(points, init)
        if best is None or inertia < best[2]:
            best = (assign, centers, inertia)
    assign, centers, inertia = best
    means = np.stack([points[assign == j].mean(axis=0) if np.any(assign == j) else centers[j]
                      for j in range(k)])
    stds = np.stack([points[assign == j].std(axis=0) if np.any(assign == j) else np.zeros(points.shape[1])
                     for j in range(k)])
    return ClusterReport(
        k=k, assignments=assign, inertia=inertia,
        silhouette=silhouette_score(points, assign),
        centroids=centers, feature_means=means, feature_stds=stds,
    )


def elbow_sweep(features: np.ndarray, k_range, restarts: int = 10, seed: int = 0) -> list[ClusterReport]:
    """Cluster for every k in k_range; no automatic selection is made.

    Each k also warm-starts from the previous k's centroids plus the point
    farthest from them, which keeps the inertia curve non-increasing.
    """
    points = np.asarray(features, dtype=np.float64)
    ks = list(k_range)
    if not ks or min(ks) < 2 or max(ks) > len(points) - 1:
        raise ValueError("k_range must lie within [2, n_points - 1]")
    reports: list[ClusterReport] = []
    prev_centers: np.ndarray | None = None
    for k in ks:
        extra = []
        if prev_centers is not None and len(prev_centers) == k - 1:
            d2 = _euclidean_sq(points, prev_centers).min(axis=1)
            extra.append(np.vstack([prev_centers, points[int(np.argmax(d2))]]))
        reports.append(kmeans_pp(points, k, restarts=restarts, seed=seed, extra_inits=extra))
        prev_centers = reports[-1].centroids
    return reports


def pca_2d(features: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Mean-centered projection onto the top two principal components.

    Returns (coords, components, rank_deficient).  Sign convention: each
    component's largest-magnitude loading is positive.  Rank-1 data gets a
    zero second coordinate and is flagged.
    """
    x = np.asarray(features, dtype=np.float64)
    if len(x) < 3:
        raise ValueError("pca_2d needs at least 3 points")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / len(x)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    comps = eigvecs[:, :2].T.copy()
    rank_deficient = bool(eigvals[1] <= max(eigvals[0], 0) * 1e-12)
    if rank_deficient:
        comps[1] = 0.0
    for i in range(2):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T, comps, rank_deficient


def similarity_extremes(ids: list[str], features: np.ndarray) -> tuple[tuple[str, str, float], tuple[str, str, float]]:
    """Closest and farthest pair of rows by Euclidean distance; ties resolve
    to the lexicographically smallest id pair."""
    x = np.asarray(features, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("need at least 2 series")
    dist = np.sqrt(_euclidean_sq(x, x))
    keyed = [
        (float(dist[i, j]), tuple(sorted((ids[i], ids[j]))))
        for i in range(len(x))
        for j in range(i + 1, len(x))
    ]
    dmin = min(d for d, _ in keyed)
    dmax = max(d for d, _ in keyed)
    close_pair = min(pair for d, pair in keyed if d == dmin)
    far_pair = min(pair for d, pair in keyed if d == dmax)
    return (close_pair[0], close_pair[1], dmin), (far_pair[0], far_pair[1], dmax)


def nearest_series(ids: list[str], coords: np.ndarray, centers: np.ndarray, count: int = 3) -> list[list[str]]:
    """For each 2-D region center, the `count` series nearest to it."""
    out = []
    for cx, cy in centers:
        d = np.sqrt(((coords - np.array([cx, cy])) ** 2).sum(axis=1))
        order = np.argsort(d, kind="stable")[:count]
        out.append([ids[i] for i in order])
    return out
