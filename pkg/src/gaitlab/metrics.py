"""Separation, verification and clustering quality of a template space.

Every metric takes the templates, their identity labels, and optionally the
metric of the space: ``None`` for Euclidean, a :class:`FeatureModel`, or a
precision matrix. Mahalanobis metrics are handled by whitening the templates
once, after which all distances are Euclidean.

ROC and PR areas treat each unordered template pair as one verification
trial: same identity is the positive class and a smaller distance is a more
confident match.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import rankdata

from .errors import (
    CoincidentCentroidsError,
    InsufficientClassesError,
    ParameterError,
    ShapeError,
    UndefinedMetricError,
)
from .learned import FeatureModel, _class_structure


def whiten(templates, metric=None) -> np.ndarray:
    X = np.asarray(templates, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if metric is None:
        return X
    if isinstance(metric, FeatureModel):
        return metric.whiten(X)
    P = np.asarray(metric, dtype=np.float64)
    if P.shape != (X.shape[1], X.shape[1]):
        raise ShapeError(f"precision {P.shape} does not match templates of width {X.shape[1]}")
    return X @ np.linalg.cholesky(P)


def pairwise_distances(templates, metric=None) -> np.ndarray:
    return squareform(pdist(whiten(templates, metric)))


def _labels_checked(X, labels, min_classes=2):
    if len(labels) != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} templates but {len(labels)} labels")
    classes, codes = _class_structure(labels)
    if len(classes) < min_classes:
        raise InsufficientClassesError(f"need at least {min_classes} classes, got {len(classes)}")
    return classes, codes


def davies_bouldin(templates, labels, metric=None) -> float:
    """Mean over classes of the worst ``(sigma_c + sigma_c') / d(mu_c, mu_c')``.

    ``sigma_c`` is the mean distance of a class's members to its centroid.
    Lower is better.
    """
    X = whiten(templates, metric)
    classes, codes = _labels_checked(X, labels)
    C = len(classes)
    counts = np.bincount(codes, minlength=C)
    centroids = np.zeros((C, X.shape[1]))
    np.add.at(centroids, codes, X)
    centroids /= counts[:, None]
    spread = np.bincount(codes, np.linalg.norm(X - centroids[codes], axis=1), C) / counts
    sep = squareform(pdist(centroids))
    ratios = np.empty(C)
    for c in range(C):
        worst = 0.0
        for o in range(C):
            if o == c:
                continue
            if sep[c, o] == 0:
                raise CoincidentCentroidsError((classes[c], classes[o]))
            worst = max(worst, (spread[c] + spread[o]) / sep[c, o])
        ratios[c] = worst
    return math.fsum(ratios) / C


def silhouette_samples(templates, labels, metric=None) -> np.ndarray:
    X = whiten(templates, metric)
    classes, codes = _labels_checked(X, labels)
    C = len(classes)
    D = squareform(pdist(X))
    counts = np.bincount(codes, minlength=C)
    onehot = np.zeros((len(codes), C))
    onehot[np.arange(len(codes)), codes] = 1.0
    sums = D @ onehot
    rows = np.arange(len(codes))
    own = counts[codes]
    a = np.where(own > 1, sums[rows, codes] / np.maximum(own - 1, 1), 0.0)
    means = sums / counts
    means[rows, codes] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.zeros(len(codes))
    ok = (own > 1) & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return s


def silhouette(templates, labels, metric=None) -> float:
    """Mean silhouette; members of singleton classes score 0."""
    s = silhouette_samples(templates, labels, metric)
    return math.fsum(s) / len(s)


def pair_distances(templates, labels, metric=None) -> tuple[np.ndarray, np.ndarray]:
    """Distances and same-identity flags of all pairs ``i < j``, row-major."""
    X = whiten(templates, metric)
    if len(labels) != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} templates but {len(labels)} labels")
    _, codes = _class_structure(labels)
    i, j = np.triu_indices(len(codes), 1)
    return pdist(X), codes[i] == codes[j]


def _check_pairs(distances, positives):
    d = np.asarray(distances, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == len(pos):
        raise UndefinedMetricError("need at least one same-identity and one cross-identity pair")
    return d, pos, n_pos


def roc_auc_from_pairs(distances, positives) -> float:
    """Mann-Whitney estimate of P(d_pos < d_neg), ties counted as one half."""
    d, pos, n_pos = _check_pairs(distances, positives)
    n_neg = len(d) - n_pos
    ranks = rankdata(d)
    u = math.fsum(ranks[~pos]) - n_neg * (n_neg + 1) / 2
    return u / (n_pos * n_neg)


def average_precision_from_pairs(distances, positives) -> float:
    """Area under the PR curve swept by ascending distance (stable on ties)."""
    d, pos, n_pos = _check_pairs(distances, positives)
    hits = pos[np.argsort(d, kind="stable")]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_pos + 1) / ranks
    return math.fsum(precision) / n_pos


def roc_auc(templates, labels, metric=None) -> float:
    return roc_auc_from_pairs(*pair_distances(templates, labels, metric))


def pr_auc(templates, labels, metric=None) -> float:
    return average_precision_from_pairs(*pair_distances(templates, labels, metric))


def pair_summary(templates, labels, metric=None) -> dict:
    """Pair counts, positive prevalence and how many pairs sit in distance ties."""
    d, pos = pair_distances(templates, labels, metric)
    _, inverse, counts = np.unique(d, return_inverse=True, return_counts=True)
    return {
        "pairs": int(len(d)),
        "positive_pairs": int(pos.sum()),
        "prevalence": float(pos.mean()) if len(d) else float("nan"),
        "tied_pairs": int(np.sum(counts[inverse] > 1)),
    }


METRICS = {
    "dbi": davies_bouldin,
    "sc": silhouette,
    "roc": roc_auc,
    "pr": pr_auc,
}


def evaluate(templates, labels, metric=None, names=("dbi", "sc", "roc", "pr")) -> dict:
    """Named separation metrics on one template space."""
    X = whiten(templates, metric)
    out = {}
    for name in names:
        if name not in METRICS:
            raise ParameterError(f"unknown metric {name!r}; choose from {sorted(METRICS)}")
        out[name] = METRICS[name](X, labels)
    return out


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusteringResult:
    assignment: np.ndarray
    K: int
    centroids: np.ndarray
    sse: float
    n_iter: int


class PairConfusion(NamedTuple):
    tp: int
    tn: int
    fp: int
    fn: int


class ClusteringScores(NamedTuple):
    purity: float
    rand: float
    f_measure: float
    jaccard: float
    fowlkes_mallows: float
    pairs: PairConfusion


def _sq_dists(X, centers, x_sq):
    d = x_sq[:, None] - 2.0 * X @ centers.T + np.einsum("ij,ij->i", centers, centers)[None]
    return np.maximum(d, 0.0)


def _kmeans_pp(X, K, rng, x_sq):
    N = X.shape[0]
    chosen = [int(rng.integers(N))]
    closest = _sq_dists(X, X[chosen], x_sq)[:, 0]
    closest[chosen[0]] = 0.0
    for _ in range(1, K):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(N, p=closest / total))
        else:
            free = np.setdiff1d(np.arange(N), chosen)
            nxt = int(free[rng.integers(len(free))])
        chosen.append(nxt)
        closest = np.minimum(closest, _sq_dists(X, X[[nxt]], x_sq)[:, 0])
        closest[chosen] = 0.0
    return X[chosen].copy()


def _lloyd(X, centers, max_iter, x_sq):
    K = centers.shape[0]
    assign = None
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(X, centers, x_sq), axis=1)
        counts = np.bincount(new, minlength=K)
        for k in np.flatnonzero(counts == 0):
            # re-seed the empty cluster at the point farthest from its centroid
            gaps = np.einsum("ij,ij->i", X - centers[new], X - centers[new])
            gaps[counts[new] <= 1] = -1.0
            far = int(np.argmax(gaps))
            new[far] = k
            counts = np.bincount(new, minlength=K)
            centers[k] = X[far]
        converged = assign is not None and np.array_equal(new, assign)
        assign = new
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, X)
        centers = sums / counts[:, None]
        if converged:
            break
    resid = X - centers[assign]
    return assign, centers, math.fsum(np.einsum("ij,ij->i", resid, resid)), n_iter


def kmeans(templates, K: int, seed: int = 0, max_iter: int = 300,
           restarts: int = 1) -> ClusteringResult:
    """Seeded k-means++ followed by Lloyd iterations; best of ``restarts`` by SSE."""
    X = np.asarray(templates, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    N = X.shape[0]
    if not 1 <= K <= N:
        raise ParameterError(f"K must lie in 1..{N}, got {K}")
    if max_iter < 1 or restarts < 1:
        raise ParameterError("max_iter and restarts must be >= 1")
    x_sq = np.einsum("ij,ij->i", X, X)
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        centers = _kmeans_pp(X, K, rng, x_sq)
        assign, centers, sse, n_iter = _lloyd(X, centers, max_iter, x_sq)
        if best is None or sse < best.sse:
            best = ClusteringResult(assign, K, centers, sse, n_iter)
    return best


def _comb2(n):
    n = np.asarray(n, dtype=np.int64)
    return n * (n - 1) // 2


def contingency(assignment, labels) -> np.ndarray:
    """Cluster-by-class overlap counts."""
    _, clusters = np.unique(np.asarray(assignment), return_inverse=True)
    _, codes = _class_structure(labels)
    table = np.zeros((clusters.max() + 1, codes.max() + 1), dtype=np.int64)
    np.add.at(table, (clusters, codes), 1)
    return table


def pair_confusion(assignment, labels) -> PairConfusion:
    if len(assignment) != len(labels):
        raise ShapeError(f"{len(assignment)} assignments but {len(labels)} labels")
    table = contingency(assignment, labels)
    n = int(table.sum())
    tp = int(_comb2(table).sum())
    same_cluster = int(_comb2(table.sum(axis=1)).sum())
    same_class = int(_comb2(table.sum(axis=0)).sum())
    fp = same_cluster - tp
    fn = same_class - tp
    tn = n * (n - 1) // 2 - tp - fp - fn
    return PairConfusion(tp, tn, fp, fn)


def clustering_scores(result, labels) -> ClusteringScores:
    """Purity, Rand, F-measure, Jaccard and Fowlkes-Mallows against true identities."""
    assignment = result.assignment if isinstance(result, ClusteringResult) else result
    pc = pair_confusion(assignment, labels)
    if pc.tp + pc.fp == 0:
        raise UndefinedMetricError("no pair shares a cluster; precision is undefined")
    if pc.tp + pc.fn == 0:
        raise UndefinedMetricError("no pair shares an identity; recall is undefined")
    table = contingency(assignment, labels)
    n = table.sum()
    purity = table.max(axis=1).sum() / n
    total = pc.tp + pc.tn + pc.fp + pc.fn
    p = pc.tp / (pc.tp + pc.fp)
    r = pc.tp / (pc.tp + pc.fn)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return ClusteringScores(float(purity), (pc.tp + pc.tn) / total, f,
                            pc.tp / (pc.tp + pc.fp + pc.fn), math.sqrt(p * r), pc)
