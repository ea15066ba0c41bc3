"""Hard and fuzzy K-means with seeded multi-restart selection.

Every restart draws from its own PCG64 stream derived from
``SeedSequence([seed, restart_index])``, so serial and threaded execution
select the same result. Returned labels run from 1 to K and are put in
order of first appearance.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from fbtc.errors import InvalidKError

COINCIDE_TOL = 1e-12
LOW_CONFIDENCE_MARGIN = 0.1


@dataclass(eq=False)
class ClusterResult:
    """Output of a partitioner.

    ``labels`` are 1-based. ``weights`` is the n x K membership matrix for
    fuzzy runs and ``None`` for hard ones; ``wcss`` holds the fuzzy objective
    in that case.
    """

    labels: np.ndarray
    wcss: float
    K: int
    seed: int
    restarts_run: int
    iterations: int
    weights: Optional[np.ndarray] = None
    converged: bool = True
    history: list = field(default_factory=list)
    centers: Optional[np.ndarray] = None
    max_row_sum_error: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    embedding: object = None
    graph: object = None

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K + 1)[1:]

    @property
    def low_confidence(self) -> Optional[np.ndarray]:
        if self.weights is None:
            return None
        return low_confidence(self.weights)


def _check(points, K):
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= int(K) <= n:
        raise InvalidKError(f"K must satisfy 1 <= K <= n, got K={K}, n={n}")
    return x, int(K)


def _rng(seed, restart):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(restart)])))


def _sq_dists(x, centers):
    diff = x[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeanspp_init(x, K, rng) -> np.ndarray:
    """Distance-squared weighted seeding."""
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    d2 = np.sum((x - x[idx[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            cum = np.cumsum(d2)
            i = int(np.searchsorted(cum, rng.random() * total, side="right"))
            i = min(i, n - 1)
        else:
            i = int(rng.integers(n))
        idx.append(i)
        d2 = np.minimum(d2, np.sum((x - x[i]) ** 2, axis=1))
    return x[idx].copy()


def wcss(points, labels) -> float:
    """Within-cluster sum of squared distances to the cluster means.

    ``labels`` may be 0- or 1-based; only the grouping matters.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels)
    total = 0.0
    for k in np.unique(labels):
        members = x[labels == k]
        total += float(np.sum((members - members.mean(axis=0)) ** 2))
    return total


def _means(x, assign, K):
    centers = np.zeros((K, x.shape[1]))
    np.add.at(centers, assign, x)
    counts = np.bincount(assign, minlength=K)
    return centers / counts[:, None]


def _repair_empty(x, assign, centers, K):
    """Give every empty cluster the point farthest from its own center."""
    counts = np.bincount(assign, minlength=K)
    for k in np.flatnonzero(counts == 0):
        d2 = np.sum((x - centers[assign]) ** 2, axis=1)
        movable = counts[assign] > 1
        d2 = np.where(movable, d2, -1.0)
        i = int(np.argmax(d2))
        counts[assign[i]] -= 1
        assign[i] = k
        counts[k] = 1
    return assign


def _lloyd(x, K, rng, max_iter):
    centers = kmeanspp_init(x, K, rng)
    assign = None
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(x, centers), axis=1)
        new = _repair_empty(x, new, centers, K)
        if assign is not None and np.array_equal(new, assign):
            converged = True
            break
        assign = new
        centers = _means(x, assign, K)
        history.append(float(np.sum((x - centers[assign]) ** 2)))
    return assign, centers, history, it, converged


def canonical_relabel(assign, K):
    """Map cluster ids to 0..K-1 in order of first appearance; returns (labels, perm).

    ``perm[new] = old``; clusters that never appear keep their relative order
    after the ones that do.
    """
    seen = []
    for a in assign:
        if a not in seen:
            seen.append(int(a))
            if len(seen) == K:
                break
    perm = seen + [k for k in range(K) if k not in seen]
    inverse = np.empty(K, dtype=int)
    inverse[perm] = np.arange(K)
    return inverse[assign], np.asarray(perm)


def _run_restarts(fn, restarts, threads):
    if threads and threads > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(restarts)))
    return [fn(r) for r in range(restarts)]


def kmeans(points, K: int, seed: int = 0, restarts: int = 50, max_iter: int = 300, threads: int = 1) -> ClusterResult:
    """Lloyd's algorithm from k-means++ seeds; keeps the restart with least WCSS.

    Ties in WCSS go to the lowest restart index. Empty clusters are refilled
    with the point farthest from its center, which never raises the WCSS.
    """
    x, K = _check(points, K)
    restarts = max(1, int(restarts))

    def one(r):
        return _lloyd(x, K, _rng(seed, r), max_iter)

    runs = _run_restarts(one, restarts, threads)
    best = min(range(restarts), key=lambda r: (runs[r][2][-1], r))
    assign, centers, history, iters, converged = runs[best]
    labels, perm = canonical_relabel(assign, K)
    return ClusterResult(
        labels=labels + 1,
        wcss=history[-1],
        K=K,
        seed=int(seed),
        restarts_run=restarts,
        iterations=iters,
        converged=converged,
        history=history,
        centers=centers[perm],
    )


def fuzzy_weights(points, centers) -> np.ndarray:
    """Normalised inverse squared distances to the centers.

    A point within ``COINCIDE_TOL`` of one or more centers splits its weight
    equally among them.
    """
    x = np.asarray(points, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    d2 = _sq_dists(x, c)
    hit = d2 < COINCIDE_TOL**2
    w = np.empty_like(d2)
    on_center = hit.any(axis=1)
    if on_center.any():
        w[on_center] = hit[on_center] / hit[on_center].sum(axis=1, keepdims=True)
    off = ~on_center
    inv = 1.0 / d2[off]
    w[off] = inv / inv.sum(axis=1, keepdims=True)
    return w


def fuzzy_objective(points, weights, centers) -> float:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return float(np.sum(weights**2 * _sq_dists(x, centers)))


def weighted_labels(weights) -> np.ndarray:
    """1-based argmax of each weight row; ties go to the lower cluster."""
    return np.argmax(np.asarray(weights), axis=1) + 1


def low_confidence(weights, margin: float = LOW_CONFIDENCE_MARGIN) -> np.ndarray:
    """True where the top two weights differ by less than ``margin``."""
    w = np.sort(np.atleast_2d(np.asarray(weights, dtype=np.float64)), axis=1)
    if w.shape[1] < 2:
        return np.zeros(w.shape[0], dtype=bool)
    return (w[:, -1] - w[:, -2]) < margin


def _fuzzy_run(x, K, rng, tol, max_iter):
    centers = kmeanspp_init(x, K, rng)
    worst = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = fuzzy_weights(x, centers)
        worst = max(worst, float(np.max(np.abs(w.sum(axis=1) - 1.0))))
        w2 = w**2
        mass = w2.sum(axis=0)
        new = centers.copy()
        live = mass > 0
        new[live] = (w2[:, live].T @ x) / mass[live, None]
        moved = float(np.max(np.sqrt(np.sum((new - centers) ** 2, axis=1))))
        centers = new
        if moved < tol:
            converged = True
            break
    w = fuzzy_weights(x, centers)
    worst = max(worst, float(np.max(np.abs(w.sum(axis=1) - 1.0))))
    return w, centers, fuzzy_objective(x, w, centers), it, converged, worst


def fuzzy_kmeans(
    points,
    K: int,
    seed: int = 0,
    restarts: int = 50,
    tol: float = 1e-8,
    max_iter: int = 300,
    threads: int = 1,
) -> ClusterResult:
    """Fuzzy K-means with fuzzifier 2; keeps the restart with least fuzzy WCSS.

    Each center is the mean of all points weighted by their squared
    membership. Iteration stops once no center moves by ``tol`` or more;
    hitting ``max_iter`` first sets ``converged=False`` but still returns.
    """
    x, K = _check(points, K)
    restarts = max(1, int(restarts))

    def one(r):
        return _fuzzy_run(x, K, _rng(seed, r), tol, max_iter)

    runs = _run_restarts(one, restarts, threads)
    best = min(range(restarts), key=lambda r: (runs[r][2], r))
    w, centers, obj, iters, converged, worst = runs[best]
    assign = np.argmax(w, axis=1)
    labels, perm = canonical_relabel(assign, K)
    return ClusterResult(
        labels=labels + 1,
        wcss=obj,
        K=K,
        seed=int(seed),
        restarts_run=restarts,
        iterations=iters,
        weights=w[:, perm],
        converged=converged,
        centers=centers[perm],
        max_row_sum_error=max(r[5] for r in runs),
    )
