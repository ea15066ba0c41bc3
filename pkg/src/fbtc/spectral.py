"""Spectral clustering on a similarity graph.

The transition matrix ``P = D^-1 S`` (D the diagonal of row sums) is
similar to the symmetric ``A = D^-1/2 S D^-1/2``, so its spectrum is real
and is obtained from a symmetric eigensolver; eigenvectors map back as
``u = D^-1/2 v``.

The constant vector is always an eigenvector of P with eigenvalue 1. It is
taken as the leading eigenvector explicitly and deflated out before the
solve, which keeps the embedding well defined when the graph has several
components and the eigenvalue 1 is repeated.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg

from fbtc.errors import EigenFailureError, FBTCError, InvalidKError, IsolatedPointError
from fbtc.graph import SimilarityGraph, build_similarity, choose_p
from fbtc.partition import ClusterResult, fuzzy_kmeans, kmeans

#: Largest n solved with a dense symmetric eigendecomposition.
DENSE_EIGEN_LIMIT = 2000
EIGEN_TOL = 1e-10
DEGENERATE_ROW_TOL = 1e-12
_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    """Leading eigenpairs of P and the row-normalised embedding.

    Attributes
    ----------
    eigenvalues : ndarray of shape (K,)
        ``1 = lambda_1 >= ... >= lambda_K``.
    eigenvectors : ndarray of shape (n, K)
        Right eigenvectors of P; column 0 is constant.
    embedding : ndarray of shape (n, K - 1)
        Rows of ``eigenvectors[:, 1:]`` scaled to unit length.
    degree : ndarray of shape (n,)
    degenerate_rows : tuple of int
        Rows whose norm was below ``DEGENERATE_ROW_TOL``; left as zeros.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    embedding: np.ndarray
    degree: np.ndarray
    degenerate_rows: tuple = ()


def _matrix(s):
    if isinstance(s, SimilarityGraph):
        return s.matrix
    return s if sparse.issparse(s) else np.asarray(s, dtype=np.float64)


def _degree(s):
    d = np.asarray(s.sum(axis=1), dtype=np.float64).ravel()
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise IsolatedPointError(f"points with zero similarity to all others: {bad.tolist()[:10]}")
    return d


def row_normalize(s):
    """``P[i, j] = S[i, j] / sum_k S[i, k]``."""
    m = _matrix(s)
    d = _degree(m)
    if sparse.issparse(m):
        return sparse.diags(1.0 / d) @ m
    return m / d[:, None]


def _fix_signs(u):
    """Flip each column so its largest-magnitude entry is positive.

    Entries within a relative ``_TIE_TOL`` of the maximum count as tied and
    the lowest index decides.
    """
    for k in range(u.shape[1]):
        col = np.abs(u[:, k])
        top = col.max()
        i = int(np.flatnonzero(col >= top * (1 - _TIE_TOL))[0])
        if u[i, k] < 0:
            u[:, k] = -u[:, k]
    return u


def _order(vals, u):
    """Descending eigenvalues; near-ties ordered by the sign-fixed vectors."""
    idx = list(range(len(vals)))
    idx.sort(key=lambda k: -vals[k])
    out = []
    i = 0
    while i < len(idx):
        j = i + 1
        while j < len(idx) and abs(vals[idx[j]] - vals[idx[i]]) <= _TIE_TOL:
            j += 1
        group = sorted(idx[i:j], key=lambda k: tuple(-u[:, k]))
        out.extend(group)
        i = j
    return np.asarray(out, dtype=int)


def _dense_solve(a, v1, m):
    # Push the known leading direction to -2, below every other eigenvalue.
    b = a - 3.0 * np.outer(v1, v1)
    n = b.shape[0]
    try:
        vals, vecs = linalg.eigh(b, subset_by_index=[n - m, n - 1], driver="evr")
    except (linalg.LinAlgError, ValueError) as exc:
        raise EigenFailureError(f"dense eigendecomposition failed: {exc}") from exc
    return vals[::-1], vecs[:, ::-1]


def _sparse_solve(a, v1, m, tol, max_iter):
    n = a.shape[0]

    def matvec(x):
        x = np.asarray(x).ravel()
        return a @ x - 3.0 * v1 * (v1 @ x)

    op = sparse_linalg.LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    v0 = np.linspace(1.0, 2.0, n)
    try:
        vals, vecs = sparse_linalg.eigsh(op, k=m, which="LA", tol=tol, maxiter=max_iter, v0=v0)
    except sparse_linalg.ArpackNoConvergence as exc:
        raise EigenFailureError(f"Lanczos iteration did not converge: {exc}") from exc
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


def spectral_embedding(
    s,
    K: int,
    dense_limit: int = DENSE_EIGEN_LIMIT,
    tol: float = EIGEN_TOL,
    max_iter: Optional[int] = None,
) -> SpectralEmbedding:
    """Top-K eigenpairs of the row-normalised similarity and the K-1 dim embedding."""
    m = _matrix(s)
    n = m.shape[0]
    K = int(K)
    if not 2 <= K <= n:
        raise InvalidKError(f"K must satisfy 2 <= K <= n, got K={K}, n={n}")
    d = _degree(m)
    root = np.sqrt(d)
    v1 = root / np.linalg.norm(root)

    if n <= dense_limit:
        dense = m.toarray() if sparse.issparse(m) else m
        a = dense / root[:, None] / root[None, :]
        a = 0.5 * (a + a.T)
        vals, vecs = _dense_solve(a, v1, K - 1)
    else:
        inv = sparse.diags(1.0 / root)
        a = (inv @ sparse.csr_matrix(m) @ inv).tocsr()
        vals, vecs = _sparse_solve(a, v1, K - 1, tol, max_iter)

    u = _fix_signs(vecs / root[:, None])
    order = _order(vals, u)
    vals, u = vals[order], u[:, order]

    const = np.full((n, 1), 1.0 / np.sqrt(n))
    eigenvectors = np.hstack([const, u])
    eigenvalues = np.concatenate([[1.0], vals])

    norms = np.linalg.norm(u, axis=1)
    degenerate = np.flatnonzero(norms < DEGENERATE_ROW_TOL)
    emb = np.zeros_like(u)
    ok = norms >= DEGENERATE_ROW_TOL
    emb[ok] = u[ok] / norms[ok, None]
    return SpectralEmbedding(
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        embedding=emb,
        degree=d,
        degenerate_rows=tuple(int(i) for i in degenerate),
    )


def eigen_residuals(s, emb: SpectralEmbedding) -> np.ndarray:
    """``||P u_k - lambda_k u_k||_inf / ||u_k||_inf`` for each returned pair."""
    p = row_normalize(s)
    u = emb.eigenvectors
    pu = p @ u
    res = np.max(np.abs(pu - u * emb.eigenvalues[None, :]), axis=0)
    return res / np.max(np.abs(u), axis=0)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except FBTCError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


def cluster_similarity(
    s,
    K: int,
    partitioner: str = "hard",
    seed: int = 0,
    restarts: int = 50,
    threads: int = 1,
    **partition_kwargs,
) -> ClusterResult:
    """Embed a given similarity graph and partition the embedded points."""
    if partitioner not in ("hard", "fuzzy"):
        raise ValueError(f"partitioner must be 'hard' or 'fuzzy', got {partitioner!r}")
    emb = _stage("embedding", spectral_embedding, s, K)
    fn = kmeans if partitioner == "hard" else fuzzy_kmeans
    result = _stage("partition", fn, emb.embedding, K, seed=seed, restarts=restarts, threads=threads, **partition_kwargs)
    result.embedding = emb
    result.diagnostics = {
        "eigenvalues": emb.eigenvalues.tolist(),
        "degenerate_rows": list(emb.degenerate_rows),
        "wcss": result.wcss,
        "iterations": result.iterations,
        "restarts": result.restarts_run,
        "converged": result.converged,
    }
    return result


def spectral_cluster(
    features,
    K: int,
    partitioner: str = "hard",
    seed: int = 0,
    p: Optional[int] = None,
    restarts: int = 50,
    threads: int = 1,
    **partition_kwargs,
) -> ClusterResult:
    """Full clustering of standardised features.

    choose_p -> mutual-kNN similarity -> spectral embedding -> (fuzzy) K-means.
    ``features`` is a :class:`~fbtc.features.FeatureMatrix` or an (n, d) array.
    The returned result carries ``graph``, ``embedding`` and a
    ``diagnostics`` dict.
    """
    x = getattr(features, "rows", features)
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    K = int(K)
    if K < 2:
        raise InvalidKError(f"K must be at least 2, got {K}", stage="choose_p")
    if p is None:
        p = _stage("choose_p", choose_p, n, K)
    elif not 1 <= int(p) < n:
        raise InvalidKError(f"p must satisfy 1 <= p < n, got p={p}, n={n}", stage="similarity")
    graph = _stage("similarity", build_similarity, x, int(p))
    result = cluster_similarity(graph, K, partitioner, seed, restarts, threads, **partition_kwargs)
    result.graph = graph
    result.diagnostics = {"p": int(p), **result.diagnostics}
    return result
