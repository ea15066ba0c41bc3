"""Mutual k-nearest-neighbour similarity graph.

``S[i, j]`` is 1 when i and j are each among the other's p nearest
neighbours, 1/2 when only one of them is, and 0 otherwise. Distances are
Euclidean on the standardised features and ties go to the lower index.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from fbtc.errors import InvalidKError

#: Above this many points the similarity matrix is stored sparse.
DENSE_LIMIT = 5000
_BLOCK = 64


def choose_p(n: int, K: int) -> int:
    """Neighbour count: about half the typical cluster size, clipped to [4, 8].

    Small typical cluster sizes (n/K < 4.5) drop to 3 or 2.
    """
    n, K = int(n), int(K)
    if n < 2:
        raise ValueError(f"need at least 2 points, got n={n}")
    if not 1 <= K < n:
        raise InvalidKError(f"K must satisfy 1 <= K < n, got K={K}, n={n}")
    # Compare n / K against 3.5 and 4.5 in integers: 2n < 7K, 2n < 9K.
    if 2 * n < 7 * K:
        return 2
    if 2 * n < 9 * K:
        return 3
    return max(4, min(8, n // (2 * K)))


def knn_sets(points, p: int) -> np.ndarray:
    """Indices of each point's ``p`` nearest neighbours, self excluded.

    Returns an ``(n, p)`` integer array, each row sorted by distance then index.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    p = int(p)
    if not 1 <= p < n:
        raise ValueError(f"p must satisfy 1 <= p < n, got p={p}, n={n}")
    out = np.empty((n, p), dtype=np.intp)
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        diff = x[start:stop, None, :] - x[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        out[start:stop] = np.argsort(d2, axis=1, kind="stable")[:, :p]
    return out


@dataclass(frozen=True, eq=False)
class SimilarityGraph:
    n: int
    p: int
    matrix: object  # ndarray, or scipy.sparse.csr_matrix above DENSE_LIMIT

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def degree(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def nnz_entries(self):
        """``(i, j, value)`` for every nonzero entry, row-major."""
        coo = sparse.coo_matrix(self.matrix)
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def components(self) -> np.ndarray:
        _, labels = sparse.csgraph.connected_components(sparse.csr_matrix(self.matrix), directed=False)
        return labels


def build_similarity(points, p: int) -> SimilarityGraph:
    """Mutual-kNN similarity with entries in {0, 1/2, 1} and zero diagonal."""
    nbrs = knn_sets(points, p)
    n = nbrs.shape[0]
    rows = np.repeat(np.arange(n), nbrs.shape[1])
    a = sparse.csr_matrix((np.ones(rows.shape[0]), (rows, nbrs.ravel())), shape=(n, n))
    s = ((a + a.T) * 0.5).tocsr()
    s.sort_indices()
    matrix = s if n > DENSE_LIMIT else s.toarray()
    return SimilarityGraph(n=n, p=int(p), matrix=matrix)


def _fmt(v: float) -> str:
    return {0.0: "0", 0.5: "0.5", 1.0: "1"}[float(v)]


def write_similarity(graph: SimilarityGraph, path) -> None:
    """Coordinate-list dump: header ``i j value`` then one nonzero entry per line."""
    rows, cols, vals = graph.nnz_entries()
    lines = ["i j value"] + [f"{i} {j} {_fmt(v)}" for i, j, v in zip(rows, cols, vals)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_similarity(path, n: int) -> np.ndarray:
    s = np.zeros((n, n))
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            i, j, v = line.split()
            s[int(i), int(j)] = float(v)
    return s
