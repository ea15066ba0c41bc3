"""Feature matrix assembly: standardisation, capping and outlier probing."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from fbtc.errors import AllColumnsConstantError

# A column is constant when its sd is below this fraction of its largest |value|.
CONSTANT_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Standardised measures, one row per trajectory.

    Attributes
    ----------
    rows : ndarray of shape (n, d)
        z-scored values of the retained columns.
    column_ids : tuple of str
        Measure ids of the retained columns, in order.
    column_means, column_sds : ndarray of shape (d,)
        Statistics of the retained columns before standardisation.
    dropped_columns : tuple of str
        Columns removed because they were constant.
    """

    rows: np.ndarray
    column_ids: tuple
    column_means: np.ndarray
    column_sds: np.ndarray
    dropped_columns: tuple = ()

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def d(self) -> int:
        return int(self.rows.shape[1])

    def subset(self, keep: Sequence[int]) -> "FeatureMatrix":
        """Rows ``keep`` only; the statistics are not re-estimated."""
        rows = self.rows[np.asarray(keep, dtype=int)]
        return FeatureMatrix(rows, self.column_ids, self.column_means, self.column_sds, self.dropped_columns)


def column_stats(raw):
    """Per-column mean and population sd (denominator n), fixed summation order."""
    x = np.asarray(raw, dtype=np.float64)
    n = x.shape[0]
    mean = np.sum(x, axis=0) / n
    sd = np.sqrt(np.sum((x - mean) ** 2, axis=0) / n)
    return mean, sd


def standardize(raw, column_ids: Optional[Sequence[str]] = None) -> FeatureMatrix:
    """z-score each column with the population sd; drop constant columns.

    A column counts as constant when its sd is at most ``CONSTANT_RTOL``
    times its largest absolute entry, so the decision does not depend on
    the units the measures were expressed in.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("raw measures must be a 2-D array")
    n, d = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to standardise, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("raw measures contain non-finite entries")
    if column_ids is None:
        column_ids = tuple(f"c{j + 1}" for j in range(d))
    column_ids = tuple(column_ids)
    if len(column_ids) != d:
        raise ValueError(f"{len(column_ids)} column ids for {d} columns")

    mean, sd = column_stats(x)
    scale = np.max(np.abs(x), axis=0)
    keep = sd > CONSTANT_RTOL * scale
    dropped = tuple(c for c, k in zip(column_ids, keep) if not k)
    if not keep.any():
        raise AllColumnsConstantError(f"every column is constant: {', '.join(column_ids)}")
    z = (x[:, keep] - mean[keep]) / sd[keep]
    kept = tuple(c for c, k in zip(column_ids, keep) if k)
    return FeatureMatrix(z, kept, mean[keep], sd[keep], dropped)


def winsorize(raw, limit_sds: float = 3.0, bounds=None):
    """Clamp each column to ``mean +/- limit_sds * sd`` of the raw column.

    Returns ``(capped, bounds)`` where ``bounds = (lower, upper)``. Passing
    those bounds back in reuses them instead of re-estimating, which makes
    repeated capping idempotent.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("need at least 2 rows to winsorize")
    if bounds is None:
        mean, sd = column_stats(x)
        bounds = (mean - limit_sds * sd, mean + limit_sds * sd)
    lower, upper = (np.asarray(b, dtype=np.float64) for b in bounds)
    return np.clip(x, lower, upper), (lower, upper)


def default_probe_k(n: int) -> int:
    return max(1, min(n // 3, 20))


def flag_outliers(features, k_probe: Optional[int] = None, seed: int = 0, restarts: int = 10) -> set:
    """Rows that K-means with many clusters isolates into one-point clusters.

    ``k_probe`` defaults to ``min(n // 3, 20)`` and is capped at ``n - 2``.
    A singleton whose point duplicates another row is never flagged.
    """
    from fbtc.partition import kmeans

    x = features.rows if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        return set()
    k = default_probe_k(n) if k_probe is None else int(k_probe)
    k = max(1, min(k, n - 2))
    result = kmeans(x, k, seed=seed, restarts=restarts)
    counts = np.bincount(result.labels, minlength=k + 1)
    flagged = set()
    for i in np.flatnonzero(counts[result.labels] == 1):
        d2 = np.sum((x - x[i]) ** 2, axis=1)
        d2[i] = np.inf
        if d2.min() > 0.0:
            flagged.add(int(i))
    return flagged
