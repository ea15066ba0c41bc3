"""The twenty trajectory measures.

Each measure m1..m20 is a computable approximation, from ``(t_j, y_j)``
alone, of a property of the unknown underlying function f:

====  =====================================================
m1    maximum of f
m2    minimum of f
m3    range, m1 - m2
m4    mean of f (trapezoid rule)
m5    standard deviation of f
m6    slope of the best L2 affine approximation
m7    intercept of the best L2 affine approximation
m8    share of variance explained by the affine approximation
m9    crossings of the affine approximation per unit time
m10   net variation per unit time
m11   late minus early net variation around a midpoint
m12   total variation per unit time
m13   spikiness: (time above mean - time below) / total
m14   maximum of f'
m15   minimum of f'
m16   standard deviation of f'
m17   net variation of f' per unit time
m18   maximum of f''
m19   minimum of f''
m20   standard deviation of f''
====  =====================================================

Conventions to be aware of:

* m8 is divided by ``t_N - t_1`` so that it estimates a proportion in [0, 1];
  it is then clamped to [0, 1].
* m11 is ``y_N - 2 y_m + y_1``, the expansion of
  ``[f(b) - f(t*)] - [f(t*) - f(a)]``.
* m20 centres the second derivative on its own left-Riemann mean.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from fbtc.errors import DegenerateTimeSpreadError, FBTCError, MidpointOutOfRangeError
from fbtc.trajectory import DerivativeProfile, Trajectory, derivative_profile

MEASURE_IDS = tuple(f"m{i}" for i in range(1, 21))

#: Measures that change under a vertical translation y -> y + c.
NOT_VERTICALLY_INVARIANT = frozenset({"m1", "m2", "m4", "m7"})
#: Measures that change under a horizontal translation t -> t + c.
NOT_HORIZONTALLY_INVARIANT = frozenset({"m7"})

PRESETS = {
    "all": MEASURE_IDS,
    "shape-only": tuple(m for m in MEASURE_IDS if m not in NOT_VERTICALLY_INVARIANT),
}

#: m[a*y, b*t] = a**p * b**q * m[y, t] with (p, q) below, for a, b > 0.
SCALING_EXPONENTS = {
    "m1": (1, 0), "m2": (1, 0), "m3": (1, 0), "m4": (1, 0), "m5": (1, 0),
    "m6": (1, -1), "m7": (1, 0), "m8": (0, 0), "m9": (0, -1), "m10": (1, -1),
    "m11": (1, 0), "m12": (1, -1), "m13": (0, 0), "m14": (1, -1), "m15": (1, -1),
    "m16": (1, -1), "m17": (1, -2), "m18": (1, -2), "m19": (1, -2), "m20": (1, -2),
}

# Residuals with |r| <= RESIDUAL_TOL * max|y| count as lying on the line (m9).
RESIDUAL_TOL = 1e-10
# Relative tie tolerance when picking the observation closest to the midpoint.
MIDPOINT_TIE_TOL = 1e-12


def normalize_selection(selection) -> tuple:
    """Turn a preset name, or an iterable of ids, into canonical ordered ids."""
    if selection is None:
        return MEASURE_IDS
    if isinstance(selection, str):
        if selection in PRESETS:
            return PRESETS[selection]
        selection = [s for s in selection.replace(";", ",").split(",") if s.strip()]
    chosen = set()
    for s in selection:
        s = str(s).strip().lower()
        if s.isdigit():
            s = f"m{s}"
        if s not in MEASURE_IDS:
            raise ValueError(f"unknown measure id {s!r}")
        chosen.add(s)
    if not chosen:
        raise ValueError("measure selection is empty")
    return tuple(m for m in MEASURE_IDS if m in chosen)


@dataclass(frozen=True, eq=False)
class AffineFit:
    slope: float
    intercept: float
    fitted: np.ndarray
    residuals: np.ndarray


@dataclass(frozen=True)
class MeasureVector:
    values: dict
    computed_mask: tuple = field(default=())
    midpoint_used: Optional[float] = None

    def __getitem__(self, key):
        return self.values[key]

    def as_array(self, ids=None) -> np.ndarray:
        ids = ids or tuple(self.values)
        return np.array([self.values[m] for m in ids], dtype=np.float64)


def _mean(t, g):
    dt = np.diff(t)
    return float(np.sum(0.5 * (g[:-1] + g[1:]) * dt) / (t[-1] - t[0]))


def _left_mean(t, g):
    return float(np.sum(g[:-1] * np.diff(t)) / (t[-1] - t[0]))


def affine_fit(traj: Trajectory) -> AffineFit:
    """Minimise the trapezoid-discretised L2 distance to an affine function.

    Closed-form normal equations of
    ``I(b0, b1) = sum_j [(b0 + b1 t_j - y_j)^2 + (b0 + b1 t_{j+1} - y_{j+1})^2] / 2 * dt_j``.
    Times are shifted to the centre of the window before forming the sums,
    which leaves the minimiser unchanged and avoids cancellation when the
    time origin is far away.
    """
    t, y = traj.times, traj.values
    span = t[-1] - t[0]
    s = t - 0.5 * (t[0] + t[-1])
    dt = np.diff(s)
    s_bar = 0.5 * (s[:-1] + s[1:])
    y_bar = 0.5 * (y[:-1] + y[1:])
    s2_bar = 0.5 * (s[:-1] ** 2 + s[1:] ** 2)
    sy_bar = 0.5 * (s[:-1] * y[:-1] + s[1:] * y[1:])
    sum_s = np.sum(s_bar * dt)
    sum_y = np.sum(y_bar * dt)
    denom = np.sum(s2_bar * dt) - sum_s**2 / span
    if not denom > 1e-12 * span**3:
        raise DegenerateTimeSpreadError(
            f"time spread too small for an affine fit (denominator {denom!r})",
            trajectory_id=traj.id,
        )
    slope = float((np.sum(sy_bar * dt) - sum_s * sum_y / span) / denom)
    # Intercept in the original time coordinate.
    t_bar = 0.5 * (t[:-1] + t[1:])
    intercept = float(np.sum((y_bar - slope * t_bar) * np.diff(t)) / span)
    if y.min() == y.max():
        slope, intercept = 0.0, float(y[0])
    fitted = intercept + slope * t
    residuals = y - fitted
    fitted.setflags(write=False)
    residuals.setflags(write=False)
    return AffineFit(slope=slope, intercept=intercept, fitted=fitted, residuals=residuals)


def fit_objective(traj: Trajectory, intercept: float, slope: float) -> float:
    """Trapezoid L2 objective of the line ``intercept + slope * t``."""
    t, y = traj.times, traj.values
    sq = (intercept + slope * t - y) ** 2
    return float(np.sum(0.5 * (sq[:-1] + sq[1:]) * np.diff(t)))


def basic_measures(traj: Trajectory):
    """Return (m1, m2, m3, m4, m5)."""
    t, y = traj.times, traj.values
    m1, m2 = float(y.max()), float(y.min())
    if m1 == m2:
        return m1, m2, 0.0, m1, 0.0
    m4 = _mean(t, y)
    m5 = float(np.sqrt(_mean(t, (y - m4) ** 2)))
    return m1, m2, m1 - m2, m4, m5


def affine_measures(traj: Trajectory, fit: AffineFit, m4=None, m5=None):
    """Return (m6, m7, m8)."""
    if m4 is None or m5 is None:
        _, _, _, m4, m5 = basic_measures(traj)
    if m5 == 0.0:
        return fit.slope, fit.intercept, 1.0
    explained = _mean(traj.times, (fit.intercept + fit.slope * traj.times - m4) ** 2)
    m8 = min(1.0, max(0.0, explained / m5**2))
    return fit.slope, fit.intercept, m8


def crossing_count(residuals, tol: float = 0.0) -> int:
    """Number of j with r_j != 0 whose next nonzero residual has opposite sign."""
    r = np.asarray(residuals, dtype=np.float64)
    signs = np.sign(np.where(np.abs(r) <= tol, 0.0, r))
    nz = signs[signs != 0]
    return int(np.count_nonzero(nz[:-1] * nz[1:] < 0))


def crossing_rate(traj: Trajectory, fit: AffineFit, residual_tol: float = RESIDUAL_TOL) -> float:
    """m9. Residuals within ``residual_tol * max|y|`` of zero count as on the line."""
    tol = residual_tol * float(np.max(np.abs(traj.values)))
    return crossing_count(fit.residuals, tol) / traj.span


def closest_index(times, target: float) -> int:
    """Index of the observation closest to ``target``; near-ties go to the earlier time."""
    t = np.asarray(times)
    dist = np.abs(t - target)
    best = float(dist.min())
    tie = MIDPOINT_TIE_TOL * float(t[-1] - t[0])
    return int(np.flatnonzero(dist <= best + tie)[0])


def variation_measures(traj: Trajectory, midpoint: Optional[float] = None):
    """Return (m10, m11, m12, t_m).

    ``t_m`` is the observation time standing in for the midpoint, which
    defaults to the centre of the observation window.
    """
    t, y = traj.times, traj.values
    span = traj.span
    if midpoint is None:
        midpoint = 0.5 * (t[0] + t[-1])
    elif not (t[0] < midpoint < t[-1]):
        raise MidpointOutOfRangeError(
            f"midpoint {midpoint!r} outside ({t[0]!r}, {t[-1]!r})", trajectory_id=traj.id
        )
    m = closest_index(t, midpoint)
    m10 = float((y[-1] - y[0]) / span)
    m11 = float(y[-1] - 2.0 * y[m] + y[0])
    m12 = float(np.sum(np.abs(np.diff(y))) / span)
    return m10, m11, m12, float(t[m])


def time_above_below(traj: Trajectory, m4: float, mean_tol: float = 0.0):
    """Approximate the time spent above and below the mean.

    A change of side between two observations is placed at the midpoint of
    the interval. An observation sitting on the mean inherits, on each
    adjacent half-interval, the side of the neighbour on that side. Values
    within ``mean_tol * range`` of the mean count as on the mean.
    """
    t, y = traj.times, traj.values
    band = mean_tol * float(y.max() - y.min())
    side = np.where(y > m4 + band, 1, np.where(y < m4 - band, -1, 0))
    half = 0.5 * np.diff(t)
    above = below = 0.0
    # Each interval [t_j, t_{j+1}] is split in two halves; the left half
    # takes the side of y_j unless y_j is on the mean, then it takes y_{j+1}'s.
    for j in range(len(half)):
        for own, other in ((side[j], side[j + 1]), (side[j + 1], side[j])):
            s = own if own != 0 else other
            if s > 0:
                above += half[j]
            elif s < 0:
                below += half[j]
    return above, below


def spikiness(traj: Trajectory, m4: float, mean_tol: float = 0.0) -> float:
    """m13; 0 for a constant trajectory."""
    if traj.values.min() == traj.values.max():
        return 0.0
    above, below = time_above_below(traj, m4, mean_tol)
    if above + below == 0.0:
        return 0.0
    return float((above - below) / (above + below))


def _spread(t, g):
    """Root trapezoid mean square deviation from the left-Riemann mean."""
    mu = _left_mean(t, g)
    return float(np.sqrt(_mean(t, (g - mu) ** 2)))


def derivative_measures(traj: Trajectory, d: DerivativeProfile):
    """Return (m14, m15, m16, m17)."""
    t, d1 = traj.times, d.d1
    return (
        float(d1.max()),
        float(d1.min()),
        _spread(t, d1),
        float((d1[-1] - d1[0]) / traj.span),
    )


def second_derivative_measures(traj: Trajectory, d: DerivativeProfile):
    """Return (m18, m19, m20)."""
    d2 = d.d2
    return float(d2.max()), float(d2.min()), _spread(traj.times, d2)


def compute_measure_vector(
    traj: Trajectory,
    selection=None,
    midpoint: Optional[float] = None,
    weighting: str = "proximity",
    residual_tol: float = RESIDUAL_TOL,
    mean_tol: float = 0.0,
    endpoints: str = "one-sided",
) -> MeasureVector:
    """Compute the selected measures of one trajectory.

    Intermediate quantities (the mean, the affine fit, the derivative
    profile) are computed at most once and only when a selected measure
    needs them.
    """
    ids = normalize_selection(selection)
    want = set(ids)
    out = {}
    midpoint_used = None
    try:
        basics = None
        if want & {"m1", "m2", "m3", "m4", "m5", "m8", "m13"}:
            basics = basic_measures(traj)
            out.update(zip(("m1", "m2", "m3", "m4", "m5"), basics))
        if want & {"m6", "m7", "m8", "m9"}:
            fit = affine_fit(traj)
            m4 = basics[3] if basics else None
            m5 = basics[4] if basics else None
            if "m8" in want:
                out.update(zip(("m6", "m7", "m8"), affine_measures(traj, fit, m4, m5)))
            else:
                out["m6"], out["m7"] = fit.slope, fit.intercept
            if "m9" in want:
                out["m9"] = crossing_rate(traj, fit, residual_tol)
        if want & {"m10", "m11", "m12"}:
            m10, m11, m12, tm = variation_measures(traj, midpoint)
            out.update(m10=m10, m11=m11, m12=m12)
            if "m11" in want:
                midpoint_used = tm
        if "m13" in want:
            out["m13"] = spikiness(traj, basics[3], mean_tol)
        if want & {f"m{i}" for i in range(14, 21)}:
            d = derivative_profile(traj, weighting, endpoints)
            out.update(zip(("m14", "m15", "m16", "m17"), derivative_measures(traj, d)))
            out.update(zip(("m18", "m19", "m20"), second_derivative_measures(traj, d)))
    except FBTCError as exc:
        if exc.trajectory_id is None:
            exc.trajectory_id = traj.id
        raise
    values = {m: out[m] for m in ids}
    mask = tuple(m in want for m in MEASURE_IDS)
    return MeasureVector(values=values, computed_mask=mask, midpoint_used=midpoint_used)


def compute_measures(
    trajectories: Iterable[Trajectory],
    selection=None,
    threads: int = 1,
    **kwargs,
):
    """Measure many trajectories; returns ``(matrix, column_ids, vectors)``.

    Rows follow input order whatever the thread count.
    """
    trajectories = list(trajectories)
    ids = normalize_selection(selection)

    def one(tr):
        return compute_measure_vector(tr, ids, **kwargs)

    if threads and threads > 1 and len(trajectories) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(one, trajectories))
    else:
        vectors = [one(tr) for tr in trajectories]
    matrix = np.array([v.as_array(ids) for v in vectors], dtype=np.float64).reshape(len(vectors), len(ids))
    return matrix, ids, vectors
