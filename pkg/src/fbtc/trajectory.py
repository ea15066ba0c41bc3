"""Trajectory container and the numerical primitives shared by the measures.

A trajectory is one individual's observations ``y_1..y_N`` at strictly
increasing times ``t_1..t_N``. Grids need not be equidistant, so every
primitive here works on arbitrary spacing.
"""

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from fbtc.errors import (
    LengthMismatchError,
    NonFiniteValueError,
    NonMonotoneTimesError,
    TooShortError,
)

MIN_LENGTH = 3

#: Interior derivative weightings. ``"proximity"`` puts the larger weight on
#: the one-sided difference towards the closer neighbour; ``"literal"`` uses
#: w_j^± = |t_j - t_{j±1}| / (t_{j+1} - t_{j-1}), which favours the farther one.
WEIGHTINGS = ("proximity", "literal")

#: End-point rules. ``"one-sided"`` is the plain forward/backward difference;
#: ``"quadratic"`` differentiates the parabola through the three end points,
#: which is exact for quadratics but no longer a two-point formula.
ENDPOINTS = ("one-sided", "quadratic")


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Validated observations of one individual.

    Use :func:`validate_trajectory` to build one; the constructor does not
    check invariants.
    """

    times: np.ndarray
    values: np.ndarray
    id: Any = None

    @property
    def N(self) -> int:
        return int(self.times.shape[0])

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    def with_values(self, values) -> "Trajectory":
        return Trajectory(times=self.times, values=_frozen(values), id=self.id)

    def with_times(self, times) -> "Trajectory":
        return Trajectory(times=_frozen(times), values=self.values, id=self.id)

    def __repr__(self):
        return f"Trajectory(id={self.id!r}, N={self.N})"


def validate_trajectory(times: Sequence[float], values: Sequence[float], id=None) -> Trajectory:
    """Check raw parallel sequences and return a :class:`Trajectory`.

    Input order is preserved; times are not sorted here.

    Raises
    ------
    LengthMismatchError, TooShortError, NonMonotoneTimesError, NonFiniteValueError
    """
    t = np.asarray(times, dtype=np.float64).ravel()
    y = np.asarray(values, dtype=np.float64).ravel()
    if t.shape != y.shape:
        raise LengthMismatchError(
            f"{t.shape[0]} times but {y.shape[0]} values", trajectory_id=id
        )
    if t.shape[0] < MIN_LENGTH:
        raise TooShortError(
            f"need at least {MIN_LENGTH} observations, got {t.shape[0]}", trajectory_id=id
        )
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise NonFiniteValueError("times and values must be finite", trajectory_id=id)
    steps = np.diff(t)
    if np.any(steps <= 0):
        j = int(np.argmax(steps <= 0))
        raise NonMonotoneTimesError(
            f"times must be strictly increasing: t[{j}]={t[j]!r}, t[{j + 1}]={t[j + 1]!r}",
            trajectory_id=id,
        )
    return Trajectory(times=_frozen(t), values=_frozen(y), id=id)


def trapezoid_integral(times, samples) -> float:
    """Trapezoidal rule over a (possibly non-uniform) grid.

    Returns ``sum_j (G_j + G_{j+1}) / 2 * (t_{j+1} - t_j)``; exact when G is
    piecewise linear between the knots.
    """
    t = np.asarray(times, dtype=np.float64)
    g = np.asarray(samples, dtype=np.float64)
    if t.shape[0] < 2:
        raise TooShortError("trapezoid rule needs at least 2 samples")
    if t.shape != g.shape:
        raise LengthMismatchError(f"{t.shape[0]} times but {g.shape[0]} samples")
    if np.any(np.diff(t) <= 0):
        raise NonMonotoneTimesError("quadrature knots must be strictly increasing")
    return float(np.sum(0.5 * (g[:-1] + g[1:]) * np.diff(t)))


def trapezoid_mean(times, samples) -> float:
    t = np.asarray(times, dtype=np.float64)
    return trapezoid_integral(t, samples) / float(t[-1] - t[0])


def _end_quadratic(h1, h2, s1, s2):
    # Slope at the outer knot of the parabola through three points, from the
    # two adjacent difference quotients s1 (outer) and s2 (inner).
    return s1 - h1 * (s2 - s1) / (h1 + h2)


def _stencil(t, g, weighting, endpoints="one-sided"):
    """One-sided differences at the ends, weighted blend in the interior."""
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")
    if endpoints not in ENDPOINTS:
        raise ValueError(f"unknown endpoint rule {endpoints!r}; expected one of {ENDPOINTS}")
    dt = np.diff(t)
    slopes = np.diff(g) / dt  # slopes[j] is D^+ at j and D^- at j+1
    out = np.empty_like(g)
    if endpoints == "one-sided":
        out[0] = slopes[0]
        out[-1] = slopes[-1]
    else:
        out[0] = _end_quadratic(dt[0], dt[1], slopes[0], slopes[1])
        out[-1] = _end_quadratic(dt[-1], dt[-2], slopes[-1], slopes[-2])
    left, right = dt[:-1], dt[1:]
    width = left + right
    if weighting == "proximity":
        w_minus, w_plus = right / width, left / width
    else:
        w_minus, w_plus = left / width, right / width
    out[1:-1] = w_minus * slopes[:-1] + w_plus * slopes[1:]
    return out


def first_derivative(traj: Trajectory, weighting: str = "proximity", endpoints: str = "one-sided") -> np.ndarray:
    """Approximate f'(t_j) at every observation time.

    Forward difference at t_1, backward at t_N, and in between a convex
    combination of the left and right difference quotients. With the default
    ``"proximity"`` weighting the combination is exact for quadratics on any
    grid; ``"literal"`` weights each quotient by its own step length and is only
    first-order accurate on uneven grids.

    The one-sided end values are first-order: applied twice they give about
    half of f'' at the ends. ``endpoints="quadratic"`` removes that bias.
    """
    return _stencil(traj.times, traj.values, weighting, endpoints)


def second_derivative(
    traj: Trajectory, weighting: str = "proximity", d1=None, endpoints: str = "one-sided"
) -> np.ndarray:
    """Apply the first-derivative stencil to the sequence (t_j, D_j)."""
    if d1 is None:
        d1 = first_derivative(traj, weighting, endpoints)
    return _stencil(traj.times, np.asarray(d1, dtype=np.float64), weighting, endpoints)


@dataclass(frozen=True, eq=False)
class DerivativeProfile:
    d1: np.ndarray
    d2: np.ndarray


def derivative_profile(traj: Trajectory, weighting: str = "proximity", endpoints: str = "one-sided") -> DerivativeProfile:
    d1 = first_derivative(traj, weighting, endpoints)
    d2 = second_derivative(traj, weighting, d1=d1, endpoints=endpoints)
    d1.setflags(write=False)
    d2.setflags(write=False)
    return DerivativeProfile(d1=d1, d2=d2)


def center_vertically(traj: Trajectory) -> Trajectory:
    """Subtract the trapezoid mean (not the arithmetic mean) from the values."""
    y = traj.values
    if y.min() == y.max():
        return traj.with_values(np.zeros_like(y))
    return traj.with_values(y - trapezoid_mean(traj.times, y))


def shift_horizontally(traj: Trajectory) -> Trajectory:
    """Make the first observation time zero."""
    return traj.with_times(traj.times - traj.times[0])
