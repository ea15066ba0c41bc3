import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbtc.errors import (
    LengthMismatchError,
    NonFiniteValueError,
    NonMonotoneTimesError,
    TooShortError,
)
from fbtc.trajectory import (
    center_vertically,
    derivative_profile,
    first_derivative,
    second_derivative,
    shift_horizontally,
    trapezoid_integral,
    validate_trajectory,
)


def grids(min_size=3, max_size=25):
    gaps = st.lists(st.floats(0.05, 3.0), min_size=min_size - 1, max_size=max_size - 1)
    return st.tuples(st.floats(-50, 50), gaps).map(lambda g: g[0] + np.concatenate([[0.0], np.cumsum(g[1])]))


class TestValidate:
    def test_minimal_constant(self):
        tr = validate_trajectory([0, 1, 2], [5, 5, 5])
        assert tr.N == 3

    def test_duplicate_time(self):
        with pytest.raises(NonMonotoneTimesError):
            validate_trajectory([0, 1, 1], [1, 2, 3])

    def test_note_pad_readings(self):
        tr = validate_trajectory([0, 14, 30, 43], [15, 15.4, 13.9, 14.6])
        assert tr.N == 4 and tr.span == 43

    @pytest.mark.parametrize(
        "t, y, err",
        [
            ([0, 1, 2], [1, 2], LengthMismatchError),
            ([0, 1], [1, 2], TooShortError),
            ([0, 2, 1], [1, 2, 3], NonMonotoneTimesError),
            ([0, 1, 2], [1, np.nan, 3], NonFiniteValueError),
            ([0, np.inf, 2], [1, 2, 3], NonFiniteValueError),
        ],
    )
    def test_rejects(self, t, y, err):
        with pytest.raises(err):
            validate_trajectory(t, y, id="bad")

    def test_error_carries_id(self):
        with pytest.raises(TooShortError) as info:
            validate_trajectory([0, 1], [1, 2], id="p7")
        assert info.value.trajectory_id == "p7"
        assert info.value.to_dict() == {"error": "TooShort", "message": info.value.args[0], "id": "p7"}

    def test_arrays_read_only(self):
        tr = validate_trajectory([0, 1, 2], [1, 2, 3])
        with pytest.raises(ValueError):
            tr.values[0] = 9


class TestTrapezoid:
    def test_linear_exact(self):
        assert trapezoid_integral([0, 1, 2], [0, 1, 2]) == 2.0

    def test_constant(self):
        assert trapezoid_integral([1, 2.5, 4], [5, 5, 5]) == 15.0

    def test_square_coarse(self):
        assert trapezoid_integral([0, 0.5, 1], [0, 0.25, 1]) == pytest.approx(0.375, abs=1e-15)

    @pytest.mark.parametrize("N", [11, 101, 1001])
    def test_classical_bound(self, N):
        t = np.linspace(0, 1, N)
        assert abs(trapezoid_integral(t, t**2) - 1 / 3) <= 1 / (6 * (N - 1) ** 2) * (1 + 1e-9)

    @given(grids(2, 30), st.data())
    def test_exact_on_piecewise_linear(self, t, data):
        g = np.asarray(data.draw(st.lists(st.floats(-100, 100), min_size=len(t), max_size=len(t))))
        # Exact integral of the linear interpolant, segment by segment.
        exact = sum((g[j] + g[j + 1]) / 2 * (t[j + 1] - t[j]) for j in range(len(t) - 1))
        assert trapezoid_integral(t, g) == pytest.approx(exact, rel=1e-12, abs=1e-9)

    @given(grids(2, 20), st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, t, a, b):
        g, h = np.sin(t), np.cos(2 * t)
        lhs = trapezoid_integral(t, a * g + b * h)
        rhs = a * trapezoid_integral(t, g) + b * trapezoid_integral(t, h)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


class TestDerivatives:
    def test_affine_exact_any_grid(self, make_traj):
        t = np.array([0, 1, 2, 5.0])
        assert np.allclose(first_derivative(make_traj(t, 3 * t)), 3)

    def test_quadratic_equal_spacing(self, make_traj):
        assert first_derivative(make_traj([0, 1, 2], [0, 1, 4]))[1] == 2

    def test_quadratic_uneven_spacing(self, make_traj):
        tr = make_traj([0, 1, 3], [0, 1, 9])
        assert first_derivative(tr)[1] == pytest.approx(2.0)
        assert first_derivative(tr, "literal")[1] == pytest.approx(3.0)

    def test_second_derivative_square(self, make_traj):
        d = derivative_profile(make_traj([0, 1, 2, 3], [0, 1, 4, 9]))
        assert d.d1.tolist() == [1, 2, 4, 5]
        assert d.d2.tolist() == [1, 1.5, 1.5, 1]

    def test_second_derivative_affine_zero(self, make_traj):
        t = np.array([0, 0.3, 1.7, 2, 4.4])
        assert np.allclose(second_derivative(make_traj(t, 3 * t + 1)), 0, atol=1e-12)

    def test_constant(self, make_traj):
        d = derivative_profile(make_traj([0, 1, 2.5], [4, 4, 4]))
        assert np.all(d.d1 == 0) and np.all(d.d2 == 0)

    def test_quadratic_endpoints_exact_on_parabola(self, make_traj):
        t = np.array([0, 1, 3, 3.5, 6])
        d = derivative_profile(make_traj(t, t**2 - t), endpoints="quadratic")
        assert np.allclose(d.d1, 2 * t - 1) and np.allclose(d.d2, 2)

    def test_unknown_options(self, make_traj):
        tr = make_traj([0, 1, 2], [0, 1, 4])
        with pytest.raises(ValueError):
            first_derivative(tr, "nearest")
        with pytest.raises(ValueError):
            first_derivative(tr, endpoints="cubic")

    @settings(max_examples=50)
    @given(grids(3, 20), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
    def test_proximity_exact_for_quadratics_inside(self, t, a, b, c):
        tr = validate_trajectory(t, a + b * t + c * t**2)
        scale = 1 + abs(b) + abs(c) * np.max(np.abs(t))
        assert np.allclose(first_derivative(tr)[1:-1], b + 2 * c * t[1:-1], atol=1e-8 * scale)

    @given(grids(3, 20), st.floats(-3, 3), st.floats(-3, 3))
    def test_affine_second_derivative_vanishes(self, t, a, b):
        tr = validate_trajectory(t, a + b * t)
        assert np.allclose(second_derivative(tr), 0, atol=1e-8 * (1 + abs(b)))


class TestPreprocessing:
    def test_center(self, make_traj):
        assert center_vertically(make_traj([0, 1, 2], [2, 4, 6])).values.tolist() == [-2, 0, 2]

    def test_center_constant(self, make_traj):
        assert np.all(center_vertically(make_traj([0, 1, 2], [3, 3, 3])).values == 0)

    def test_shift(self, make_traj):
        assert shift_horizontally(make_traj([5, 6, 9], [1, 2, 3])).times.tolist() == [0, 1, 4]
