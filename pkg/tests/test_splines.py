"""Cubic B-spline basis: construction, evaluation and derivative identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from effica.errors import InvalidArgumentError
from effica.splines import (
    ORDER,
    _eval_basis_deriv2,
    bspline_recursion,
    eval_basis,
    eval_basis_deriv,
    eval_basis_with_deriv,
    make_basis,
)


def _random_basis(rng):
    lower = rng.uniform(-5, 5)
    return make_basis(lower, lower + rng.uniform(0.5, 20), int(rng.integers(1, 25)))


def _de_boor(basis, t):
    """Reference values from scipy's de Boor implementation."""
    out = np.zeros((len(t), basis.num_basis))
    for i in range(basis.num_basis):
        element = BSpline.basis_element(basis.knots[i : i + ORDER + 1], extrapolate=False)
        vals = element(t)
        out[:, i] = np.nan_to_num(vals, nan=0.0)
    return out


class TestConstruction:
    def test_knots_and_spacing(self):
        b = make_basis(0, 7, 4)
        assert b.spacing == 1.0
        np.testing.assert_array_equal(b.knots, np.arange(8.0))

    def test_small_interval(self):
        b = make_basis(-1, 1, 1)
        assert b.spacing == 0.5
        assert len(b.knots) == 5
        assert b.knots[0] == -1 and b.knots[-1] == 1

    @pytest.mark.parametrize("args", [(0, 1, 0), (1, 1, 3), (2, 1, 3), (0, np.inf, 2), (0, 1, 2.5)])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            make_basis(*args)

    def test_immutable(self):
        b = make_basis(0, 1, 3)
        with pytest.raises(Exception):
            b.num_basis = 4
        with pytest.raises(ValueError):
            b.knots[0] = 5.0

    @given(st.floats(-100, 100), st.floats(0.01, 100), st.integers(1, 40))
    def test_knot_invariants(self, lower, width, num):
        b = make_basis(lower, lower + width, num)
        gaps = np.diff(b.knots)
        assert len(b.knots) == num + 4
        assert np.all(gaps > 0)
        np.testing.assert_allclose(gaps, b.spacing, rtol=1e-9, atol=1e-12 * abs(lower))
        assert b.knots[0] == b.lower and b.knots[-1] == b.upper


class TestEvaluation:
    def test_center_value(self):
        b = make_basis(0, 7, 4)
        assert eval_basis(b, 2.0)[0] == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_outside_is_zero(self):
        b = make_basis(0, 7, 4)
        for t in (8.0, -0.1, 7.0):
            assert not np.any(eval_basis(b, t))
            assert not np.any(eval_basis_deriv(b, t))

    def test_lower_end_is_included(self):
        b = make_basis(0, 7, 4)
        np.testing.assert_array_equal(eval_basis(b, 0.0), [0, 0, 0, 0])
        assert eval_basis(b, 1e-3)[0] > 0

    def test_shapes(self):
        b = make_basis(0, 1, 5)
        assert eval_basis(b, 0.3).shape == (5,)
        assert eval_basis(b, np.linspace(0, 1, 7)).shape == (7, 5)
        v, d = eval_basis_with_deriv(b, np.array([0.2, 0.4]))
        assert v.shape == d.shape == (2, 5)

    def test_right_continuous_at_knots(self):
        b = make_basis(0, 7, 4)
        np.testing.assert_allclose(eval_basis(b, 3.0), eval_basis(b, 3.0 + 1e-13), atol=1e-12)

    def test_recursion_matches_de_boor(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            b = _random_basis(rng)
            t = rng.uniform(b.lower - 1, b.upper + 1, 1000)
            np.testing.assert_allclose(eval_basis(b, t), _de_boor(b, t), rtol=0, atol=1e-12)

    def test_span_local_matches_full_recursion(self):
        rng = np.random.default_rng(2)
        b = _random_basis(rng)
        for t in rng.uniform(b.lower, b.upper, 200):
            np.testing.assert_allclose(eval_basis(b, t), bspline_recursion(b.knots, ORDER, t), atol=1e-12)

    def test_full_recursion_nonuniform_knots(self):
        knots = np.array([0.0, 0.5, 2.0, 2.2, 4.0, 5.0, 7.5])
        t = np.linspace(0, 7.4, 50)
        ref = _de_boor_general(knots, t)
        got = np.array([bspline_recursion(knots, ORDER, x) for x in t])
        np.testing.assert_allclose(got, ref, atol=1e-12)


def _de_boor_general(knots, t):
    cols = []
    for i in range(len(knots) - ORDER):
        e = BSpline.basis_element(knots[i : i + ORDER + 1], extrapolate=False)
        cols.append(np.nan_to_num(e(t), nan=0.0))
    return np.column_stack(cols)


@pytest.fixture(scope="module")
def cases():
    rng = np.random.default_rng(3)
    out = []
    for _ in range(20):
        b = _random_basis(rng)
        t = rng.uniform(b.lower, b.upper, 1000)
        out.append((b, t, *eval_basis_with_deriv(b, t), _eval_basis_deriv2(b, t)))
    return out


class TestProperties:
    """Range, locality, derivative and second-derivative bounds."""

    def test_range(self, cases):
        for _, _, v, _, _ in cases:
            assert np.all(v >= 0) and np.all(v < 1)

    def test_locality(self, cases):
        for b, _, v, _, _ in cases:
            k = b.num_basis
            far = np.abs(np.subtract.outer(np.arange(k), np.arange(k))) > 3
            products = np.einsum("ni,nj->nij", v, v)
            assert not np.any(products[:, far])

    def test_derivative_bound(self, cases):
        for b, _, _, d, _ in cases:
            assert np.all(np.abs(d) < 1.0 / b.spacing)

    def test_sum_of_squares(self, cases):
        for _, _, v, _, _ in cases:
            assert np.all(np.sum(v * v, axis=1) <= 1.0 + 1e-12)

    def test_second_derivative_bound(self, cases):
        for b, _, _, _, d2 in cases:
            assert np.all(np.sum(d2 * d2, axis=1) < 6.0 / b.spacing**4)

    def test_derivative_matches_finite_differences(self, cases):
        h = 1e-6
        for b, t, _, d, _ in cases:
            pos = (t - b.lower) / b.spacing
            keep = np.abs(pos - np.round(pos)) * b.spacing > 1e-3
            keep &= (t - h > b.lower) & (t + h < b.upper)
            fd = (eval_basis(b, t[keep] + h) - eval_basis(b, t[keep] - h)) / (2 * h)
            np.testing.assert_allclose(d[keep], fd, rtol=0, atol=1e-6)

    def test_second_derivative_matches_finite_differences(self):
        b = make_basis(-2, 3, 6)
        t = np.linspace(-1.93, 2.91, 97)
        h = 1e-4
        fd = (eval_basis_deriv(b, t + h) - eval_basis_deriv(b, t - h)) / (2 * h)
        np.testing.assert_allclose(_eval_basis_deriv2(b, t), fd, atol=1e-6)

    def test_partition_of_unity_in_interior(self):
        # full coverage only between the fourth and the fourth-last knot
        b = make_basis(0, 10, 8)
        t = np.linspace(b.knots[3], b.knots[-4], 101)[:-1]
        np.testing.assert_allclose(eval_basis(b, t).sum(axis=1), 1.0, atol=1e-14)

    def test_derivative_integrates_to_zero(self):
        from scipy import integrate

        b = make_basis(-1, 2, 5)
        for i in range(b.num_basis):
            lo, hi = b.knots[i], b.knots[i + ORDER]
            val, _ = integrate.quad(lambda x: eval_basis_deriv(b, x)[i], lo, hi,
                                    points=b.knots[i + 1 : i + ORDER])
            assert abs(val) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-50, 50), st.floats(0.1, 50), st.integers(1, 30), st.floats(0, 1))
    def test_bounds_hold_anywhere(self, lower, width, num, frac):
        b = make_basis(lower, lower + width, num)
        t = lower + frac * width
        v, d = eval_basis_with_deriv(b, t)
        assert np.all(v >= 0) and np.all(v < 1)
        assert np.sum(v * v) <= 1 + 1e-12
        assert np.all(np.abs(d) < 1.0 / b.spacing)
