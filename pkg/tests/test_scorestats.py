import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from norminnorm.errors import DegenerateBatch, InvalidBatchSize, InvalidExponent, NonFiniteInput
from norminnorm.scorestats import batch_stats, lp_norm, norm_inequality_holds, normalize

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
score_arrays = arrays(np.float64, st.integers(2, 32), elements=finite)


def spread_enough(x):
    return np.ptp(x) > 1e-3


class TestBatchStats:
    def test_q2_mean_and_norm(self):
        s = batch_stats([1, 2, 3], 2)
        assert s.mean == pytest.approx(2.0)
        assert s.centered_norm == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_constant_batch_has_zero_norm(self):
        s = batch_stats([5, 5, 5], 1)
        assert s.mean == 5.0
        assert s.centered_norm == 0.0

    def test_q1_norm(self):
        s = batch_stats([0, 0, 4], 1)
        assert s.mean == pytest.approx(4 / 3)
        assert s.centered_norm == pytest.approx(16 / 3, rel=1e-15)

    def test_rejects_q_below_one(self):
        with pytest.raises(InvalidExponent):
            batch_stats([1, 2, 3], 0.5)

    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteInput):
            batch_stats([1, np.nan, 3], 2)

    def test_rejects_single_score(self):
        with pytest.raises(InvalidBatchSize):
            batch_stats([1.0], 2)


class TestNormalize:
    def test_q2(self):
        np.testing.assert_allclose(normalize([1, 2, 3], 2).values,
                                   [-1 / math.sqrt(2), 0, 1 / math.sqrt(2)], rtol=0, atol=1e-15)

    def test_q1(self):
        np.testing.assert_allclose(normalize([0, 0, 4], 1).values, [-0.25, -0.25, 0.5], atol=1e-15)

    def test_constant_batch_is_degenerate(self):
        with pytest.raises(DegenerateBatch):
            normalize([7, 7, 7], 2)

    def test_tolerance_is_in_score_units(self):
        x = [0.0, 1e-9, 2e-9]
        with pytest.raises(DegenerateBatch):
            normalize(x, 2)
        assert normalize(x, 2, tol=1e-12).values[2] > 0

    def test_generic_q(self):
        x = np.array([0.3, -1.2, 2.5, 0.1])
        s = normalize(x, 3).values
        assert abs(s.mean()) < 1e-15
        assert np.sum(np.abs(s) ** 3) == pytest.approx(1.0, rel=1e-13)

    @settings(max_examples=200, deadline=None)
    @given(score_arrays, st.sampled_from([1.0, 2.0]))
    def test_zero_mean_unit_norm(self, x, q):
        if not spread_enough(x):
            return
        s = normalize(x, q).values
        assert abs(s.mean()) < 1e-9
        assert abs(lp_norm(s, q) - 1) < 1e-9

    @settings(max_examples=200, deadline=None)
    @given(score_arrays, st.floats(0.01, 100) | st.floats(-100, -0.01), finite, st.sampled_from([1.0, 2.0]))
    def test_affine_maps_flip_only_the_sign(self, x, k, m, q):
        if not spread_enough(x):
            return
        np.testing.assert_allclose(normalize(k * x + m, q).values, np.sign(k) * normalize(x, q).values,
                                   rtol=0, atol=1e-9)


class TestLpNorm:
    def test_pythagorean_triple(self):
        assert lp_norm([3, 4], 2) == 5.0

    def test_l1(self):
        assert lp_norm([1, -1, 1, -1], 1) == 4.0

    def test_l4(self):
        assert lp_norm([1, -1, 1, -1], 4) == pytest.approx(4 ** 0.25, rel=1e-15)

    def test_large_values_do_not_overflow(self):
        assert lp_norm([1e200, 1e200], 3) == pytest.approx(1e200 * 2 ** (1 / 3), rel=1e-14)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 32), elements=finite),
           st.floats(-1e3, 1e3), st.floats(1, 6))
    def test_absolute_homogeneity(self, x, k, p):
        lhs = lp_norm(k * x, p)
        rhs = abs(k) * lp_norm(x, p)
        assert abs(lhs - rhs) <= 1e-12 * max(rhs, 1e-300)


class TestNormInequality:
    def test_upper_bound_tight_on_constant_vector(self):
        r = norm_inequality_holds([1, 1], 1, 2)
        assert r.holds
        assert r.upper_slack == pytest.approx(0.0, abs=1e-15)

    def test_lower_bound_tight_on_single_spike(self):
        r = norm_inequality_holds([1, 0], 1, 2)
        assert r.holds
        assert r.lower_slack == 0.0

    def test_equal_exponents(self):
        r = norm_inequality_holds([3, 4], 2, 2)
        assert r.holds
        assert r.lower_slack == 0.0 and r.upper_slack == 0.0

    def test_rejects_reversed_exponents(self):
        with pytest.raises(InvalidExponent):
            norm_inequality_holds([1, 2], 3, 2)

    @settings(max_examples=300, deadline=None)
    @given(arrays(np.float64, st.integers(1, 40), elements=finite), st.floats(1, 4), st.floats(1, 4))
    def test_holds_for_random_vectors(self, x, a, b):
        p1, p2 = min(a, b), max(a, b)
        assert norm_inequality_holds(x, p1, p2).holds
