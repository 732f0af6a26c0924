import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from norminnorm.calibration import (
    CalibrationLine,
    apply_calibration,
    lsr_fit,
    plcc,
    rmse,
    rmse_from_variant,
    srocc,
)
from norminnorm.errors import DegenerateBatch, InvalidExponent, LengthMismatch
from norminnorm.loss import LossParams, variant_loss

PRED = (2, 1, 4, 3)
LABEL = (1, 2, 3, 4)


@st.composite
def batch_pairs(draw, min_n=3, max_n=32):
    n = draw(st.integers(min_n, max_n))
    el = st.floats(-100, 100, allow_nan=False)
    x = draw(arrays(np.float64, n, elements=el))
    y = draw(arrays(np.float64, n, elements=el))
    assume(np.std(x) > 0.1 and np.std(y) > 0.1)
    return x, y


class TestLsr:
    def test_exact_line(self):
        line = lsr_fit((0, 1, 2), (10, 20, 30))
        assert line.k1 == pytest.approx(10)
        assert line.k2 == pytest.approx(10)

    def test_worked_example(self):
        line = lsr_fit(PRED, LABEL)
        assert line.k1 == pytest.approx(0.6, abs=1e-15)
        assert line.k2 == pytest.approx(1.0, abs=1e-15)

    def test_constant_predictions(self):
        with pytest.raises(DegenerateBatch):
            lsr_fit((5, 5, 5), (1, 2, 3))

    def test_agrees_with_numpy_polyfit(self):
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal(50), rng.standard_normal(50)
        k1, k2 = np.polyfit(x, y, 1)
        line = lsr_fit(x, y)
        assert line.k1 == pytest.approx(k1, rel=1e-12)
        assert line.k2 == pytest.approx(k2, rel=1e-12, abs=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(batch_pairs(), st.sampled_from([-1e-3, 0.0, 1e-3]), st.sampled_from([-1e-3, 0.0, 1e-3]))
    def test_local_optimality(self, pair, d1, d2):
        x, y = pair
        line = lsr_fit(x, y)
        base = np.sum((line(x) - y) ** 2)
        moved = np.sum(((line.k1 + d1) * x + line.k2 + d2 - y) ** 2)
        assert moved >= base - 1e-12 * max(base, 1.0)


class TestApply:
    def test_exact_line(self):
        np.testing.assert_allclose(apply_calibration(CalibrationLine(10, 10), (0, 1, 2)), (10, 20, 30))

    def test_worked_example(self):
        np.testing.assert_allclose(apply_calibration(CalibrationLine(0.6, 1.0), PRED), (2.2, 1.6, 3.4, 2.8),
                                   rtol=1e-15)

    def test_identity(self):
        x = np.array([0.3, -2.0, 7.5])
        np.testing.assert_array_equal(CalibrationLine(1.0, 0.0)(x), x)


class TestPlcc:
    def test_self(self):
        assert plcc((1, 5, 2), (1, 5, 2)) == pytest.approx(1.0)

    def test_worked_example(self):
        assert plcc(PRED, LABEL) == pytest.approx(0.6, abs=1e-15)

    def test_negated(self):
        assert plcc((1, 5, 2), (-1, -5, -2)) == pytest.approx(-1.0)

    def test_constant_input(self):
        with pytest.raises(DegenerateBatch):
            plcc((1, 1, 1), (1, 2, 3))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            plcc((1, 2, 3), (1, 2))

    def test_agrees_with_numpy(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal(40), rng.standard_normal(40)
        assert plcc(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(batch_pairs(), st.floats(0.01, 100) | st.floats(-100, -0.01), st.floats(-100, 100))
    def test_affine_sign_invariance(self, pair, k1, k2):
        x, y = pair
        assert abs(plcc(k1 * x + k2, y) - math.copysign(1, k1) * plcc(x, y)) < 1e-12


class TestSrocc:
    def test_monotone(self):
        assert srocc((1, 2, 3), (10, 20, 30)) == pytest.approx(1.0)

    def test_classic_formula_case(self):
        assert srocc((3, 1, 2), (1, 2, 3)) == pytest.approx(-0.5, abs=1e-15)

    def test_ties_use_average_ranks(self):
        assert srocc((1, 1, 2), (1, 2, 3)) == pytest.approx(1.5 / math.sqrt(3), abs=1e-15)

    def test_all_tied(self):
        with pytest.raises(DegenerateBatch):
            srocc((2, 2, 2), (1, 2, 3))

    @settings(max_examples=100, deadline=None)
    @given(batch_pairs(max_n=20))
    def test_invariant_to_increasing_transforms(self, pair):
        x, y = pair
        ex, y3 = np.exp(x / 50), y ** 3
        # in floating point a transform is only strictly increasing if it keeps values apart
        assume(len(np.unique(ex)) == len(np.unique(x)) and len(np.unique(y3)) == len(np.unique(y)))
        base = srocc(x, y)
        assert srocc(ex, y) == pytest.approx(base, abs=1e-12)
        assert srocc(x, y3) == pytest.approx(base, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 40).flatmap(lambda n: st.tuples(st.permutations(range(1, n + 1)),
                                                          st.permutations(range(1, n + 1)))))
    def test_equals_plcc_on_permutations(self, perms):
        x, y = (np.array(p, dtype=float) for p in perms)
        assert srocc(x, y) == plcc(x, y)


class TestRmse:
    def test_zero(self):
        assert rmse((1, 2), (1, 2)) == 0.0

    def test_calibrated_worked_example(self):
        assert rmse((2.2, 1.6, 3.4, 2.8), LABEL) == pytest.approx(math.sqrt(0.8), abs=1e-15)

    def test_two_points(self):
        assert rmse((0, 0), (3, 4)) == pytest.approx(math.sqrt(12.5))


class TestRmseBridge:
    def test_perfect_correlation(self):
        assert rmse_from_variant(3.0, 0.0, 10) == 0.0

    def test_worked_example(self):
        assert rmse_from_variant(math.sqrt(5), 0.16, 4) == pytest.approx(math.sqrt(0.8), abs=1e-15)

    def test_plug_in(self):
        assert rmse_from_variant(1.0, 1.0, 4) == 1.0

    def test_only_p2_q2(self):
        with pytest.raises(InvalidExponent):
            rmse_from_variant(1.0, 0.1, 4, p=1, q=2)

    @settings(max_examples=150, deadline=None)
    @given(batch_pairs())
    def test_matches_direct_rmse(self, pair):
        x, y = pair
        direct = rmse(apply_calibration(lsr_fit(x, y), x), y)
        out = variant_loss(x, y, LossParams(p=2, q=2))
        bridge = rmse_from_variant(out.label_normalized.stats.centered_norm, out.value, x.size)
        # the label spread is the natural scale when the fit is perfect
        assert abs(direct - bridge) <= 1e-10 * max(direct, np.std(y) * 1e-3)
