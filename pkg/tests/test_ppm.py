import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfalloc.ppm import (
    AllocationCurve,
    AmdahlPPM,
    PowerLawPPM,
    fit_amdahl,
    fit_power_law,
    rms_relative_error,
    saturation_point,
)


def make_curve(points):
    return AllocationCurve(tuple(points))


class TestEvaluate:
    def test_power_law_examples(self):
        m = PowerLawPPM(a=-1, b=100, m=5)
        assert m.evaluate(1) == 100
        assert m.evaluate(20) == 5
        assert m.evaluate(100) == 5

    def test_amdahl_examples(self):
        m = AmdahlPPM(s=10, p=90)
        assert m.evaluate(1) == 100
        assert m.evaluate(9) == 20
        assert m.evaluate(90) == 11

    def test_vectorized_evaluation(self):
        m = PowerLawPPM(a=-1, b=100, m=5)
        np.testing.assert_allclose(m.evaluate(np.array([1, 20, 100])), [100, 5, 5])

    def test_allocation_below_one_rejected(self):
        with pytest.raises(ValueError):
            PowerLawPPM(a=-1, b=100, m=5).evaluate(0)
        with pytest.raises(ValueError):
            AmdahlPPM(s=1, p=1).evaluate(0)


class TestConstruction:
    @pytest.mark.parametrize("a,b,m", [(-1, 0, 5), (-1, -3, 5), (-1, 100, 0), (-1, 100, -2), (0.5, 100, 5)])
    def test_invalid_power_law(self, a, b, m):
        with pytest.raises(ValueError):
            PowerLawPPM(a=a, b=b, m=m)

    @pytest.mark.parametrize("s,p", [(-1, 5), (5, -1)])
    def test_invalid_amdahl(self, s, p):
        with pytest.raises(ValueError):
            AmdahlPPM(s=s, p=p)

    def test_curve_validation(self):
        with pytest.raises(ValueError):
            make_curve([])
        with pytest.raises(ValueError):
            make_curve([(1, 10.0), (1, 9.0)])
        with pytest.raises(ValueError):
            make_curve([(2, 10.0), (1, 9.0)])
        with pytest.raises(ValueError):
            make_curve([(1, 10.0), (2, 0.0)])
        with pytest.raises(ValueError):
            make_curve([(0, 10.0)])

    def test_curve_interpolation(self):
        curve = make_curve([(1, 100.0), (3, 50.0), (8, 20.0)])
        assert curve.evaluate(1) == 100.0
        assert curve.evaluate(2) == 75.0
        assert curve.evaluate(5.5) == 35.0
        # clamped outside the grid
        assert curve.evaluate(0.5) == 100.0
        assert curve.evaluate(20) == 20.0


class TestFitPowerLaw:
    def test_round_trip_exact(self):
        # floor chosen to touch the power law exactly at a grid point, so
        # every point in the fit region lies on the underlying line
        gen = PowerLawPPM(a=-0.7, b=100.0, m=100.0 * 32 ** -0.7)
        fit = fit_power_law(gen.curve((1, 3, 8, 16, 32, 48)))
        assert not fit.degenerate
        assert fit.model.a == pytest.approx(gen.a, rel=1e-6)
        assert fit.model.b == pytest.approx(gen.b, rel=1e-6)
        assert fit.model.m == pytest.approx(gen.m, rel=1e-6)
        assert fit.residual == pytest.approx(0.0, abs=1e-9)

    def test_constant_curve_degenerate(self):
        fit = fit_power_law(make_curve([(1, 40.0), (2, 40.0), (4, 40.0)]))
        assert fit.degenerate
        assert fit.model.a == 0.0
        assert fit.model.b == 40.0
        assert fit.model.m == 40.0
        assert fit.residual == 0.0

    def test_floor_prefix_fit(self):
        # hand check: the fit region is {1, 2, 4}; those points sit on
        # t = 100/n exactly, and (4, 25) is the first at-floor point
        fit = fit_power_law(make_curve([(1, 100.0), (2, 50.0), (4, 25.0), (8, 25.0)]))
        assert fit.model.m == 25.0
        assert fit.model.a == pytest.approx(-1.0, abs=1e-9)
        assert fit.model.b == pytest.approx(100.0, rel=1e-9)

    def test_increasing_region_clamped_flat(self):
        fit = fit_power_law(make_curve([(1, 50.0), (2, 100.0), (4, 200.0), (8, 45.0)]))
        assert fit.degenerate
        assert fit.model.a == 0.0
        assert fit.model.b == fit.model.m == 45.0

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_power_law(make_curve([(1, 10.0), (2, 8.0)]))


class TestFitAmdahl:
    def test_round_trip_exact(self):
        gen = AmdahlPPM(s=7.0, p=140.0)
        fit = fit_amdahl(gen.curve((1, 2, 4, 8, 16)))
        assert fit.model.s == pytest.approx(7.0, rel=1e-9)
        assert fit.model.p == pytest.approx(140.0, rel=1e-9)

    def test_constant_curve(self):
        fit = fit_amdahl(make_curve([(1, 40.0), (2, 40.0), (4, 40.0)]))
        assert fit.model.s == pytest.approx(40.0)
        assert fit.model.p == pytest.approx(0.0, abs=1e-9)

    def test_against_closed_form_ols(self):
        # independent two-parameter OLS of t against x = 1/n
        points = [(1, 100.0), (2, 60.0), (4, 40.0)]
        x = np.array([1 / n for n, _ in points])
        t = np.array([t for _, t in points])
        sxx = np.sum((x - x.mean()) ** 2)
        sxt = np.sum((x - x.mean()) * (t - t.mean()))
        p_expect = sxt / sxx
        s_expect = t.mean() - p_expect * x.mean()

        fit = fit_amdahl(make_curve(points))
        assert fit.model.p == pytest.approx(p_expect, rel=1e-12)
        assert fit.model.s == pytest.approx(s_expect, rel=1e-12)

    def test_negative_intercept_clamped_and_refit(self):
        points = [(1, 100.0), (2, 45.0), (4, 16.0)]
        x = np.array([1.0, 0.5, 0.25])
        t = np.array([100.0, 45.0, 16.0])
        p_origin = np.sum(t * x) / np.sum(x * x)  # refit through the origin

        fit = fit_amdahl(make_curve(points))
        assert fit.model.s == 0.0
        assert fit.model.p == pytest.approx(p_origin, rel=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_amdahl(make_curve([(1, 10.0), (2, 8.0)]))


class TestSaturationPoint:
    def test_examples(self):
        assert saturation_point(PowerLawPPM(a=-1, b=100, m=5)).n_m == 20
        # smallest integer with 100/n <= 7
        assert saturation_point(PowerLawPPM(a=-1, b=100, m=7)).n_m == 15
        assert saturation_point(PowerLawPPM(a=0, b=40, m=40)).n_m == 1

    def test_boundary_is_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            model = PowerLawPPM(
                a=-float(rng.uniform(0.1, 2.0)),
                b=float(10 ** rng.uniform(1, 3)),
                m=float(10 ** rng.uniform(-1, 1.5)),
            )
            n_m = saturation_point(model).n_m
            assert model.evaluate(n_m) == model.m
            if n_m > 1:
                assert model.evaluate(n_m - 1) > model.m


class TestMonotonicity:
    @given(
        a=st.floats(min_value=-3.0, max_value=0.0),
        b=st.floats(min_value=1e-3, max_value=1e6),
        m=st.floats(min_value=1e-3, max_value=1e6),
        n=st.integers(min_value=1, max_value=10**6 - 1),
    )
    @settings(max_examples=300)
    def test_power_law_non_increasing(self, a, b, m, n):
        model = PowerLawPPM(a=a, b=b, m=m)
        assert model.evaluate(n + 1) <= model.evaluate(n)

    @given(
        s=st.floats(min_value=0.0, max_value=1e6),
        p=st.floats(min_value=0.0, max_value=1e6),
        n=st.integers(min_value=1, max_value=10**6 - 1),
    )
    @settings(max_examples=300)
    def test_amdahl_non_increasing(self, s, p, n):
        model = AmdahlPPM(s=s, p=p)
        assert model.evaluate(n + 1) <= model.evaluate(n)

    def test_floor_dominance(self):
        model = PowerLawPPM(a=-0.8, b=250.0, m=9.0)
        n_m = saturation_point(model).n_m
        ns = np.arange(n_m, n_m + 500)
        assert np.all(model.evaluate(ns) == model.m)


class TestTargets:
    def test_power_law_round_trip(self):
        model = PowerLawPPM(a=-0.6, b=123.0, m=4.5)
        back = PowerLawPPM.from_targets(model.to_targets())
        assert back.a == pytest.approx(model.a)
        assert back.b == pytest.approx(model.b)
        assert back.m == pytest.approx(model.m)

    def test_amdahl_round_trip(self):
        model = AmdahlPPM(s=12.0, p=480.0)
        back = AmdahlPPM.from_targets(model.to_targets())
        assert back.s == pytest.approx(model.s)
        assert back.p == pytest.approx(model.p)

    def test_from_targets_clamps(self):
        model = PowerLawPPM.from_targets([0.3, math.log(10.0), -2.0])
        assert model.a == 0.0
        assert model.m > 0
        am = AmdahlPPM.from_targets([-5.0, math.log1p(0.0)])
        assert am.s == 0.0
        assert am.p == 0.0


def test_rms_relative_error():
    curve = make_curve([(1, 100.0), (2, 50.0)])
    model = AmdahlPPM(s=0.0, p=110.0)  # 10% high everywhere
    assert rms_relative_error(model, curve) == pytest.approx(0.1)
