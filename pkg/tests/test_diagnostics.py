import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series
from raintrack.diagnostics import (
    REFERENCE_ANOMALIES,
    BiasDecomposition,
    bias_map,
    bias_table,
    compose_factors,
    decompose,
    decompose_arrays,
    eval_grid,
    kernel_smooth,
    pixel_amount,
    pixel_bias_map,
)
from raintrack.errors import ConsistencyError, UndefinedRatioError
from raintrack.gridio import GridSpec
from raintrack.metrics import StormMetrics


def storm(i, s, d, x=0.0, y=0.0, eid=1):
    return StormMetrics(eid, i * s * d * 1e-6, i, s, d, 0, 0, ((0, x, y, s, 1.0),))


positive = st.floats(1e-3, 1e4, allow_nan=False, allow_infinity=False)


class TestDecompose:
    def test_hand_example(self):
        d = decompose([storm(1.0, 100.0, 6.0), storm(3.0, 200.0, 12.0)])
        assert d.intensity == 2.0
        assert d.size == pytest.approx((100 + 600) / 4)
        assert d.duration == pytest.approx((600 + 7200) / 700)
        assert d.number == 2
        assert d.total_amount_km3 == pytest.approx(7800e-6)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(positive, positive, positive), min_size=1, max_size=60))
    def test_identity(self, rows):
        i, s, d = (np.array(c) for c in zip(*rows))
        dec = decompose_arrays(i, s, d)
        exact = math.fsum(i * s * d)
        assert math.isclose(dec.intensity * dec.size * dec.duration * dec.number, exact, rel_tol=1e-12)
        assert math.isclose(dec.total_amount_km3, exact * 1e-6, rel_tol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            decompose([])


class TestBiasTable:
    def test_self_comparison_zero(self):
        d = decompose([storm(1.0, 100.0, 6.0), storm(2.0, 50.0, 18.0)])
        t = bias_table(d, d)
        assert all(v == 0.0 for v in t.as_dict().values())

    def test_planted_factors(self):
        obs = BiasDecomposition(2.0 * 100 * 10 * 4 * 1e-6, 2.0, 100.0, 10.0, 4.0)
        mod = BiasDecomposition(3.0 * 100 * 10 * 4 * 1e-6, 3.0, 100.0, 10.0, 4.0)
        t = bias_table(mod, obs)
        assert t.intensity == pytest.approx(50.0) and t.amount == pytest.approx(50.0)
        assert t.size == 0 and t.duration == 0 and t.number == 0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(positive, positive, positive), min_size=1, max_size=30),
           st.lists(st.tuples(positive, positive, positive), min_size=1, max_size=30))
    def test_composition_property(self, a, b):
        da = decompose_arrays(*(np.array(c) for c in zip(*a)))
        db = decompose_arrays(*(np.array(c) for c in zip(*b)))
        t = bias_table(da, db)
        keys = ("intensity", "size", "duration", "number")
        composed = math.prod(getattr(da, k) / getattr(db, k) for k in keys)
        assert math.isclose(composed, da.total_amount_km3 / db.total_amount_km3, rel_tol=1e-12)
        # percent rows reproduce the ratios up to the absolute rounding of the percent form
        for k in keys:
            assert math.isclose(1 + t.as_dict()[k] / 100, getattr(da, k) / getattr(db, k), rel_tol=1e-12, abs_tol=1e-14)

    def test_zero_reference(self):
        obs = BiasDecomposition(0.0, 0.0, 1.0, 1.0, 1.0)
        with pytest.raises(UndefinedRatioError):
            bias_table(obs, obs)

    def test_inconsistent_inputs(self):
        obs = BiasDecomposition(1.0, 1.0, 1.0, 1.0, 1.0)
        bad = BiasDecomposition(5.0, 1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ConsistencyError):
            bias_table(bad, obs)


class TestReferenceArithmetic:
    def test_ctrl_row(self):
        r = REFERENCE_ANOMALIES["CTRL"]
        got = compose_factors(r["intensity"], r["size"], r["duration"], r["number"])
        assert got == pytest.approx(60.3, abs=0.05)
        assert abs(got - r["amount"]) <= 3

    def test_identity_factors(self):
        assert compose_factors(0, 0, 0, 0) == 0.0
        assert compose_factors(100, 0, 0, 0) == pytest.approx(100.0)
        assert compose_factors(100, -50, 0, 0) == pytest.approx(0.0)


class TestKernelMaps:
    def test_single_storm_size_map_constant(self):
        g = eval_grid(GridSpec(20, 10, 12.0), 4)
        m = kernel_smooth([storm(1.0, 500.0, 6.0, 60.0, 60.0)], "size", 300.0, g)
        assert m.defined.all()
        np.testing.assert_allclose(m.values, 500.0, rtol=1e-14)

    def test_brute_force_weighted_mean(self, rng):
        storms = [storm(1.0, float(rng.uniform(50, 900)), float(rng.choice([6, 12, 18])),
                        float(rng.uniform(0, 200)), float(rng.uniform(0, 200)), eid=k) for k in range(7)]
        gx, gy = np.array([10.0, 90.0, 170.0]), np.array([20.0, 140.0])
        for metric in ("size", "duration", "number"):
            mm = kernel_smooth(storms, metric, 80.0, (gx, gy), chunk=2)
            for iy, y in enumerate(gy):
                for ix, x in enumerate(gx):
                    w = [math.exp(-((x - s.location_km[0]) ** 2 + (y - s.location_km[1]) ** 2) / (2 * 80.0 ** 2))
                         for s in storms]
                    if metric == "number":
                        ref = sum(w)
                    else:
                        v = [s.mean_size_km2 if metric == "size" else s.duration_hr for s in storms]
                        ref = sum(a * b for a, b in zip(w, v)) / sum(w)
                    assert mm.values[iy, ix] == pytest.approx(ref, rel=1e-12)

    def test_far_points_undefined(self):
        m = kernel_smooth([storm(1.0, 10.0, 6.0)], "size", 1.0, (np.array([0.0, 1e4]), np.array([0.0])))
        assert m.defined.tolist() == [[True, False]]
        assert math.isnan(m.values[0, 1])

    def test_self_bias_zero(self):
        g = eval_grid(GridSpec(8, 8, 12.0), 2)
        storms = [storm(1.0, 100.0, 6.0, 20.0, 30.0), storm(1.0, 300.0, 12.0, 70.0, 10.0)]
        m = kernel_smooth(storms, "duration", 300.0, g)
        b = bias_map(m, m)
        assert np.all(b.values[b.defined] == 0.0)

    def test_bad_args(self):
        g = (np.zeros(1), np.zeros(1))
        with pytest.raises(ValueError):
            kernel_smooth([], "size", 0.0, g)
        with pytest.raises(ValueError):
            kernel_smooth([], "area", 300.0, g)

    def test_empty_catalog_undefined(self):
        m = kernel_smooth([], "size", 300.0, (np.zeros(2), np.zeros(3)))
        assert not m.defined.any()


class TestPixelMaps:
    def test_amount_and_intensity(self):
        obs = make_series(np.array([[[1.0, 0.0, 0.1]], [[3.0, 0.0, 0.1]]]))
        mod = make_series(np.array([[[2.0, 5.0, 0.1]], [[6.0, 0.0, 0.3]]]))
        a = pixel_bias_map(mod, obs, "amount")
        assert a.values[0, 0] == pytest.approx(100.0)
        assert not a.defined[0, 1]  # obs never wet there
        assert not a.defined[0, 2]
        i = pixel_bias_map(mod, obs, "intensity")
        assert i.values[0, 0] == pytest.approx(100.0)
        np.testing.assert_allclose(pixel_amount(obs).values, [[4.0, 0.0, 0.2]], rtol=1e-7)

    def test_axis_mismatch(self):
        with pytest.raises(ValueError):
            pixel_bias_map(make_series(np.ones((1, 2, 2))), make_series(np.ones((2, 2, 2))))

    def test_bad_kind(self):
        s = make_series(np.ones((1, 2, 2)))
        with pytest.raises(ValueError):
            pixel_bias_map(s, s, "size")
