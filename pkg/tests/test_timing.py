from collections import namedtuple
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series
from raintrack.timing import (
    DiurnalBins,
    daily_totals,
    diurnal_stats,
    event_presence_counts,
    linfit,
    per_bin_fits,
)

Ev = namedtuple("Ev", "t_first t_last")
BINS = DiurnalBins(0.0, 6.0, -6.0)  # 00Z start, local time UTC-6


class TestDiurnalBins:
    def test_centers_and_assignment(self):
        assert BINS.centers().tolist() == [3.0, 9.0, 15.0, 21.0]
        # 00-06Z is 18-24 local (center 21), then 00-06 local (center 3)
        assert BINS.assign(5).tolist() == [3, 0, 1, 2, 3]

    def test_for_series(self):
        s = make_series(np.zeros((2, 1, 1)), t0=datetime(2005, 6, 1, 12, tzinfo=timezone.utc))
        b = DiurnalBins.for_series(s)
        assert b.t0_hour_utc == 12.0 and b.assign(1).tolist() == [1]

    def test_three_hourly(self):
        b = DiurnalBins(0.0, 3.0, -6.0)
        assert b.n_bins == 8 and b.centers()[0] == 1.5

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            DiurnalBins(0.0, 5.0)


class TestDiurnalStats:
    def test_percentiles_example(self):
        nt = 16
        obs = np.zeros(nt)
        which = BINS.assign(nt)
        mod = np.zeros(nt)
        for j in range(4):
            mod[which == j] = [1.0, 2.0, 3.0, 4.0]
        rows = diurnal_stats(mod, obs, BINS)
        for r in rows:
            assert r.median == 2.5 and r.p25 == 1.75 and r.p75 == 3.25
            assert r.mean_bias == 2.5 and r.n == 4

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-100, 100), st.integers(0, 2 ** 31 - 1))
    def test_constant_shift(self, c, seed):
        obs = np.random.default_rng(seed).gamma(1.0, 1.0, 12)
        for r in diurnal_stats(obs + c, obs, BINS):
            for v in (r.mean_bias, r.median, r.p9, r.p25, r.p75, r.p91):
                assert v == pytest.approx(c, abs=1e-12 * max(1.0, abs(c)) + 1e-12)

    def test_empty_bin(self):
        rows = diurnal_stats(np.ones(2), np.zeros(2), BINS)
        assert rows[1].n == 0 and np.isnan(rows[1].median)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            diurnal_stats(np.ones(3), np.ones(4), BINS)


class TestLinfit:
    def test_identity_line(self):
        f = linfit([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 2.0, 3.0])
        assert (f.slope, f.intercept, f.r) == (1.0, 0.0, 1.0)

    def test_worked_example(self):
        f = linfit([0, 1, 2], [1, 3, 5])
        assert f.slope == 2.0 and f.intercept == 1.0 and f.r == 1.0

    def test_constant_y(self):
        f = linfit([0, 1, 2], [4, 4, 4])
        assert f.r == 0.0 and f.zero_variance and f.slope == 0.0

    def test_degenerate_x(self):
        with pytest.raises(ValueError):
            linfit([1, 1, 1], [1, 2, 3])
        with pytest.raises(ValueError):
            linfit([1], [1])

    def test_matches_numpy(self, rng):
        x, y = rng.normal(size=30), rng.normal(size=30)
        f = linfit(x, y)
        slope, intercept = np.polyfit(x, y, 1)
        assert f.slope == pytest.approx(slope, rel=1e-10)
        assert f.intercept == pytest.approx(intercept, rel=1e-10, abs=1e-12)
        assert f.r == pytest.approx(np.corrcoef(x, y)[0, 1], rel=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30), st.floats(-5, 5), st.floats(-5, 5))
    def test_r_bounded_and_scaled_fit(self, xs, a, b):
        x = np.array(xs)
        if np.ptp(x) < 1e-3:
            return
        f = linfit(x, a * x + b)
        assert -1.0 <= f.r <= 1.0
        assert f.slope == pytest.approx(a, abs=1e-8)

    def test_per_bin_fits_slope(self, rng):
        obs = rng.gamma(1.0, 1.0, 40)
        for _, fit in per_bin_fits(1.5 * obs, obs, BINS):
            assert fit.slope == pytest.approx(1.5, rel=1e-12) and fit.r == pytest.approx(1.0)

    def test_per_bin_fits_degenerate_bin(self):
        out = per_bin_fits(np.ones(4), np.ones(4), BINS)
        assert all(fit is None for _, fit in out)


def test_presence_counts():
    present, init = event_presence_counts([Ev(3, 5), Ev(4, 4)], 8)
    assert present.tolist() == [0, 0, 0, 1, 2, 1, 0, 0]
    assert init.tolist() == [0, 0, 0, 1, 1, 0, 0, 0]


class TestDailyTotals:
    def test_partial_days_dropped(self):
        # index 0 is 18-24 local; the first local day starts at index 1
        t = np.arange(10, dtype=float)
        d = daily_totals(t, BINS)
        assert d.tolist() == [1 + 2 + 3 + 4, 5 + 6 + 7 + 8]

    def test_aligned_start(self):
        b = DiurnalBins(6.0, 6.0, -6.0)
        assert daily_totals(np.ones(8), b).tolist() == [4.0, 4.0]

    def test_too_short(self):
        assert daily_totals(np.ones(3), BINS).size == 0
