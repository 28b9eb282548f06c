"""Time-of-day statistics of domain totals, and the least-squares fits applied to them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PERCENTILES = (9, 25, 75, 91)
DEFAULT_OFFSET_HOURS = -6.0  # Mountain Daylight Time


@dataclass(frozen=True)
class DiurnalBins:
    """Maps each interval to a time-of-day bin via its local center hour.

    Bins are ``24 / dt_hours`` wide slots anchored on the local center hour
    of the first interval.
    """

    t0_hour_utc: float
    dt_hours: float
    offset_hours: float = DEFAULT_OFFSET_HOURS

    def __post_init__(self):
        if 24.0 % self.dt_hours != 0:
            raise ValueError(f"dt_hours={self.dt_hours} does not divide a day")

    @classmethod
    def for_series(cls, series, offset_hours: float = DEFAULT_OFFSET_HOURS) -> "DiurnalBins":
        t0 = series.t0
        return cls(t0.hour + t0.minute / 60.0 + t0.second / 3600.0, series.dt_hours, offset_hours)

    @property
    def n_bins(self) -> int:
        return int(round(24.0 / self.dt_hours))

    @property
    def phase(self) -> float:
        first = (self.t0_hour_utc + 0.5 * self.dt_hours + self.offset_hours) % 24.0
        return first % self.dt_hours

    def centers(self) -> np.ndarray:
        """Local center hour of each bin."""
        return self.phase + self.dt_hours * np.arange(self.n_bins)

    def local_center_hours(self, nt: int) -> np.ndarray:
        return (self.t0_hour_utc + (np.arange(nt) + 0.5) * self.dt_hours + self.offset_hours) % 24.0

    def assign(self, nt: int) -> np.ndarray:
        h = self.local_center_hours(nt)
        return np.rint((h - self.phase) / self.dt_hours).astype(np.int64) % self.n_bins


@dataclass(frozen=True)
class DiurnalRow:
    center_hour: float
    mean_bias: float
    median: float
    p9: float
    p25: float
    p75: float
    p91: float
    model_mean: float
    obs_mean: float
    n: int


def diurnal_stats(model_totals, obs_totals, bins: DiurnalBins) -> list[DiurnalRow]:
    """Box statistics of the additive bias ``model - obs`` per time-of-day bin.

    Percentiles use linear interpolation between order statistics.
    """
    m = np.asarray(model_totals, dtype=np.float64)
    o = np.asarray(obs_totals, dtype=np.float64)
    if m.shape != o.shape:
        raise ValueError(f"time axes differ: {m.shape} vs {o.shape}")
    which = bins.assign(m.size)
    rows = []
    for j, center in enumerate(bins.centers()):
        sel = which == j
        if not sel.any():
            rows.append(DiurnalRow(float(center), *([math.nan] * 8), 0))
            continue
        bias = m[sel] - o[sel]
        med, p9, p25, p75, p91 = np.percentile(bias, [50, 9, 25, 75, 91], method="linear")
        rows.append(DiurnalRow(
            float(center), float(np.mean(bias)), float(med), float(p9), float(p25), float(p75), float(p91),
            float(np.mean(m[sel])), float(np.mean(o[sel])), int(sel.sum()),
        ))
    return rows


def event_presence_counts(events, nt: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval counts of events present and of events initiated."""
    present = np.zeros(nt, dtype=np.int64)
    initiated = np.zeros(nt, dtype=np.int64)
    for ev in events:
        present[ev.t_first:ev.t_last + 1] += 1
        initiated[ev.t_first] += 1
    return present, initiated


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r: float
    n: int
    zero_variance: bool = False


def linfit(x, y) -> FitResult:
    """Ordinary least squares ``y = slope * x + intercept`` with Pearson r.

    When ``y`` is constant, r is reported as 0 and ``zero_variance`` is set.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    n = x.size
    if n < 2:
        raise ValueError("need at least two points")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = x - mx
    dy = y - my
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    sxy = math.fsum(dx * dy)
    if sxx == 0:
        raise ValueError("x has zero variance")
    slope = sxy / sxx
    intercept = my - slope * mx
    if syy == 0:
        return FitResult(slope, intercept, 0.0, n, True)
    r = max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))
    return FitResult(slope, intercept, r, n)


def daily_totals(totals, bins: DiurnalBins) -> np.ndarray:
    """Sums over whole local days; partial days at either end are dropped.

    A day starts at the first interval whose local start hour is midnight
    (to within the interval phase).
    """
    t = np.asarray(totals, dtype=np.float64)
    per_day = bins.n_bins
    start_local = (bins.t0_hour_utc + np.arange(t.size) * bins.dt_hours + bins.offset_hours) % 24.0
    starts = np.flatnonzero(np.isclose(start_local, 0.0) | np.isclose(start_local, 24.0))
    if starts.size == 0:
        # intervals not aligned with midnight: begin at the first interval starting after it
        starts = np.flatnonzero(start_local < bins.dt_hours)
    if starts.size == 0:
        return np.empty(0)
    first = int(starts[0])
    n_days = (t.size - first) // per_day
    return t[first:first + n_days * per_day].reshape(n_days, per_day).sum(axis=1)


def per_bin_fits(model_totals, obs_totals, bins: DiurnalBins) -> list[tuple[float, FitResult | None]]:
    """Model-vs-obs fit for each time-of-day bin; None where a bin is degenerate."""
    m = np.asarray(model_totals, dtype=np.float64)
    o = np.asarray(obs_totals, dtype=np.float64)
    which = bins.assign(m.size)
    out = []
    for j, center in enumerate(bins.centers()):
        sel = which == j
        try:
            out.append((float(center), linfit(o[sel], m[sel])))
        except ValueError:
            out.append((float(center), None))
    return out
