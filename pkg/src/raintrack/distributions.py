"""Histograms of precipitation incidents and domain totals, plus event-amount distributions.

All histograms use right-closed bins ``(lo, hi]`` and carry the per-bin
precipitation total alongside the per-bin count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

MM_KM2_TO_KM3 = 1e-6


@dataclass
class Histogram:
    edges: np.ndarray
    totals: np.ndarray
    counts: np.ndarray
    excluded_total: float = 0.0  # sub-threshold precipitation not binned
    n_dry: int = 0  # dry or sub-threshold incidents
    n_total: int = 0  # all incidents considered, wet or not

    @property
    def grand_total(self) -> float:
        return math.fsum(self.totals)

    @property
    def dry_fraction(self) -> float:
        return self.n_dry / self.n_total if self.n_total else 1.0


def log_edges(vmin: float, vmax: float, n: int) -> np.ndarray:
    """``n`` log-spaced right-closed bins whose first bin contains ``vmin``."""
    if not (vmin > 0 and vmax >= vmin):
        raise ValueError("log bins need 0 < vmin <= vmax")
    if vmax == vmin:
        return np.array([np.nextafter(vmin, 0.0), vmin])
    edges = np.geomspace(vmin, vmax, n + 1)
    edges[0] = np.nextafter(vmin, 0.0)
    edges[-1] = vmax
    return edges


def _bin(values, weights, edges, *, warn_label="value"):
    """Bin into (lo, hi]; appends underflow/overflow bins with a warning if needed."""
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    if values.size:
        vmax, vmin = values.max(), values.min()
        if vmax > edges[-1]:
            warnings.warn(f"{warn_label} {vmax:g} above last edge; overflow bin appended", stacklevel=3)
            edges = np.append(edges, vmax)
        if vmin <= edges[0]:
            warnings.warn(f"{warn_label} {vmin:g} at or below first edge; underflow bin prepended", stacklevel=3)
            edges = np.insert(edges, 0, min(0.0, np.nextafter(vmin, -np.inf)))
    k = np.searchsorted(edges, values, side="left") - 1
    nb = len(edges) - 1
    counts = np.bincount(k, minlength=nb).astype(np.int64)
    totals = np.bincount(k, weights=weights, minlength=nb)
    return edges, totals, counts


def incidents(series, threshold: float = 0.2) -> np.ndarray:
    """All valid (cell, interval) accumulations strictly above ``threshold`` (mm)."""
    vals = series.fields[:, series.mask].astype(np.float64).ravel()
    return vals[vals > threshold]


def default_incident_edges(max_value: float, threshold: float = 0.2, n_bins: int = 30) -> np.ndarray:
    if max_value <= threshold:
        return np.geomspace(threshold, 10 * threshold, n_bins + 1)
    edges = np.geomspace(threshold, max_value, n_bins + 1)
    edges[0], edges[-1] = threshold, max_value
    return edges


def incident_histogram(series, threshold: float = 0.2, bins=None, n_bins: int = 30) -> Histogram:
    """Location-based distribution of above-threshold incidents (mm per interval)."""
    vals = series.fields[:, series.mask].astype(np.float64).ravel()
    wet = vals > threshold
    inc = vals[wet]
    if bins is None:
        edges = default_incident_edges(inc.max() if inc.size else 0.0, threshold, n_bins)
    else:
        edges = np.asarray(bins, dtype=np.float64)
        if edges[0] > threshold:
            raise ValueError(f"bins start at {edges[0]:g}, above the threshold {threshold:g}")
    edges, totals, counts = _bin(inc, inc, edges, warn_label="incident")
    rest = vals[~wet]
    excluded = math.fsum(rest[rest != 0.0])  # zeros add nothing; skipping them keeps fsum cheap
    return Histogram(edges, totals, counts, excluded, int(vals.size - inc.size), int(vals.size))


def null_scale_histogram(obs_incidents, amount_bias: float, intensity_bias: float, bins) -> Histogram:
    """Observed incident distribution transformed by two mean biases.

    Each incident is multiplied by ``intensity_bias``, the scaled incidents
    are binned, then every bin total is multiplied by
    ``amount_bias / intensity_bias``. Both biases are ratios (model/obs).
    """
    if not (amount_bias > 0 and intensity_bias > 0):
        raise ValueError("bias ratios must be positive")
    obs = np.asarray(obs_incidents, dtype=np.float64)
    scaled = obs * intensity_bias
    edges, totals, counts = _bin(scaled, scaled, bins, warn_label="scaled incident")
    f = amount_bias / intensity_bias
    return Histogram(edges, totals * f, counts, 0.0, 0, int(counts.sum()))


def domain_totals(series) -> np.ndarray:
    """Per-interval domain precipitation volume (km^3)."""
    vals = series.fields[:, series.mask].astype(np.float64)
    return vals.sum(axis=1) * series.spec.cell_area_km2 * MM_KM2_TO_KM3


def scale_totals(totals, amount_bias: float) -> np.ndarray:
    """Reference domain totals scaled by an amount-bias ratio."""
    return np.asarray(totals, dtype=np.float64) * amount_bias


def totals_histogram(totals, bins=None, n_bins: int = 20) -> Histogram:
    """Distribution of per-interval domain totals (bins in km^3)."""
    t = np.asarray(totals, dtype=np.float64)
    if bins is None:
        hi = t.max() if t.size and t.max() > 0 else 1.0
        bins = np.linspace(0.0, hi, n_bins + 1)
        bins[0] = -np.finfo(float).tiny
    edges, totals_, counts = _bin(t, t, bins, warn_label="domain total")
    return Histogram(edges, totals_, counts, 0.0, int((t <= 0).sum()), int(t.size))


def drop_smallest(amounts, fraction: float = 0.001) -> np.ndarray:
    """Indices kept after dropping the smallest events that together hold ``<= fraction`` of the total."""
    a = np.asarray(amounts, dtype=np.float64)
    if a.size == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(a, kind="stable")
    csum = np.cumsum(a[order])
    cutoff = fraction * csum[-1]
    n_drop = int(np.searchsorted(csum, cutoff, side="right"))
    return np.sort(order[n_drop:])


def event_amount_histogram(storms, bins=None, n_bins: int = 20, drop_fraction: float = 0.001) -> Histogram:
    """Distribution of events by lifetime amount (km^3), smallest events dropped first."""
    amounts = np.array([getattr(s, "amount_km3", s) for s in storms], dtype=np.float64)
    keep = drop_smallest(amounts, drop_fraction)
    kept = amounts[keep]
    dropped = math.fsum(amounts) - math.fsum(kept) if amounts.size else 0.0
    if bins is None:
        if kept.size:
            bins = log_edges(kept.min(), kept.max(), n_bins)
        else:
            bins = np.array([0.0, 1.0])
    edges, totals, counts = _bin(kept, kept, bins, warn_label="event amount")
    return Histogram(edges, totals, counts, dropped, int(amounts.size - kept.size), int(amounts.size))


def topk_excess(model_storms, obs_storms, amount_bias: float, k: int = 5,
                exclude_model=(), exclude_obs=()) -> float:
    """Percent by which the top-``k`` model events exceed the bias-scaled top-``k`` observed events."""
    if k < 1:
        raise ValueError("k must be >= 1")

    def top(storms, exclude):
        ex = set(exclude)
        a = sorted((s.amount_km3 for s in storms if s.event_id not in ex), reverse=True)
        if len(a) < k:
            raise ValueError(f"only {len(a)} events left after exclusion, need {k}")
        return math.fsum(a[:k])

    return 100.0 * (top(model_storms, exclude_model) / (amount_bias * top(obs_storms, exclude_obs)) - 1.0)
