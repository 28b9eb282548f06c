"""Per-event storm metrics and radial intensity profiles.

For an event covering ``n`` timesteps with wet area ``A_t`` (km^2) and
summed accumulation ``P_t`` (mm over its cells):

* amount    = sum_t P_t * cell_area * 1e-6                (km^3)
* duration  = n * dt                                      (h)
* size      = sum_t A_t / n                               (km^2)
* intensity = sum_t P_t * cell_area / (size * duration)   (mm/h)

so that ``intensity * size * duration * 1e-6 == amount``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MM_KM2_TO_KM3 = 1e-6


@dataclass(frozen=True)
class StormMetrics:
    event_id: int
    amount_km3: float
    mean_intensity_mm_per_hr: float
    mean_size_km2: float
    duration_hr: float
    t_first: int
    t_last: int
    track: tuple  # per timestep: (t, x_km, y_km, area_km2, total_mm)

    @property
    def location_km(self) -> tuple[float, float]:
        """Amount-weighted mean of the centroid track."""
        w = np.array([row[4] for row in self.track])
        x = np.array([row[1] for row in self.track])
        y = np.array([row[2] for row in self.track])
        if w.sum() <= 0:
            return float(x.mean()), float(y.mean())
        return float(np.average(x, weights=w)), float(np.average(y, weights=w))


def _cell_xy(cells, nx, cell_km):
    rows, cols = np.divmod(np.asarray(cells), nx)
    return (cols + 0.5) * cell_km, (rows + 0.5) * cell_km


def _event_cells_values(event, series, t):
    cells = event.cells(t)
    vals = series.fields[t].ravel()[cells].astype(np.float64)
    return cells, vals


def compute_metrics(event, series) -> StormMetrics:
    """Amount, intensity, size, duration and center-of-gravity track of ``event``."""
    if not event.clusters:
        raise ValueError("event has no clusters")
    spec = series.spec
    area = spec.cell_area_km2
    track = []
    totals = []
    areas = []
    for t in sorted(event.clusters):
        cells, vals = _event_cells_values(event, series, t)
        if cells.size == 0:
            raise ValueError(f"event {event.event_id} is empty at timestep {t}")
        p_t = math.fsum(vals)
        x, y = _cell_xy(cells, spec.nx, spec.cell_km)
        w = vals if p_t > 0 else None
        cx, cy = float(np.average(x, weights=w)), float(np.average(y, weights=w))
        a_t = cells.size * area
        track.append((t, cx, cy, a_t, p_t))
        totals.append(p_t)
        areas.append(a_t)
    n = len(track)
    volume = math.fsum(totals) * area  # mm km^2
    duration = n * series.dt_hours
    size = math.fsum(areas) / n
    intensity = volume / (size * duration)
    return StormMetrics(
        event.event_id, volume * MM_KM2_TO_KM3, intensity, size, duration,
        event.t_first, event.t_last, tuple(track),
    )


def compute_all_metrics(events, series) -> list[StormMetrics]:
    return [compute_metrics(ev, series) for ev in events]


@dataclass(frozen=True)
class Profile:
    edges: np.ndarray
    values: np.ndarray  # per-bin mean intensity (nan where empty)
    counts: np.ndarray
    mode: str = "raw"
    degenerate: bool = False

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0


def _profile_samples(event, series, center):
    spec = series.spec
    dist = []
    inten = []
    if center == "lifetime":
        xs, ys, ws = [], [], []
        for t in event.clusters:
            cells, vals = _event_cells_values(event, series, t)
            x, y = _cell_xy(cells, spec.nx, spec.cell_km)
            xs.append(x)
            ys.append(y)
            ws.append(vals)
        w = np.concatenate(ws)
        life = (_wmean(np.concatenate(xs), w), _wmean(np.concatenate(ys), w))
    elif center != "timestep":
        raise ValueError(f"center must be 'timestep' or 'lifetime', got {center!r}")
    for t in sorted(event.clusters):
        cells, vals = _event_cells_values(event, series, t)
        x, y = _cell_xy(cells, spec.nx, spec.cell_km)
        if center == "timestep":
            cx, cy = _wmean(x, vals), _wmean(y, vals)
        else:
            cx, cy = life
        dist.append(np.hypot(x - cx, y - cy))
        inten.append(vals / series.dt_hours)
    return np.concatenate(dist), np.concatenate(inten)


def _wmean(x, w):
    # same arithmetic as np.average(x, weights=w) without its argument handling
    return (x * w).sum() / w.sum()


def _bin_means(d, v, edges):
    # bins are [lo, hi); the last bin also takes d == edges[-1]
    k = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, len(edges) - 2)
    counts = np.bincount(k, minlength=len(edges) - 1)
    sums = np.bincount(k, weights=v, minlength=len(edges) - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return means, counts


def radial_profile(event, series, mode: str = "raw", bins=None, *, n_bins: int = 20,
                   center: str = "timestep") -> Profile:
    """Mean intensity (mm/h) against distance from the storm center.

    ``raw``: distances in km, bins of width ``cell_km`` from 0 unless ``bins``
    (edges) is given. ``rescaled``: distances divided by the storm's maximum
    sample distance and binned into ``n_bins`` on [0, 1]; bin means are then
    divided by their maximum so the peak bin is exactly 1.
    """
    if not event.clusters:
        raise ValueError("event has no clusters")
    d, v = _profile_samples(event, series, center)
    return _profile_from_samples(d, v, series.spec.cell_km, mode, bins, n_bins)


def radial_profiles(event, series, *, n_bins: int = 20, center: str = "timestep") -> tuple[Profile, Profile]:
    """Raw and rescaled profiles of one event from a single pass over its cells."""
    if not event.clusters:
        raise ValueError("event has no clusters")
    d, v = _profile_samples(event, series, center)
    cell_km = series.spec.cell_km
    return (_profile_from_samples(d, v, cell_km, "raw", None, n_bins),
            _profile_from_samples(d, v, cell_km, "rescaled", None, n_bins))


def _profile_from_samples(d, v, cell_km, mode, bins, n_bins) -> Profile:
    if mode == "raw":
        if bins is None:
            w = cell_km
            nb = max(1, int(math.floor(d.max() / w)) + 1)
            edges = np.arange(nb + 1) * w
        else:
            edges = np.asarray(bins, dtype=np.float64)
        means, counts = _bin_means(d, v, edges)
        return Profile(edges, means, counts, "raw")
    if mode != "rescaled":
        raise ValueError(f"mode must be 'raw' or 'rescaled', got {mode!r}")
    dmax = d.max()
    edges = np.linspace(0.0, 1.0, n_bins + 1) if bins is None else np.asarray(bins, dtype=np.float64)
    if dmax <= 0:
        # a single wet cell per timestep has no distance scale; everything sits in bin 0
        vals = np.full(len(edges) - 1, np.nan)
        vals[0] = 1.0
        counts = np.zeros(len(edges) - 1, dtype=np.int64)
        counts[0] = d.size
        return Profile(edges, vals, counts, "rescaled", degenerate=True)
    means, counts = _bin_means(d / dmax, v, edges)
    peak = np.nanmax(means)
    return Profile(edges, means / peak, counts, "rescaled")


def select_top_fraction(amounts, q: float = 0.8) -> np.ndarray:
    """Indices of the largest amounts whose cumulative sum first reaches ``q`` of the total."""
    amounts = np.asarray(amounts, dtype=np.float64)
    if amounts.size == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-amounts, kind="stable")
    csum = np.cumsum(amounts[order])
    target = q * csum[-1]
    n = int(np.searchsorted(csum, target * (1 - 1e-12), side="left")) + 1
    return order[: min(n, amounts.size)]


def aggregate_profiles(profiles, amounts, q: float = 0.8) -> Profile:
    """Unweighted per-bin mean of the profiles of the top-``q`` precipitation events.

    Raw profiles of different extent are padded when their edges share a
    common prefix.
    """
    profiles = list(profiles)
    if len(profiles) != len(amounts):
        raise ValueError("need one amount per profile")
    chosen = [profiles[i] for i in select_top_fraction(amounts, q)]
    if not chosen:
        raise ValueError("no profiles selected")
    modes = {p.mode for p in chosen}
    if len(modes) != 1:
        raise ValueError("profiles mix raw and rescaled modes")
    longest = max(chosen, key=lambda p: len(p.edges)).edges
    nb = len(longest) - 1
    sums = np.zeros(nb)
    n = np.zeros(nb)
    for p in chosen:
        k = len(p.edges)
        if not np.allclose(p.edges, longest[:k]):
            raise ValueError("profiles use incompatible binning")
        occ = p.counts > 0
        sums[: k - 1][occ] += p.values[occ]
        n[: k - 1][occ] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(n > 0, sums / np.maximum(n, 1), np.nan)
    return Profile(longest.copy(), vals, n.astype(np.int64), chosen[0].mode)
