"""End-to-end analysis: per-dataset catalogs and per-model comparisons.

:func:`analyze_dataset` turns one FieldSeries into clusters, events, metrics,
a factor decomposition and aggregated radial profiles. :func:`compare`
derives every model-vs-reference diagnostic from two analyzed datasets.
:func:`run_pipeline` drives both from a :class:`~raintrack.config.RunConfig`
and writes the results as CSV (plus PGRD maps and optional SVG).
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .diagnostics import (
    FACTOR_ORDER,
    ROW_LABELS,
    ROWS,
    BiasDecomposition,
    BiasTable,
    bias_map,
    bias_table,
    decompose,
    eval_grid,
    kernel_smooth,
    pixel_bias_map,
)
from .distributions import (
    Histogram,
    default_incident_edges,
    domain_totals,
    drop_smallest,
    event_amount_histogram,
    incident_histogram,
    incidents,
    log_edges,
    null_scale_histogram,
    scale_totals,
    totals_histogram,
    topk_excess,
)
from .errors import ConfigError, InvalidDataError
from .gridio import FieldSeries, block_upscale, read_series
from .ident import default_radius, identify_series
from .metrics import Profile, aggregate_profiles, compute_all_metrics, radial_profiles
from .report import write_csv, write_map_csv, write_ratio_pgrd, write_svg_heatmap
from .timing import DiurnalBins, daily_totals, diurnal_stats, event_presence_counts, linfit, per_bin_fits
from .track import TrackParams, track_frames

log = logging.getLogger(__name__)

KERNEL_METRICS = ("size", "duration", "number")
PIXEL_KINDS = ("amount", "intensity")


@dataclass
class DatasetResult:
    name: str
    series: FieldSeries
    radius: int
    frames: list
    events: list
    links: list
    storms: list
    decomposition: BiasDecomposition | None
    profiles_raw: list = field(default_factory=list)
    profiles_rescaled: list = field(default_factory=list)
    aggregate_raw: Profile | None = None
    aggregate_rescaled: Profile | None = None

    @property
    def amounts(self) -> np.ndarray:
        return np.array([s.amount_km3 for s in self.storms], dtype=np.float64)


def analyze_dataset(series: FieldSeries, cfg: RunConfig, name: str = "data", *, profiles: bool = True) -> DatasetResult:
    """Find every storm of ``series`` and compute its metrics."""
    radius = cfg.radius if cfg.radius is not None else default_radius(series.spec.cell_km)
    frames = identify_series(
        series, threshold=cfg.threshold, connectivity=cfg.connectivity, radius=radius, size_coef=cfg.size_coef
    )
    params = TrackParams(cfg.overlap_tau, cfg.dist_max_km, cfg.area_ratio_max)
    events, links = track_frames(frames, params)
    storms = compute_all_metrics(events, series)
    decomp = decompose(storms) if storms else None
    res = DatasetResult(name, series, radius, frames, events, links, storms, decomp)
    if profiles and storms:
        pairs = [radial_profiles(ev, series, n_bins=cfg.profile_bins, center=cfg.profile_center) for ev in events]
        res.profiles_raw = [p[0] for p in pairs]
        res.profiles_rescaled = [p[1] for p in pairs]
        res.aggregate_raw = aggregate_profiles(res.profiles_raw, res.amounts, cfg.profile_q)
        res.aggregate_rescaled = aggregate_profiles(res.profiles_rescaled, res.amounts, cfg.profile_q)
    return res


@dataclass
class Comparison:
    model: str
    obs: str
    table: BiasTable
    amount_bias: float  # ratios model/obs
    intensity_bias: float
    kernel_maps: dict  # metric -> (model map, obs map, bias map)
    pixel_maps: dict  # kind -> bias map
    incident_edges: np.ndarray
    hist_model: Histogram
    hist_obs: Histogram
    hist_null: Histogram
    totals_model: np.ndarray
    totals_obs: np.ndarray
    totals_scaled: np.ndarray
    totals_edges: np.ndarray
    totals_hist_model: Histogram
    totals_hist_scaled: Histogram
    event_edges: np.ndarray
    event_hist_model: Histogram
    event_hist_obs: Histogram
    topk: float | None
    bins: DiurnalBins
    diurnal: list
    fits: list  # (label, FitResult | None)
    presence_model: tuple
    presence_obs: tuple


def _quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kwargs)


def compare(model: DatasetResult, obs: DatasetResult, cfg: RunConfig,
            exclude_model=(), exclude_obs=()) -> Comparison:
    """All model-vs-reference diagnostics for one pair of analyzed datasets."""
    if model.decomposition is None or obs.decomposition is None:
        empty = model.name if model.decomposition is None else obs.name
        raise InvalidDataError(f"dataset {empty!r} contains no storms; nothing to compare")
    if not model.series.same_axis(obs.series):
        raise ConfigError(_axis_message(model.name, model.series, obs.name, obs.series))
    table = bias_table(model.decomposition, obs.decomposition)
    b_a = 1 + table.amount / 100.0
    thr = cfg.threshold

    obs_inc = incidents(obs.series, thr)
    mod_inc = incidents(model.series, thr)
    if cfg.null_intensity_bias == "event":
        b_i = 1 + table.intensity / 100.0
    else:
        if obs_inc.size == 0 or mod_inc.size == 0:
            raise InvalidDataError("incident intensity bias needs wet incidents in both datasets")
        b_i = (math.fsum(mod_inc) / mod_inc.size) / (math.fsum(obs_inc) / obs_inc.size)

    # kernel maps on the decimated evaluation grid
    grid = eval_grid(obs.series.spec, cfg.decimate)
    kmaps = {}
    for metric in KERNEL_METRICS:
        m = kernel_smooth(model.storms, metric, cfg.bandwidth_km, grid)
        o = kernel_smooth(obs.storms, metric, cfg.bandwidth_km, grid)
        kmaps[metric] = (m, o, bias_map(m, o))
    pmaps = {kind: pixel_bias_map(model.series, obs.series, kind, thr) for kind in PIXEL_KINDS}

    # location-based distributions on common bins
    top = max([thr] + [float(a.max()) for a in (obs_inc * b_i, mod_inc, obs_inc) if a.size])
    edges = default_incident_edges(top, thr, cfg.incident_bins)
    h_mod = _quiet(incident_histogram, model.series, thr, edges)
    h_obs = _quiet(incident_histogram, obs.series, thr, edges)
    h_null = _quiet(null_scale_histogram, obs_inc, b_a, b_i, edges)

    # domain-aggregated totals
    t_mod = domain_totals(model.series)
    t_obs = domain_totals(obs.series)
    t_scaled = scale_totals(t_obs, b_a)
    hi = max(float(t_mod.max(initial=0.0)), float(t_scaled.max(initial=0.0)), 1e-12)
    t_edges = np.linspace(0.0, hi, cfg.totals_bins + 1)
    t_edges[0] = -np.finfo(float).tiny
    th_mod = _quiet(totals_histogram, t_mod, t_edges)
    th_scaled = _quiet(totals_histogram, t_scaled, t_edges)

    # event-based distributions on common log bins
    kept = np.concatenate([model.amounts[drop_smallest(model.amounts)], obs.amounts[drop_smallest(obs.amounts)]])
    e_edges = log_edges(float(kept.min()), float(kept.max()), cfg.event_bins) if kept.size else np.array([0.0, 1.0])
    eh_mod = _quiet(event_amount_histogram, model.storms, e_edges)
    eh_obs = _quiet(event_amount_histogram, obs.storms, e_edges)
    try:
        topk = topk_excess(model.storms, obs.storms, b_a, cfg.topk, exclude_model, exclude_obs)
    except ValueError as exc:
        log.warning("top-%d excess undefined: %s", cfg.topk, exc)
        topk = None

    # timing
    bins = DiurnalBins.for_series(obs.series, cfg.offset_hours)
    diurnal = diurnal_stats(t_mod, t_obs, bins)
    fits = [(f"bin_{c:g}h", fr) for c, fr in per_bin_fits(t_mod, t_obs, bins)]
    day_bins = bins if cfg.day_boundary == "local" else DiurnalBins(bins.t0_hour_utc, bins.dt_hours, 0.0)
    fits.append(("daily", _try_fit(daily_totals(t_obs, day_bins), daily_totals(t_mod, day_bins))))
    nt = obs.series.nt
    pres_m = event_presence_counts(model.events, nt)
    pres_o = event_presence_counts(obs.events, nt)
    fits.append(("events_vs_total_model", _try_fit(pres_m[0], t_mod)))
    fits.append(("events_vs_total_obs", _try_fit(pres_o[0], t_obs)))
    return Comparison(
        model.name, obs.name, table, b_a, b_i, kmaps, pmaps, edges, h_mod, h_obs, h_null,
        t_mod, t_obs, t_scaled, t_edges, th_mod, th_scaled, e_edges, eh_mod, eh_obs, topk,
        bins, diurnal, fits, pres_m, pres_o,
    )


def _try_fit(x, y):
    try:
        return linfit(x, y)
    except ValueError:
        return None


def _axis_message(name_a, a: FieldSeries, name_b, b: FieldSeries) -> str:
    def desc(s):
        sp = s.spec
        return (f"nx={sp.nx} ny={sp.ny} cell_km={sp.cell_km:g} nt={s.nt} dt_hours={s.dt_hours:g} "
                f"t0={s.t0.strftime('%Y-%m-%dT%H:%M:%SZ')}")

    return f"incompatible grids after upscaling: {name_a} [{desc(a)}] vs {name_b} [{desc(b)}]"


def load_datasets(cfg: RunConfig) -> dict:
    """Read and upscale every configured dataset; all must share grid and time axis.

    The returned series all carry the intersection of the datasets' masks so
    every comparison is made over the same cells.
    """
    cfg.validate()
    loaded = {}
    for ds in (cfg.obs, *cfg.models):
        s = read_series(ds.path)
        if ds.upscale > 1:
            s = block_upscale(s, ds.upscale, cfg.min_valid_fraction)
        loaded[ds.name] = s
    ref_name = cfg.obs.name
    ref = loaded[ref_name]
    mask = ref.mask.copy()
    for name, s in loaded.items():
        if not s.same_axis(ref):
            raise ConfigError(_axis_message(name, s, ref_name, ref))
        mask &= s.mask
    return {name: (s if np.array_equal(s.mask, mask) else s.with_mask(mask)) for name, s in loaded.items()}


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "dataset"


# ----------------------------------------------------------------- writers

def write_clusters(path, res: DatasetResult, chash: str) -> Path:
    rows = (
        (f.timestep, c.id, c.n_cells, c.area_km2, c.total_mm, *c.centroid_km)
        for f in res.frames for c in f.clusters
    )
    return write_csv(
        path, f"cluster catalog: {res.name}", chash,
        ["timestep", "cluster_id", "n_cells", "area_km2", "total_mm", "centroid_x_km", "centroid_y_km"],
        rows, [f"radius_cells: {res.radius}"],
    )


def write_events(path, res: DatasetResult, chash: str) -> Path:
    rows = (
        (ev.event_id, ev.t_first, ev.t_last, ev.n_timesteps,
         ";".join(f"{t}:" + "|".join(str(c) for c in ids) for t, ids in ev.cluster_ids.items()),
         ev.n_merges, ev.n_splits)
        for ev in res.events
    )
    return write_csv(
        path, f"event catalog: {res.name}", chash,
        ["event_id", "t_first", "t_last", "n_timesteps", "cluster_ids", "n_merges", "n_splits"],
        rows, ["cluster_ids: timestep:id|id;timestep:id ..."],
    )


def write_metrics(path, res: DatasetResult, chash: str, tracks_path=None) -> list[Path]:
    files = [write_csv(
        path, f"storm metrics: {res.name}", chash,
        ["event_id", "amount_km3", "intensity_mm_hr", "size_km2", "duration_hr", "t_first", "t_last"],
        ((m.event_id, m.amount_km3, m.mean_intensity_mm_per_hr, m.mean_size_km2, m.duration_hr,
          m.t_first, m.t_last) for m in res.storms),
    )]
    if tracks_path is not None:
        files.append(write_csv(
            tracks_path, f"centroid tracks: {res.name}", chash,
            ["event_id", "timestep", "centroid_x_km", "centroid_y_km", "area_km2", "total_mm"],
            ((m.event_id, *row) for m in res.storms for row in m.track),
        ))
    return files


def write_decomposition(path, res: DatasetResult, chash: str) -> Path:
    dd = res.decomposition.as_dict()
    return write_csv(
        path, f"factor decomposition: {res.name}", chash,
        ["factor", "value"], ((k, dd[k]) for k in ROWS),
        ["amount in km3; intensity mm/h; size km2; duration h",
         f"factor weighting order: {' -> '.join(FACTOR_ORDER[:3])}"],
    )


def write_profiles(d: Path, res: DatasetResult, chash: str, profile_q: float) -> list[Path]:
    files = []
    for mode, prof in (("raw", res.aggregate_raw), ("rescaled", res.aggregate_rescaled)):
        if prof is None:
            continue
        files.append(write_csv(
            d / f"profile_{mode}.csv", f"{mode} radial profile: {res.name}", chash,
            ["bin_lo", "bin_hi", "mean_intensity", "n_samples"],
            ((lo, hi, v if n else None, n) for lo, hi, v, n in
             zip(prof.edges[:-1], prof.edges[1:], prof.values, prof.counts)),
            [f"top fraction q: {profile_q:g}", "n_samples = number of storms with samples in the bin",
             "distance km, intensity mm/h" if mode == "raw" else "distance and intensity rescaled per storm"],
        ))
    return files


def write_dataset(res: DatasetResult, outdir: Path, chash: str, profile_q: float = 0.8) -> list[Path]:
    """Cluster and event catalogs, metrics, tracks, decomposition, profiles and presence counts."""
    d = outdir / safe_name(res.name)
    s = res.series
    files = [write_clusters(d / "clusters.csv", res, chash), write_events(d / "events.csv", res, chash)]
    files.extend(write_metrics(d / "metrics.csv", res, chash, d / "tracks.csv"))
    if res.decomposition is not None:
        files.append(write_decomposition(d / "decomposition.csv", res, chash))
    files.extend(write_profiles(d, res, chash, profile_q))
    present, initiated = event_presence_counts(res.events, s.nt)
    files.append(write_csv(
        d / "presence.csv", f"events per interval: {res.name}", chash,
        ["timestep", "interval_start_utc", "present", "initiated", "domain_total_km3"],
        ((t, s.interval_start(t).strftime("%Y-%m-%dT%H:%M:%SZ"), present[t], initiated[t], tot)
         for t, tot in enumerate(domain_totals(s))),
    ))
    return files


def write_bias_table(path, comparisons, chash):
    names = [c.model for c in comparisons]
    rows = [[ROW_LABELS[k]] + [c.table.as_dict()[k] for c in comparisons] for k in ROWS]
    return write_csv(path, "percent anomaly vs reference", chash, ["quantity"] + names, rows,
                     [f"reference: {comparisons[0].obs}" if comparisons else "reference: none",
                      f"factor weighting order: {' -> '.join(FACTOR_ORDER[:3])}"])


def _hist_rows(edges, *hists):
    nb = len(edges) - 1
    for j in range(nb):
        row = [edges[j], edges[j + 1]]
        for h in hists:
            row.extend([h.totals[j], h.counts[j]])
        yield row


COMPARISON_PARTS = ("maps", "dist", "timing")


def write_comparison(cmp: Comparison, obs: DatasetResult, outdir: Path, chash: str, cfg: RunConfig,
                     parts=COMPARISON_PARTS) -> list[Path]:
    """Write the CSVs of the selected ``parts`` of one comparison."""
    d = outdir / f"{safe_name(cmp.model)}_vs_{safe_name(cmp.obs)}"
    files = []
    if "maps" in parts:
        files.extend(_write_maps(cmp, obs, d, chash, cfg))
    if "dist" in parts:
        files.extend(_write_dists(cmp, obs, d, chash, cfg))
    if "timing" in parts:
        files.extend(_write_timing(cmp, d, chash, cfg))
    return files


def _write_maps(cmp, obs, d, chash, cfg):
    files = []
    spec = obs.series.spec
    t0 = obs.series.t0
    for metric, (m, o, b) in cmp.kernel_maps.items():
        files.append(write_map_csv(d / f"map_{metric}_bias.csv", f"{metric} bias map (%)", chash, b,
                                   [f"bandwidth_km: {cfg.bandwidth_km:g}", f"decimate: {cfg.decimate}"]))
        files.append(write_map_csv(d / f"map_{metric}_model.csv", f"{metric} map: {cmp.model}", chash, m))
        files.append(write_map_csv(d / f"map_{metric}_obs.csv", f"{metric} map: {cmp.obs}", chash, o))
        p = d / f"map_{metric}_bias_ratio.pgrd"
        write_ratio_pgrd(p, b, spec, t0, obs.series.dt_hours, spec.cell_km * cfg.decimate)
        files.append(p)
        if cfg.svg:
            write_svg_heatmap(d / f"map_{metric}_bias.svg", b, f"{metric} bias (%)", config_hash=chash)
    for kind, b in cmp.pixel_maps.items():
        files.append(write_map_csv(d / f"pixel_{kind}_bias.csv", f"per-cell {kind} bias (%)", chash, b))
        p = d / f"pixel_{kind}_bias_ratio.pgrd"
        write_ratio_pgrd(p, b, spec, t0, obs.series.dt_hours, spec.cell_km)
        files.append(p)
        if cfg.svg:
            write_svg_heatmap(d / f"pixel_{kind}_bias.svg", b, f"per-cell {kind} bias (%)", config_hash=chash)
    return files


def _write_dists(cmp, obs, d, chash, cfg):
    files = []
    dtv = obs.series.dt_hours
    files.append(write_csv(
        d / "incident_hist.csv", "incident distribution (mm per interval)", chash,
        ["bin_lo", "bin_hi", "bin_lo_mm_hr", "bin_hi_mm_hr", "model_total", "model_count",
         "null_total", "null_count", "obs_total", "obs_count"],
        ((r[0], r[1], r[0] / dtv, r[1] / dtv, *r[2:]) for r in
         _hist_rows(cmp.incident_edges, cmp.hist_model, cmp.hist_null, cmp.hist_obs)),
        [f"amount_bias_ratio: {cmp.amount_bias!r}", f"intensity_bias_ratio: {cmp.intensity_bias!r}",
         f"intensity_bias_source: {cfg.null_intensity_bias}",
         f"model_subthreshold_fraction: {cmp.hist_model.dry_fraction!r}",
         f"obs_subthreshold_fraction: {cmp.hist_obs.dry_fraction!r}",
         f"model_subthreshold_total_mm: {cmp.hist_model.excluded_total!r}",
         f"obs_subthreshold_total_mm: {cmp.hist_obs.excluded_total!r}"],
    ))
    files.append(write_csv(
        d / "domain_totals.csv", "domain total per interval (km3)", chash,
        ["timestep", "model", "obs", "obs_scaled"],
        ((t, a, b, c) for t, (a, b, c) in enumerate(zip(cmp.totals_model, cmp.totals_obs, cmp.totals_scaled))),
        [f"amount_bias_ratio: {cmp.amount_bias!r}"],
    ))
    files.append(write_csv(
        d / "domain_totals_hist.csv", "distribution of domain totals (km3)", chash,
        ["bin_lo", "bin_hi", "model_total", "model_count", "scaled_total", "scaled_count"],
        _hist_rows(cmp.totals_edges, cmp.totals_hist_model, cmp.totals_hist_scaled),
    ))
    files.append(write_csv(
        d / "event_hist.csv", "event amount distribution (km3)", chash,
        ["bin_lo", "bin_hi", "model_total", "model_count", "obs_total", "obs_count"],
        _hist_rows(cmp.event_edges, cmp.event_hist_model, cmp.event_hist_obs),
        [f"model_dropped_total_km3: {cmp.event_hist_model.excluded_total!r}",
         f"obs_dropped_total_km3: {cmp.event_hist_obs.excluded_total!r}"],
    ))
    files.append(write_csv(
        d / "topk.csv", "top-k event excess", chash, ["k", "excess_pct"], [(cfg.topk, cmp.topk)],
    ))
    return files


def _write_timing(cmp, d, chash, cfg):
    files = []
    files.append(write_csv(
        d / "diurnal.csv", "diurnal additive bias of domain totals (km3)", chash,
        ["bin_center_local_hour", "mean_bias", "median", "p9", "p25", "p75", "p91", "model_mean", "obs_mean", "n"],
        ((r.center_hour, r.mean_bias, r.median, r.p9, r.p25, r.p75, r.p91, r.model_mean, r.obs_mean, r.n)
         for r in cmp.diurnal),
        [f"offset_hours: {cfg.offset_hours:g}"],
    ))
    files.append(write_csv(
        d / "fits.csv", "least-squares fits", chash,
        ["subset", "slope", "intercept", "r", "n", "zero_variance"],
        ((label, *((f.slope, f.intercept, f.r, f.n, f.zero_variance) if f else (None,) * 5))
         for label, f in cmp.fits),
        ["bin_* and daily: model total vs obs total", "events_vs_total_*: domain total vs events present"],
    ))
    pm, po = cmp.presence_model, cmp.presence_obs
    files.append(write_csv(
        d / "presence.csv", "events present and initiated per interval", chash,
        ["timestep", "local_bin_hour", "model_present", "model_initiated", "obs_present", "obs_initiated"],
        ((t, cmp.bins.centers()[b], pm[0][t], pm[1][t], po[0][t], po[1][t])
         for t, b in enumerate(cmp.bins.assign(len(pm[0])))),
    ))
    return files


def write_manifest(path: Path, cfg: RunConfig, results: dict, files) -> Path:
    lines = [
        "# raintrack run manifest",
        f"# config_hash: {cfg.config_hash}",
        f"raintrack_version = {__version__}",
        *cfg.manifest_lines(),
    ]
    for name, res in results.items():
        sp = res.series.spec
        lines.append(
            f"resolved.{name} = nx={sp.nx} ny={sp.ny} cell_km={sp.cell_km!r} nt={res.series.nt} "
            f"radius={res.radius} events={len(res.events)}"
        )
    # binary grids have no comment header, so every file is pinned here by digest
    for f in files:
        digest = hashlib.sha256(Path(f).read_bytes()).hexdigest()
        lines.append(f"file = {Path(f).relative_to(path.parent).as_posix()} sha256={digest}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def run_pipeline(cfg: RunConfig) -> Path:
    """Run the full analysis described by ``cfg``; returns the output directory."""
    series = load_datasets(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash
    results = {}
    files = []
    for name, s in series.items():
        log.info("analyzing %s", name)
        res = analyze_dataset(s, cfg, name)
        results[name] = res
        files.extend(write_dataset(res, out, chash, cfg.profile_q))
    obs = results[cfg.obs.name]
    comparisons = []
    for ds in cfg.models:
        log.info("comparing %s with %s", ds.name, cfg.obs.name)
        cmp = compare(results[ds.name], obs, cfg, ds.exclude, cfg.obs.exclude)
        comparisons.append(cmp)
        files.extend(write_comparison(cmp, obs, out, chash, cfg))
    if comparisons:
        files.append(write_bias_table(out / "bias_table.csv", comparisons, chash))
    write_manifest(out / "run_manifest.txt", cfg, results, files)
    return out
