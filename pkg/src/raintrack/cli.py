"""Command-line front end.

Exit status::

    0  success
    2  configuration or usage error
    3  unreadable or invalid data
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import _RUN_FIELDS, DatasetConfig, RunConfig, load_config, with_overrides
from .errors import ConfigError, RaintrackError
from .gridio import GridSpec, block_upscale, format_timestamp, parse_timestamp, read_series, series_from_csv_grids, write_series
from .pipeline import (
    analyze_dataset,
    compare,
    load_datasets,
    run_pipeline,
    write_bias_table,
    write_clusters,
    write_comparison,
    write_decomposition,
    write_events,
    write_metrics,
    write_profiles,
)
from .report import write_csv
from .synth import format_spec_file, generate, parse_spec_file, perturb, random_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

log = logging.getLogger("raintrack")


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    """One long flag per run parameter; each overrides the config file."""
    g = p.add_argument_group("analysis parameters (override --config)")
    g.add_argument("--config", help="run configuration file")
    for name in _RUN_FIELDS:
        if name in ("output", "svg"):
            continue
        g.add_argument("--" + name.replace("_", "-"), dest=f"param_{name}", metavar="VALUE")


def _overrides(args) -> dict:
    return {k[len("param_"):]: v for k, v in vars(args).items() if k.startswith("param_") and v is not None}


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return with_overrides(cfg, _overrides(args))


def _dataset_config(args, obs_path, model_paths=()) -> RunConfig:
    cfg = _base_config(args)
    obs = DatasetConfig(getattr(args, "obs_name", None) or "obs", obs_path, getattr(args, "upscale", 1) or 1)
    models = tuple(
        DatasetConfig(_model_name(path, i), path, getattr(args, "model_upscale", 1) or 1)
        for i, path in enumerate(model_paths)
    )
    return replace(cfg, obs=obs, models=models).validate()


def _model_name(path, i):
    stem = Path(path).stem
    return stem if stem != "obs" else f"model{i + 1}"


# ------------------------------------------------------------------ pgrd

def cmd_pgrd_from_csv(args):
    t0 = parse_timestamp(args.t0)
    s = series_from_csv_grids(args.csv, args.cell_km, t0, args.dt_hours, args.origin_lon, args.origin_lat)
    write_series(s, args.output)
    print(f"wrote {args.output}: nt={s.nt} ny={s.spec.ny} nx={s.spec.nx}")


def cmd_pgrd_info(args):
    s = read_series(args.file)
    sp = s.spec
    vf = s.valid_fields()
    print(f"file        {args.file}")
    print(f"grid        nx={sp.nx} ny={sp.ny} cell_km={sp.cell_km:g}")
    print(f"origin      lon={sp.origin_lon:g} lat={sp.origin_lat:g}")
    print(f"time        t0={format_timestamp(s.t0)} dt_hours={s.dt_hours:g} nt={s.nt}")
    print(f"valid cells {int(s.mask.sum())} of {sp.nx * sp.ny}")
    print(f"max value   {float(vf.max()) if vf.size else 0.0:g} mm")


def cmd_pgrd_upscale(args):
    s = read_series(args.input)
    out = block_upscale(s, args.factor, args.min_valid_fraction)
    write_series(out, args.output)
    print(f"wrote {args.output}: ny={out.spec.ny} nx={out.spec.nx} cell_km={out.spec.cell_km:g}")


# ------------------------------------------------------- single-dataset stages

def _analyze_single(args, profiles=False):
    cfg = _dataset_config(args, args.input)
    series = load_datasets(cfg)[cfg.obs.name]
    return cfg, analyze_dataset(series, cfg, cfg.obs.name, profiles=profiles)


def cmd_identify(args):
    cfg, res = _analyze_single(args)
    write_clusters(args.output, res, cfg.config_hash)
    print(f"{sum(f.n_clusters for f in res.frames)} clusters in {len(res.frames)} intervals -> {args.output}")


def cmd_track(args):
    cfg, res = _analyze_single(args)
    write_events(args.output, res, cfg.config_hash)
    print(f"{len(res.events)} events -> {args.output}")


def cmd_metrics(args):
    cfg, res = _analyze_single(args, profiles=args.profiles_dir is not None)
    write_metrics(args.output, res, cfg.config_hash, args.tracks)
    if args.profiles_dir is not None:
        write_profiles(Path(args.profiles_dir), res, cfg.config_hash, cfg.profile_q)
    print(f"{len(res.storms)} storms -> {args.output}")


def cmd_decompose(args):
    cfg = _dataset_config(args, args.obs, args.model)
    series = load_datasets(cfg)
    obs = analyze_dataset(series[cfg.obs.name], cfg, cfg.obs.name, profiles=False)
    if obs.decomposition is None:
        raise RaintrackError(f"no storms found in {args.obs}")
    if not cfg.models:
        write_decomposition(args.output, obs, cfg.config_hash)
        for k, v in obs.decomposition.as_dict().items():
            print(f"{k:10s} {v:.6g}")
        return
    comps = []
    for ds in cfg.models:
        m = analyze_dataset(series[ds.name], cfg, ds.name, profiles=False)
        comps.append(compare(m, obs, cfg))
    write_bias_table(args.output, comps, cfg.config_hash)
    for c in comps:
        print(c.model + ": " + ", ".join(f"{k} {v:+.2f}%" for k, v in c.table.as_dict().items()))


def _pair_command(parts):
    def run(args):
        cfg = _dataset_config(args, args.obs, [args.model])
        series = load_datasets(cfg)
        obs = analyze_dataset(series[cfg.obs.name], cfg, cfg.obs.name, profiles=False)
        mname = cfg.models[0].name
        m = analyze_dataset(series[mname], cfg, mname, profiles=False)
        cmp = compare(m, obs, cfg)
        files = write_comparison(cmp, obs, Path(args.output_dir), cfg.config_hash, replace(cfg, svg=args.svg), parts)
        print(f"wrote {len(files)} files under {args.output_dir}")
    return run


# ------------------------------------------------------------------ synth

def cmd_synth(args):
    grid = GridSpec(args.nx, args.ny, args.cell_km)
    t0 = parse_timestamp(args.t0)
    if args.specs:
        specs = parse_spec_file(Path(args.specs).read_text(encoding="utf-8"))
    else:
        rng = np.random.default_rng(args.seed)
        specs = random_scene(rng, grid, args.nt, args.random, dt_hours=args.dt_hours)
    series, truth = generate(specs, grid, args.nt, args.seed, dt_hours=args.dt_hours, t0=t0,
                             threshold=args.threshold, jitter=args.jitter)
    write_series(series, args.output)
    print(f"wrote {args.output}: {len(specs)} storms")
    if args.write_specs:
        Path(args.write_specs).write_text(format_spec_file(specs), encoding="utf-8")
    if args.truth:
        rows = []
        for i, st in enumerate(truth.storms, start=1):
            rows.append((i, st.t_first, st.t_last, st.amount_km3(grid.cell_area_km2)))
        write_csv(args.truth, "synthetic truth catalog", "none", ["storm", "t_first", "t_last", "amount_km3"], rows)
    if args.model_output:
        diurnal = None
        if args.diurnal_offsets:
            diurnal = [float(x) for x in args.diurnal_offsets.split(",")]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = perturb(series, args.intensity_scale, args.dilation_cells, diurnal, threshold=args.threshold)
        for w in caught:
            log.warning("%s", w.message)
        write_series(model, args.model_output)
        print(f"wrote {args.model_output}: perturbed model")


# ------------------------------------------------------------------ run

def cmd_run(args):
    if not args.config:
        raise ConfigError("run needs --config")
    cfg = _base_config(args)
    if args.output:
        cfg = replace(cfg, output=args.output)
    if args.svg:
        cfg = replace(cfg, svg=True)
    out = run_pipeline(cfg.validate())
    print(f"outputs in {out} (config hash {cfg.config_hash})")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raintrack", description="Event-based precipitation diagnostics.")
    p.add_argument("--version", action="version", version=f"raintrack {__version__}")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    pg = sub.add_parser("pgrd", help="convert and inspect PGRD files")
    pgs = pg.add_subparsers(dest="pgrd_command", required=True)
    a = pgs.add_parser("from-csv", help="build a PGRD file from one CSV grid per interval")
    a.add_argument("csv", nargs="+")
    a.add_argument("--output", required=True)
    a.add_argument("--cell-km", type=float, required=True)
    a.add_argument("--t0", required=True, help="start of the first interval, e.g. 2005-06-01T00:00:00Z")
    a.add_argument("--dt-hours", type=float, default=6.0)
    a.add_argument("--origin-lon", type=float, default=0.0)
    a.add_argument("--origin-lat", type=float, default=0.0)
    a.set_defaults(func=cmd_pgrd_from_csv)
    a = pgs.add_parser("info", help="print a file's header summary")
    a.add_argument("file")
    a.set_defaults(func=cmd_pgrd_info)
    a = pgs.add_parser("upscale", help="block-average onto a coarser grid")
    a.add_argument("input")
    a.add_argument("--output", required=True)
    a.add_argument("--factor", type=int, required=True)
    a.add_argument("--min-valid-fraction", type=float, default=0.5)
    a.set_defaults(func=cmd_pgrd_upscale)

    for name, fn, help_ in (
        ("identify", cmd_identify, "cluster catalog of one dataset"),
        ("track", cmd_track, "event catalog of one dataset"),
        ("metrics", cmd_metrics, "per-storm metrics of one dataset"),
    ):
        a = sub.add_parser(name, help=help_)
        a.add_argument("--input", required=True)
        a.add_argument("--output", required=True)
        a.add_argument("--upscale", type=int, default=1)
        if name == "metrics":
            a.add_argument("--tracks", help="also write the centroid tracks here")
            a.add_argument("--profiles-dir", help="also write aggregated radial profiles here")
        _add_param_flags(a)
        a.set_defaults(func=fn)

    a = sub.add_parser("decompose", help="factor decomposition, or a bias table when models are given")
    a.add_argument("--obs", required=True)
    a.add_argument("--model", action="append", default=[])
    a.add_argument("--output", required=True)
    a.add_argument("--upscale", type=int, default=1)
    a.add_argument("--model-upscale", type=int, default=1)
    _add_param_flags(a)
    a.set_defaults(func=cmd_decompose)

    for name, parts, help_ in (
        ("biasmap", ("maps",), "kernel-smoothed and per-cell bias maps"),
        ("dist", ("dist",), "incident and domain-total histograms, plus event distributions"),
        ("diurnal", ("timing",), "diurnal bias statistics and fits"),
    ):
        a = sub.add_parser(name, help=help_)
        a.add_argument("--obs", required=True)
        a.add_argument("--model", required=True)
        a.add_argument("--output-dir", required=True)
        a.add_argument("--upscale", type=int, default=1)
        a.add_argument("--model-upscale", type=int, default=1)
        a.add_argument("--svg", action="store_true")
        _add_param_flags(a)
        a.set_defaults(func=_pair_command(parts))

    a = sub.add_parser("synth", help="render synthetic storms (and optionally a perturbed model)")
    src = a.add_mutually_exclusive_group(required=True)
    src.add_argument("--specs", help="storm spec file")
    src.add_argument("--random", type=int, metavar="N", help="place up to N well-separated random storms")
    a.add_argument("--output", required=True)
    a.add_argument("--nx", type=int, default=200)
    a.add_argument("--ny", type=int, default=200)
    a.add_argument("--nt", type=int, default=40)
    a.add_argument("--cell-km", type=float, default=12.0)
    a.add_argument("--dt-hours", type=float, default=6.0)
    a.add_argument("--t0", default="2005-06-01T00:00:00Z")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--jitter", type=float, default=0.0)
    a.add_argument("--threshold", type=float, default=0.2)
    a.add_argument("--truth", help="write the truth catalog CSV here")
    a.add_argument("--write-specs", help="write the storm specs used here")
    a.add_argument("--model-output", help="also write a perturbed copy as a synthetic model")
    a.add_argument("--intensity-scale", type=float, default=1.0)
    a.add_argument("--dilation-cells", type=int, default=0)
    a.add_argument("--diurnal-offsets", help="comma-separated mm offsets, one per time-of-day bin")
    a.set_defaults(func=cmd_synth)

    a = sub.add_parser("run", help="full pipeline from a configuration file")
    a.add_argument("--output", help="output directory (overrides the config)")
    a.add_argument("--svg", action="store_true", help="also emit SVG heatmaps")
    _add_param_flags(a)
    a.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"raintrack: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RaintrackError, OSError, ValueError) as exc:
        print(f"raintrack: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
