"""CSV (and optional SVG) output for result tables and maps.

Every CSV starts with ``#``-prefixed comment lines, the first two naming the
table and the configuration hash. Undefined values are written as ``NA``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .gridio import FieldSeries, GridSpec, write_series

NA = "NA"


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return NA
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            return NA
        return format(v, ".12g")
    return str(v)


def write_csv(path, title: str, config_hash: str, header, rows, notes=()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {title}", f"# config_hash: {config_hash}"]
    lines.extend(f"# {n}" for n in notes)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a CSV written by :func:`write_csv` (comments skipped)."""
    header = None
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if header is None:
            header = parts
        else:
            rows.append(parts)
    return header or [], rows


def write_map_csv(path, title, config_hash, mmap, notes=()):
    X, Y = _map_coords(mmap)
    # maps can hold ~1e6 cells; format plain floats directly (same text as fmt)
    xs = [_ffloat(v) for v in X.ravel().tolist()]
    ys = [_ffloat(v) for v in Y.ravel().tolist()]
    vs = [_ffloat(v) if d else NA for v, d in zip(mmap.values.ravel().tolist(), mmap.defined.ravel().tolist())]
    return write_csv(path, title, config_hash, ["x_km", "y_km", "value"], zip(xs, ys, vs), notes)


def _ffloat(v: float) -> str:
    return NA if v != v or v in (math.inf, -math.inf) else format(v, ".12g")


def _map_coords(mmap):
    ny, nx = mmap.values.shape
    if mmap.x_km is not None and mmap.y_km is not None:
        return np.meshgrid(mmap.x_km, mmap.y_km)
    cell = getattr(mmap, "cell_km", 1.0)
    return np.meshgrid((np.arange(nx) + 0.5) * cell, (np.arange(ny) + 0.5) * cell)


def write_ratio_pgrd(path, mmap, spec: GridSpec, t0, dt_hours, cell_km=None):
    """Store a percent-bias map as the non-negative ratio ``1 + bias/100`` (nt = 1).

    Undefined cells are masked.
    """
    ny, nx = mmap.values.shape
    if cell_km is None:
        cell_km = spec.cell_km if (ny, nx) == spec.shape else spec.cell_km * _decimation(mmap, spec)
    gs = GridSpec(nx, ny, cell_km, spec.origin_lon, spec.origin_lat)
    ratio = np.where(mmap.defined, np.maximum(1.0 + mmap.values / 100.0, 0.0), 0.0)
    ser = FieldSeries(gs, t0, dt_hours, ratio[None].astype(np.float32), mmap.defined.copy())
    write_series(ser, path)


def _decimation(mmap, spec):
    if mmap.x_km is not None and len(mmap.x_km) > 1:
        return (mmap.x_km[1] - mmap.x_km[0]) / spec.cell_km
    return 1.0


def write_svg_heatmap(path, mmap, title="", limit=100.0, config_hash=""):
    """Diverging heatmap of a percent-bias map; undefined cells drawn grey."""
    vals = mmap.values
    ny, nx = vals.shape
    px = max(1, min(8, 800 // max(nx, 1)))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{nx * px}" height="{ny * px + 20}">',
        f"<!-- config_hash: {config_hash} -->",
        f'<text x="2" y="14" font-size="12">{title}</text>',
    ]
    for r in range(ny):
        y = 20 + (ny - 1 - r) * px  # row 0 is southernmost
        for c in range(nx):
            if not mmap.defined[r, c]:
                color = "#bbbbbb"
            else:
                z = max(-1.0, min(1.0, vals[r, c] / limit))
                if z >= 0:
                    color = "#%02x%02x%02x" % (255, int(255 * (1 - z)), int(255 * (1 - z)))
                else:
                    color = "#%02x%02x%02x" % (int(255 * (1 + z)), int(255 * (1 + z)), 255)
            out.append(f'<rect x="{c * px}" y="{y}" width="{px}" height="{px}" fill="{color}"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
