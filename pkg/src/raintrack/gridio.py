"""Gridded precipitation series with PGRD file I/O and block upscaling.

PGRD layout (little-endian)::

    magic "PGRD" | version u32 (=1) | nx u32 | ny u32 | nt u32
    cell_km f64 | dt_hours f64 | origin_lon f64 | origin_lat f64
    t0_len u32 | t0 (UTF-8 ISO-8601, t0_len bytes)
    mask: nx*ny u8, row-major, 1 = valid
    nt grids of nx*ny f32, row-major, row 0 southernmost

Masked cells carry the sentinel -1.0 in the payload; the mask bytes are
authoritative.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, FormatError, InvalidDataError

MAGIC = b"PGRD"
VERSION = 1
SENTINEL = -1.0

_HEAD = struct.Struct("<4sIIII4d")
_U32 = struct.Struct("<I")
HEADER_SIZE = _HEAD.size  # 52 bytes, before the t0 length field


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    cell_km: float
    origin_lon: float = 0.0
    origin_lat: float = 0.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.nx}x{self.ny}")
        if not self.cell_km > 0:
            raise ValueError(f"cell_km must be positive, got {self.cell_km}")

    @property
    def cell_area_km2(self) -> float:
        return self.cell_km * self.cell_km

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def cell_centers_km(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates ``(x, y)`` in km, each of shape ``(ny, nx)``."""
        x = (np.arange(self.nx) + 0.5) * self.cell_km
        y = (np.arange(self.ny) + 0.5) * self.cell_km
        return np.meshgrid(x, y)


def format_timestamp(t: datetime) -> str:
    return t.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    t = datetime.fromisoformat(text)
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


@dataclass(eq=False)
class FieldSeries:
    """Time-ordered stack of accumulation grids (mm per interval) on one grid.

    ``fields`` has shape ``(nt, ny, nx)`` and dtype float32; ``mask`` has shape
    ``(ny, nx)`` with True marking valid cells. Masked cells hold ``SENTINEL``.
    """

    spec: GridSpec
    t0: datetime
    dt_hours: float
    fields: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        if isinstance(self.t0, str):
            self.t0 = parse_timestamp(self.t0)
        elif self.t0.tzinfo is None:
            self.t0 = self.t0.replace(tzinfo=timezone.utc)
        if not self.dt_hours > 0:
            raise ValueError("dt_hours must be positive")
        shape = self.spec.shape
        fields = np.asarray(self.fields, dtype=np.float32)
        if fields.ndim == 2:
            fields = fields[None]
        if fields.ndim != 3 or fields.shape[1:] != shape:
            raise ValueError(f"fields shape {fields.shape} does not match grid {shape}")
        if self.mask is None:
            mask = np.ones(shape, dtype=bool)
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != shape:
                raise ValueError(f"mask shape {mask.shape} does not match grid {shape}")
        valid = fields[:, mask]
        if not np.all(np.isfinite(valid)):
            raise InvalidDataError("non-finite value in a valid cell")
        if np.any(valid < 0):
            raise InvalidDataError("negative value in a valid cell")
        if not mask.all():
            fields = fields.copy()
            fields[:, ~mask] = SENTINEL
        self.fields = fields
        self.mask = mask

    @property
    def nt(self) -> int:
        return self.fields.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.spec.shape

    def valid_fields(self) -> np.ndarray:
        """Fields as float64 with masked cells set to 0."""
        out = self.fields.astype(np.float64)
        if not self.mask.all():
            out[:, ~self.mask] = 0.0
        return out

    def interval_start(self, k: int) -> datetime:
        return self.t0 + timedelta(hours=k * self.dt_hours)

    def interval_center(self, k: int) -> datetime:
        return self.t0 + timedelta(hours=(k + 0.5) * self.dt_hours)

    def center_hours_utc(self) -> np.ndarray:
        """Hour of day (UTC, fractional) at the center of each interval."""
        t0_hours = self.t0.hour + self.t0.minute / 60.0 + self.t0.second / 3600.0
        return np.mod(t0_hours + (np.arange(self.nt) + 0.5) * self.dt_hours, 24.0)

    def with_mask(self, mask: np.ndarray) -> "FieldSeries":
        """Copy restricted to ``self.mask & mask``."""
        return FieldSeries(self.spec, self.t0, self.dt_hours, self.fields, self.mask & np.asarray(mask, bool))

    def same_axis(self, other: "FieldSeries") -> bool:
        return (
            self.spec == other.spec
            and self.t0 == other.t0
            and self.dt_hours == other.dt_hours
            and self.nt == other.nt
        )

    def __eq__(self, other):
        if not isinstance(other, FieldSeries):
            return NotImplemented
        return (
            self.same_axis(other)
            and np.array_equal(self.mask, other.mask)
            and self.fields.tobytes() == other.fields.tobytes()
        )


def encode_series(series: FieldSeries) -> bytes:
    """PGRD bytes of ``series``."""
    _check_writable(series)
    spec = series.spec
    t0 = format_timestamp(series.t0).encode("utf-8")
    head = _HEAD.pack(
        MAGIC, VERSION, spec.nx, spec.ny, series.nt,
        float(spec.cell_km), float(series.dt_hours), float(spec.origin_lon), float(spec.origin_lat),
    )
    payload = series.fields.astype("<f4", copy=True)
    payload[:, ~series.mask] = SENTINEL
    return b"".join([head, _U32.pack(len(t0)), t0, series.mask.astype(np.uint8).tobytes(), payload.tobytes()])


def write_series(series: FieldSeries, path) -> None:
    """Write ``series`` as PGRD. Validation happens before the file is opened."""
    data = encode_series(series)
    with open(path, "wb") as fh:
        fh.write(data)


def _check_writable(series: FieldSeries) -> None:
    valid = series.fields[:, series.mask]
    if not np.all(np.isfinite(valid)):
        raise InvalidDataError("NaN or infinite value in a valid cell")
    if np.any(valid < 0):
        raise InvalidDataError("negative value in a valid cell")


def read_series(path) -> FieldSeries:
    data = Path(path).read_bytes()
    return decode_series(data)


def decode_series(data: bytes) -> FieldSeries:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("format error: missing PGRD magic")
    if len(data) < HEADER_SIZE + _U32.size:
        raise CorruptFileError("corrupt file: truncated header")
    magic, version, nx, ny, nt, cell_km, dt_hours, lon, lat = _HEAD.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"format error: unsupported PGRD version {version}")
    pos = HEADER_SIZE
    (t0_len,) = _U32.unpack_from(data, pos)
    pos += _U32.size
    ncell = nx * ny
    expected = pos + t0_len + ncell + 4 * ncell * nt
    if len(data) != expected:
        raise CorruptFileError(f"corrupt file: expected {expected} bytes, found {len(data)}")
    try:
        t0 = parse_timestamp(data[pos:pos + t0_len].decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"format error: bad t0 timestamp ({exc})") from None
    pos += t0_len
    try:
        spec = GridSpec(nx, ny, cell_km, lon, lat)
    except ValueError as exc:
        raise FormatError(f"format error: {exc}") from None
    mask = np.frombuffer(data, dtype=np.uint8, count=ncell, offset=pos).reshape(ny, nx) != 0
    pos += ncell
    fields = np.frombuffer(data, dtype="<f4", count=ncell * nt, offset=pos).reshape(nt, ny, nx)
    fields = fields.astype(np.float32)
    valid = fields[:, mask]
    if np.any(valid < 0) or not np.all(np.isfinite(valid)):
        raise InvalidDataError("invalid data: negative or non-finite value in a valid cell")
    return FieldSeries(spec, t0, dt_hours, fields, mask)


def block_upscale(series: FieldSeries, factor: int, min_valid_fraction: float = 0.5) -> FieldSeries:
    """Average ``factor x factor`` blocks of cells into one coarse cell.

    A coarse cell is valid when at least ``min_valid_fraction`` of its fine
    cells are valid; its value is the mean over the valid fine cells.
    Trailing rows/columns that do not fill a block are dropped with a warning.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upscale factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    if factor == 1:
        return FieldSeries(series.spec, series.t0, series.dt_hours, series.fields.copy(), series.mask.copy())
    spec = series.spec
    cny, cnx = spec.ny // factor, spec.nx // factor
    if cny == 0 or cnx == 0:
        raise ValueError(f"grid {spec.nx}x{spec.ny} is smaller than one {factor}x{factor} block")
    if cny * factor != spec.ny or cnx * factor != spec.nx:
        warnings.warn(
            f"grid {spec.nx}x{spec.ny} not divisible by {factor}; "
            f"dropping {spec.nx - cnx * factor} trailing columns and {spec.ny - cny * factor} rows",
            stacklevel=2,
        )
    ny, nx = cny * factor, cnx * factor
    mask = series.mask[:ny, :nx]
    vals = series.valid_fields()[:, :ny, :nx]
    blocks = vals.reshape(series.nt, cny, factor, cnx, factor)
    sums = blocks.sum(axis=(2, 4))
    counts = mask.reshape(cny, factor, cnx, factor).sum(axis=(1, 3))
    cmask = counts >= min_valid_fraction * factor * factor
    cmask &= counts > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        coarse = np.where(cmask, sums / np.maximum(counts, 1), SENTINEL)
    cspec = GridSpec(cnx, cny, spec.cell_km * factor, spec.origin_lon, spec.origin_lat)
    return FieldSeries(cspec, series.t0, series.dt_hours, coarse.astype(np.float32), cmask)


def series_from_csv_grids(paths, cell_km, t0, dt_hours, origin_lon=0.0, origin_lat=0.0) -> FieldSeries:
    """Build a series from one CSV grid per timestep.

    Each CSV holds ``ny`` rows of ``nx`` comma-separated values, first row
    southernmost. Empty or negative entries mark invalid cells.
    """
    grids = []
    for p in paths:
        rows = []
        for line in Path(p).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(v) if v.strip() else np.nan for v in line.split(",")])
        grids.append(np.array(rows, dtype=np.float64))
    if not grids:
        raise ValueError("no CSV grids given")
    shape = grids[0].shape
    if any(g.shape != shape for g in grids):
        raise ValueError("CSV grids differ in shape")
    stack = np.stack(grids)
    mask = np.all(np.isfinite(stack) & (stack >= 0), axis=0)
    stack = np.where(mask, stack, SENTINEL)
    spec = GridSpec(shape[1], shape[0], cell_km, origin_lon, origin_lat)
    return FieldSeries(spec, t0, dt_hours, stack.astype(np.float32), mask)
