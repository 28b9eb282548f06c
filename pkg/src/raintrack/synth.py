"""Synthetic storm fields with known ground truth, and planted-bias perturbations.

Each storm is an advecting Gaussian blob, truncated at 3 sigma, whose peak
intensity follows a triangular envelope over its lifetime. The truth catalog
is filled from the same rendering pass that builds the field.

Storm spec files are plain text, one ``key = value`` block per storm,
blocks separated by blank lines or ``[storm]`` headers::

    [storm]
    birth = 3
    lifetime = 6
    x_km = 600
    y_km = 800
    u_kmh = 5
    v_kmh = 0
    peak_mm_hr = 8
    sigma_km = 36
    diurnal_amp = 0.0
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields as dc_fields
from datetime import datetime, timezone

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import SpecError
from .gridio import FieldSeries, GridSpec
from .timing import DEFAULT_OFFSET_HOURS, DiurnalBins

TRUNCATE_SIGMA = 3.0
DEFAULT_T0 = datetime(2005, 6, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class SynthStormSpec:
    birth: int
    lifetime: int
    x_km: float
    y_km: float
    u_kmh: float = 0.0
    v_kmh: float = 0.0
    peak_mm_hr: float = 5.0
    sigma_km: float = 36.0
    diurnal_amp: float = 0.0

    def __post_init__(self):
        if self.lifetime < 1:
            raise SpecError("lifetime must be >= 1")
        if self.birth < 0:
            raise SpecError("birth must be >= 0")
        if not self.sigma_km > 0:
            raise SpecError("sigma_km must be positive")
        if self.peak_mm_hr < 0:
            raise SpecError("peak_mm_hr must be >= 0")
        if not 0 <= self.diurnal_amp < 1:
            raise SpecError("diurnal_amp must be in [0, 1)")

    def envelope(self, j: int) -> float:
        """Triangular growth/decay factor at life step ``j`` (peak 1, always > 0)."""
        L = self.lifetime
        return 1.0 - abs(2 * j - (L - 1)) / (L + 1)

    def position(self, j: int, dt_hours: float) -> tuple[float, float]:
        return self.x_km + self.u_kmh * j * dt_hours, self.y_km + self.v_kmh * j * dt_hours


@dataclass(frozen=True)
class TruthStep:
    t: int
    area_km2: float  # cells above the threshold
    total_mm: float  # all rendered cells
    x_km: float
    y_km: float


@dataclass(frozen=True)
class TruthStorm:
    spec: SynthStormSpec
    steps: tuple

    @property
    def t_first(self) -> int:
        return self.steps[0].t

    @property
    def t_last(self) -> int:
        return self.steps[-1].t

    def amount_km3(self, cell_area_km2: float) -> float:
        return math.fsum(s.total_mm for s in self.steps) * cell_area_km2 * 1e-6


@dataclass(frozen=True)
class TruthCatalog:
    storms: tuple
    threshold: float

    def __len__(self):
        return len(self.storms)


def _sigma_at(spec, k, t0_hour, dt_hours, offset_hours):
    if spec.diurnal_amp == 0:
        return spec.sigma_km
    local = (t0_hour + (k + 0.5) * dt_hours + offset_hours) % 24.0
    return spec.sigma_km * (1.0 + spec.diurnal_amp * math.cos(2 * math.pi * (local - 15.0) / 24.0))


def generate(specs, grid: GridSpec, nt: int, seed: int = 0, *, dt_hours: float = 6.0,
             t0: datetime = DEFAULT_T0, threshold: float = 0.2, jitter: float = 0.0,
             offset_hours: float = DEFAULT_OFFSET_HOURS):
    """Render storms onto ``grid`` for ``nt`` intervals; returns ``(FieldSeries, TruthCatalog)``.

    ``jitter`` is the relative standard deviation of a random per-interval
    multiplier on each storm's peak; the seed only drives that jitter.
    """
    rng = np.random.default_rng(seed)
    acc = np.zeros((nt, grid.ny, grid.nx), dtype=np.float64)
    t0_hour = t0.hour + t0.minute / 60.0
    xs = (np.arange(grid.nx) + 0.5) * grid.cell_km
    ys = (np.arange(grid.ny) + 0.5) * grid.cell_km
    truth = []
    for spec in specs:
        if spec.birth + spec.lifetime > nt:
            raise SpecError(f"storm {spec} outlives the series ({nt} intervals)")
        steps = []
        for j in range(spec.lifetime):
            k = spec.birth + j
            cx, cy = spec.position(j, dt_hours)
            sigma = _sigma_at(spec, k, t0_hour, dt_hours, offset_hours)
            reach = TRUNCATE_SIGMA * sigma
            if cx - reach < 0 or cy - reach < 0 or cx + reach > grid.nx * grid.cell_km or cy + reach > grid.ny * grid.cell_km:
                raise SpecError(f"storm footprint at interval {k} leaves the grid: {spec}")
            peak = spec.peak_mm_hr * spec.envelope(j)
            if jitter:
                peak *= max(0.1, 1.0 + jitter * rng.standard_normal())
            c0 = max(0, int(math.floor((cx - reach) / grid.cell_km)))
            c1 = min(grid.nx, int(math.ceil((cx + reach) / grid.cell_km)) + 1)
            r0 = max(0, int(math.floor((cy - reach) / grid.cell_km)))
            r1 = min(grid.ny, int(math.ceil((cy + reach) / grid.cell_km)) + 1)
            dx = xs[c0:c1][None, :] - cx
            dy = ys[r0:r1][:, None] - cy
            r2 = dx * dx + dy * dy
            blob = peak * dt_hours * np.exp(-r2 / (2.0 * sigma * sigma))
            blob[r2 > reach * reach] = 0.0
            blob = blob.astype(np.float32).astype(np.float64)
            acc[k, r0:r1, c0:c1] += blob
            total = math.fsum(blob.ravel())
            if total > 0:
                bx = float(np.average(np.broadcast_to(dx + cx, blob.shape), weights=blob))
                by = float(np.average(np.broadcast_to(dy + cy, blob.shape), weights=blob))
            else:
                bx, by = cx, cy
            area = int((blob > threshold).sum()) * grid.cell_area_km2
            steps.append(TruthStep(k, area, total, bx, by))
        truth.append(TruthStorm(spec, tuple(steps)))
    series = FieldSeries(grid, t0, dt_hours, acc.astype(np.float32))
    return series, TruthCatalog(tuple(truth), threshold)


def footprint_box(spec: SynthStormSpec, dt_hours: float = 6.0) -> tuple[float, float, float, float]:
    """Bounding box ``(xmin, xmax, ymin, ymax)`` swept by the 3-sigma disc over the lifetime."""
    reach = TRUNCATE_SIGMA * spec.sigma_km * (1.0 + spec.diurnal_amp)
    x0, y0 = spec.position(0, dt_hours)
    x1, y1 = spec.position(spec.lifetime - 1, dt_hours)
    return min(x0, x1) - reach, max(x0, x1) + reach, min(y0, y1) - reach, max(y0, y1) + reach


def _box_gap(a, b):
    gx = max(a[0] - b[1], b[0] - a[1], 0.0)
    gy = max(a[2] - b[3], b[2] - a[3], 0.0)
    return math.hypot(gx, gy)


def random_scene(rng, grid: GridSpec, nt: int, n_storms: int, *, min_gap_km: float = 250.0,
                 peak_range=(5.0, 20.0), sigma_cells=(2.0, 4.0), max_lifetime: int = 12,
                 dt_hours: float = 6.0, max_tries: int = 2000) -> list[SynthStormSpec]:
    """Up to ``n_storms`` storm specs whose swept footprints stay ``min_gap_km`` apart.

    Advection is limited to one sigma per interval so a storm overlaps itself
    between consecutive intervals.
    """
    specs = []
    boxes = []
    tries = 0
    while len(specs) < n_storms and tries < max_tries:
        tries += 1
        sigma = float(rng.uniform(*sigma_cells)) * grid.cell_km
        lifetime = int(rng.integers(1, max_lifetime + 1))
        lifetime = min(lifetime, nt)
        birth = int(rng.integers(0, nt - lifetime + 1))
        speed = float(rng.uniform(0.0, sigma / dt_hours))
        ang = float(rng.uniform(0.0, 2 * math.pi))
        u, v = speed * math.cos(ang), speed * math.sin(ang)
        reach = TRUNCATE_SIGMA * sigma
        span_x = abs(u) * dt_hours * (lifetime - 1)
        span_y = abs(v) * dt_hours * (lifetime - 1)
        lo_x = reach + (span_x if u < 0 else 0.0)
        hi_x = grid.nx * grid.cell_km - reach - (span_x if u > 0 else 0.0)
        lo_y = reach + (span_y if v < 0 else 0.0)
        hi_y = grid.ny * grid.cell_km - reach - (span_y if v > 0 else 0.0)
        if hi_x <= lo_x or hi_y <= lo_y:
            continue
        spec = SynthStormSpec(
            birth, lifetime, float(rng.uniform(lo_x, hi_x)), float(rng.uniform(lo_y, hi_y)),
            u, v, float(rng.uniform(*peak_range)), sigma,
        )
        box = footprint_box(spec, dt_hours)
        if all(_box_gap(box, b) > min_gap_km for b in boxes):
            specs.append(spec)
            boxes.append(box)
    return specs


def perturb(obs: FieldSeries, intensity_scale: float = 1.0, dilation_cells: int = 0,
            additive_diurnal=None, *, threshold: float = 0.2,
            offset_hours: float = DEFAULT_OFFSET_HOURS) -> FieldSeries:
    """Plant known biases into an observed series to make a synthetic "model".

    Values are scaled by ``intensity_scale``; the wet support is then dilated
    by ``dilation_cells`` with new cells taking the minimum wet value in their
    neighborhood; finally ``additive_diurnal[j]`` (mm) is added to wet cells
    in time-of-day bin ``j``. Negative results are clipped to 0 with a warning.
    """
    if intensity_scale < 0:
        raise ValueError("intensity_scale must be >= 0")
    if dilation_cells < 0:
        raise ValueError("dilation_cells must be >= 0")
    mask = obs.mask
    f = obs.valid_fields() * intensity_scale
    if dilation_cells:
        size = 2 * dilation_cells + 1
        for t in range(obs.nt):
            wet = (f[t] > threshold) & mask
            if not wet.any():
                continue
            grown = kernels.dilate_square(wet, dilation_cells) & mask & ~wet
            fill = ndimage.minimum_filter(np.where(wet, f[t], np.inf), size=size, mode="constant", cval=np.inf)
            f[t][grown] = fill[grown]
    if additive_diurnal is not None:
        bins = DiurnalBins.for_series(obs, offset_hours)
        offsets = np.asarray(additive_diurnal, dtype=np.float64)
        if offsets.shape != (bins.n_bins,):
            raise ValueError(f"need {bins.n_bins} diurnal offsets, got {offsets.shape}")
        which = bins.assign(obs.nt)
        for t in range(obs.nt):
            wet = (f[t] > threshold) & mask
            f[t][wet] += offsets[which[t]]
    neg = (f < 0) & mask
    n_neg = int(neg.sum())
    if n_neg:
        warnings.warn(f"perturb clipped {n_neg} negative values to 0", stacklevel=2)
        f[neg] = 0.0
    return FieldSeries(obs.spec, obs.t0, obs.dt_hours, f.astype(np.float32), mask.copy())


_SPEC_FIELDS = {f.name: f.type for f in dc_fields(SynthStormSpec)}


def parse_spec_file(text: str) -> list[SynthStormSpec]:
    """Parse storm spec blocks (see module docstring)."""
    blocks = []
    cur = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.lower() == "[storm]":
            if cur:
                blocks.append(cur)
                cur = {}
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _SPEC_FIELDS:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
        try:
            cur[key] = int(val) if key in ("birth", "lifetime") else float(val)
        except ValueError:
            raise SpecError(f"line {lineno}: bad number for {key}: {val!r}") from None
    if cur:
        blocks.append(cur)
    try:
        return [SynthStormSpec(**b) for b in blocks]
    except TypeError as exc:
        raise SpecError(str(exc)) from None


def format_spec_file(specs) -> str:
    out = []
    for s in specs:
        out.append("[storm]")
        for name in _SPEC_FIELDS:
            out.append(f"{name} = {getattr(s, name)!r}")
        out.append("")
    return "\n".join(out)
