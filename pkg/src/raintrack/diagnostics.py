"""Factor decomposition of precipitation bias, and the tables and maps built on it.

Total precipitation of a storm catalog factors exactly as

    total = mean intensity * size factor * duration factor * number of storms

with the factors chained so each weights by the previous ones::

    I_bar = sum(I) / N
    S_hat = sum(I*S) / sum(I)
    D_hat = sum(I*S*D) / sum(I*S)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, UndefinedRatioError

FACTOR_ORDER = ("intensity", "size", "duration", "number")
ROWS = ("amount", "intensity", "size", "duration", "number")
ROW_LABELS = {
    "amount": "Amount",
    "intensity": "Intensity",
    "size": "Size",
    "duration": "Duration",
    "number": "Num. of storms",
}

# Reference percent anomalies of four model configurations against an
# observational catalog; used for arithmetic cross-checks with compose_factors.
REFERENCE_ANOMALIES = {
    "CTRL": {"amount": 58, "intensity": -13, "size": 150, "duration": -9, "number": -19},
    "KF": {"amount": 68, "intensity": -21, "size": 220, "duration": -4.6, "number": -42},
    "Morrison": {"amount": 30, "intensity": -21, "size": 79, "duration": -6.6, "number": -1.9},
    "4 km": {"amount": 29, "intensity": 20, "size": 33, "duration": -0.01, "number": -20},
}


@dataclass(frozen=True)
class BiasDecomposition:
    total_amount_km3: float
    intensity: float
    size: float
    duration: float
    number: float

    def as_dict(self) -> dict:
        return {
            "amount": self.total_amount_km3,
            "intensity": self.intensity,
            "size": self.size,
            "duration": self.duration,
            "number": self.number,
        }


@dataclass(frozen=True)
class BiasTable:
    """Percent anomalies of a model decomposition relative to a reference."""

    amount: float
    intensity: float
    size: float
    duration: float
    number: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ROWS}


def decompose(storms) -> BiasDecomposition:
    """Four-factor decomposition of a storm catalog (sequence of StormMetrics)."""
    storms = list(storms)
    if not storms:
        raise ValueError("cannot decompose an empty storm catalog")
    i = [s.mean_intensity_mm_per_hr for s in storms]
    s_ = [s.mean_size_km2 for s in storms]
    d = [s.duration_hr for s in storms]
    return decompose_arrays(i, s_, d)


def decompose_arrays(intensity, size, duration) -> BiasDecomposition:
    i = np.asarray(intensity, dtype=np.float64)
    s = np.asarray(size, dtype=np.float64)
    d = np.asarray(duration, dtype=np.float64)
    n = i.size
    if n == 0:
        raise ValueError("cannot decompose an empty storm catalog")
    si = math.fsum(i)
    sis = math.fsum(i * s)
    sisd = math.fsum(i * s * d)
    if si == 0 or sis == 0:
        raise ValueError("catalog has zero total intensity or size")
    return BiasDecomposition(sisd * 1e-6, si / n, sis / si, sisd / sis, float(n))


def bias_ratios(model: BiasDecomposition, obs: BiasDecomposition) -> dict:
    """``model / obs`` for the amount and every factor.

    Ratios keep full relative precision; the percent form loses digits when
    a ratio is far below one.
    """
    m, o = model.as_dict(), obs.as_dict()
    ratio = {}
    for key in ROWS:
        if o[key] == 0:
            raise UndefinedRatioError(f"reference {key} factor is zero")
        ratio[key] = m[key] / o[key]
    return ratio


def bias_table(model: BiasDecomposition, obs: BiasDecomposition, rtol: float = 1e-9) -> BiasTable:
    """Percent anomaly ``100 * (model / obs - 1)`` of every factor and the amount."""
    ratio = bias_ratios(model, obs)
    out = {k: 100.0 * (r - 1.0) for k, r in ratio.items()}
    composed = math.prod(ratio[k] for k in FACTOR_ORDER)
    if not math.isclose(composed, ratio["amount"], rel_tol=rtol):
        raise ConsistencyError(
            f"factor biases compose to {100 * (composed - 1):.6g}% but amount bias is {out['amount']:.6g}%"
        )
    return BiasTable(**out)


def compose_factors(intensity: float, size: float, duration: float, number: float) -> float:
    """Amount bias (%) implied by four factor biases (%)."""
    return 100.0 * (math.prod(1 + b / 100.0 for b in (intensity, size, duration, number)) - 1.0)


@dataclass
class MetricMap:
    """Gridded metric (or bias) values; ``defined`` is False where undefined."""

    values: np.ndarray
    defined: np.ndarray
    metric: str
    bandwidth_km: float | None = None
    x_km: np.ndarray | None = None
    y_km: np.ndarray | None = None
    weight: np.ndarray | None = None


def eval_grid(spec, decimate: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Cell-center coordinates (km) of every ``decimate``-th cell in each direction."""
    x = (np.arange(0, spec.nx, decimate) + 0.5) * spec.cell_km
    y = (np.arange(0, spec.ny, decimate) + 0.5) * spec.cell_km
    return x, y


def kernel_smooth(storms, metric: str, bandwidth_km: float = 300.0, grid=None,
                  min_weight: float = 1e-12, chunk: int = 4096) -> MetricMap:
    """Gaussian-kernel spatial average of a storm metric.

    ``grid`` is a pair of 1-D coordinate arrays ``(x_km, y_km)``. For
    ``size`` and ``duration`` the map is the weighted mean of the storm
    values; for ``number`` it is the summed kernel weight (an unnormalized
    storm density). Points whose total weight is below ``min_weight`` are
    undefined.
    """
    if not bandwidth_km > 0:
        raise ValueError("bandwidth must be positive")
    if metric not in ("size", "duration", "number"):
        raise ValueError(f"unknown metric {metric!r}")
    if grid is None:
        raise ValueError("an evaluation grid (x_km, y_km) is required")
    gx, gy = (np.asarray(g, dtype=np.float64) for g in grid)
    X, Y = np.meshgrid(gx, gy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    storms = list(storms)
    if not storms:
        nanmap = np.full(X.shape, np.nan)
        return MetricMap(nanmap, np.zeros(X.shape, bool), metric, bandwidth_km, gx, gy, np.zeros(X.shape))
    loc = np.array([s.location_km for s in storms])
    if metric == "size":
        m = np.array([s.mean_size_km2 for s in storms])
    elif metric == "duration":
        m = np.array([s.duration_hr for s in storms])
    else:
        m = np.ones(len(storms))
    wsum = np.empty(len(pts))
    msum = np.empty(len(pts))
    inv = 1.0 / (2.0 * bandwidth_km ** 2)
    for lo in range(0, len(pts), chunk):
        p = pts[lo:lo + chunk]
        d2 = (p[:, None, 0] - loc[None, :, 0]) ** 2 + (p[:, None, 1] - loc[None, :, 1]) ** 2
        w = np.exp(-d2 * inv)
        wsum[lo:lo + chunk] = w.sum(axis=1)
        msum[lo:lo + chunk] = w @ m
    wsum = wsum.reshape(X.shape)
    msum = msum.reshape(X.shape)
    defined = wsum > min_weight
    if metric == "number":
        vals = wsum.copy()
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = msum / wsum
    vals[~defined] = np.nan
    return MetricMap(vals, defined, metric, bandwidth_km, gx, gy, wsum)


def bias_map(model: MetricMap, obs: MetricMap) -> MetricMap:
    """Pointwise percent bias ``100 * (model / obs - 1)``."""
    if model.values.shape != obs.values.shape:
        raise ValueError("maps differ in shape")
    defined = model.defined & obs.defined & (obs.values != 0)
    vals = np.full(model.values.shape, np.nan)
    vals[defined] = 100.0 * (model.values[defined] / obs.values[defined] - 1.0)
    return MetricMap(vals, defined, f"{model.metric}_bias", model.bandwidth_km, model.x_km, model.y_km)


def pixel_amount(series) -> MetricMap:
    """Per-cell accumulated precipitation (mm) over the whole series."""
    vals = series.valid_fields().sum(axis=0)
    vals[~series.mask] = np.nan
    x, y = eval_grid(series.spec, 1)
    return MetricMap(vals, series.mask.copy(), "amount", None, x, y)


def pixel_intensity(series, threshold: float = 0.2) -> MetricMap:
    """Per-cell mean accumulation (mm per interval) over above-threshold intervals."""
    f = series.valid_fields()
    wet = (f > threshold) & series.mask
    n = wet.sum(axis=0)
    tot = np.where(wet, f, 0.0).sum(axis=0)
    defined = (n > 0) & series.mask
    vals = np.full(series.shape, np.nan)
    vals[defined] = tot[defined] / n[defined]
    x, y = eval_grid(series.spec, 1)
    return MetricMap(vals, defined, "intensity", None, x, y, n)


def pixel_bias_map(model, obs, kind: str = "amount", threshold: float = 0.2) -> MetricMap:
    """Per-cell percent bias of accumulated amount or of mean wet intensity.

    Cells without any above-threshold observed interval are undefined.
    """
    if not model.same_axis(obs):
        raise ValueError("model and obs series differ in grid or time axis")
    obs_wet = ((obs.valid_fields() > threshold) & obs.mask).any(axis=0)
    if kind == "amount":
        m, o = pixel_amount(model), pixel_amount(obs)
    elif kind == "intensity":
        m, o = pixel_intensity(model, threshold), pixel_intensity(obs, threshold)
    else:
        raise ValueError(f"kind must be 'amount' or 'intensity', got {kind!r}")
    out = bias_map(m, o)
    out.defined &= obs_wet
    out.values[~out.defined] = np.nan
    out.metric = f"pixel_{kind}_bias"
    return out
