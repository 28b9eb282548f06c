"""Event-based diagnostics for gridded precipitation time series.

Rain areas are thresholded, grouped into almost-connected clusters, tracked
through time into storm events and summarized by amount, intensity, size and
duration. Model datasets are compared with a reference dataset through an
exact factor decomposition, bias maps, distributions and diurnal statistics.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ConsistencyError,
    CorruptFileError,
    FormatError,
    InvalidDataError,
    RaintrackError,
    SpecError,
    UndefinedRatioError,
)
from .gridio import FieldSeries, GridSpec, block_upscale, read_series, write_series  # noqa: E402
from .ident import accc_cluster, identify, identify_series, label_components, threshold_wet  # noqa: E402
from .metrics import StormMetrics, compute_metrics, radial_profile  # noqa: E402
from .track import StormEvent, TrackParams, track_frames  # noqa: E402
from .diagnostics import bias_ratios, bias_table, decompose  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError", "ConsistencyError", "CorruptFileError", "FormatError", "InvalidDataError",
    "RaintrackError", "SpecError", "UndefinedRatioError",
    "FieldSeries", "GridSpec", "block_upscale", "read_series", "write_series",
    "accc_cluster", "identify", "identify_series", "label_components", "threshold_wet",
    "StormMetrics", "compute_metrics", "radial_profile",
    "StormEvent", "TrackParams", "track_frames",
    "bias_ratios", "bias_table", "decompose",
]
