"""Run configuration: ``key = value`` lines grouped under ``[section]`` headers.

``[run]`` holds analysis parameters. ``[obs]`` names the reference dataset
and each ``[model NAME]`` section adds a model dataset. Dataset keys:

``path``
    PGRD file.
``upscale``
    integer block-averaging factor applied on load (default 1).
``exclude``
    comma-separated event ids left out of the top-k comparison.

Example::

    [run]
    output = out
    threshold = 0.2

    [obs]
    name = radar
    path = obs.pgrd
    upscale = 3

    [model CTRL]
    path = ctrl.pgrd
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, fields, replace

from .errors import ConfigError


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    path: str
    upscale: int = 1
    exclude: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    obs: DatasetConfig | None = None
    models: tuple = ()
    output: str = "raintrack-out"
    threshold: float = 0.2
    connectivity: int = 8
    radius: int | None = None  # None: ~24 km reach for the grid's cell size
    size_coef: float | None = None
    overlap_tau: float = 0.3
    dist_max_km: float = 120.0
    area_ratio_max: float = 4.0
    bandwidth_km: float = 300.0
    decimate: int = 4
    offset_hours: float = -6.0
    day_boundary: str = "local"
    incident_bins: int = 30
    event_bins: int = 20
    totals_bins: int = 20
    profile_q: float = 0.8
    profile_bins: int = 20
    profile_center: str = "timestep"
    topk: int = 5
    null_intensity_bias: str = "event"
    min_valid_fraction: float = 0.5
    svg: bool = False

    def validate(self) -> "RunConfig":
        if self.obs is None:
            raise ConfigError("no [obs] dataset configured")
        if not self.threshold > 0:
            raise ConfigError("threshold must be positive")
        if self.connectivity not in (4, 8):
            raise ConfigError("connectivity must be 4 or 8")
        if self.radius is not None and self.radius < 0:
            raise ConfigError("radius must be >= 0")
        if self.day_boundary not in ("local", "utc"):
            raise ConfigError("day_boundary must be 'local' or 'utc'")
        if self.profile_center not in ("timestep", "lifetime"):
            raise ConfigError("profile_center must be 'timestep' or 'lifetime'")
        if self.null_intensity_bias not in ("event", "incident"):
            raise ConfigError("null_intensity_bias must be 'event' or 'incident'")
        if not 0 < self.profile_q <= 1:
            raise ConfigError("profile_q must be in (0, 1]")
        if self.bandwidth_km <= 0 or self.decimate < 1:
            raise ConfigError("bandwidth_km must be positive and decimate >= 1")
        names = [self.obs.name] + [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError(f"dataset names must be unique: {names}")
        for ds in (self.obs, *self.models):
            if ds.upscale < 1:
                raise ConfigError(f"{ds.name}: upscale must be >= 1")
        return self

    def manifest_lines(self) -> list[str]:
        """Every parameter as ``key = value``, in a fixed order."""
        lines = []
        for f in fields(self):
            if f.name in ("obs", "models"):
                continue
            lines.append(f"{f.name} = {_fmt(getattr(self, f.name))}")
        for role, ds in [("obs", self.obs)] + [("model", m) for m in self.models]:
            if ds is None:
                continue
            lines.append(
                f"{role}.{ds.name} = path={ds.path} upscale={ds.upscale} "
                f"exclude={','.join(str(e) for e in ds.exclude)}"
            )
        return lines

    @property
    def config_hash(self) -> str:
        """Digest of every parameter that can change results (the output location cannot)."""
        lines = [ln for ln in self.manifest_lines() if not ln.startswith(("output =", "svg ="))]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


_RUN_FIELDS = {f.name: f for f in fields(RunConfig) if f.name not in ("obs", "models")}


def _fmt(v):
    if v is None:
        return "auto"
    return str(v)


def _coerce(name, raw):
    raw = raw.strip()
    kind = _RUN_FIELDS[name].type
    try:
        if raw.lower() in ("auto", "none", ""):
            if "None" in kind:
                return None
            raise ConfigError(f"{name} requires a value")
        if kind.startswith("bool"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def _dataset(name, section) -> DatasetConfig:
    if "path" not in section:
        raise ConfigError(f"dataset {name!r} has no path")
    try:
        upscale = int(section.get("upscale", "1"))
        exclude = tuple(int(x) for x in section.get("exclude", "").replace(";", ",").split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"dataset {name!r}: {exc}") from None
    unknown = set(section) - {"path", "upscale", "exclude", "name"}
    if unknown:
        raise ConfigError(f"dataset {name!r}: unknown keys {sorted(unknown)}")
    return DatasetConfig(name, section["path"], upscale, exclude)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    kwargs = {}
    obs = None
    models = []
    for sect in cp.sections():
        body = dict(cp[sect])
        if sect == "run":
            for k, v in body.items():
                if k not in _RUN_FIELDS:
                    raise ConfigError(f"unknown [run] key {k!r}")
                kwargs[k] = _coerce(k, v)
        elif sect == "obs":
            obs = _dataset(body.get("name", "obs"), body)
        elif sect.startswith("model "):
            models.append(_dataset(sect[len("model "):].strip(), body))
        else:
            raise ConfigError(f"unknown section [{sect}]")
    return RunConfig(obs=obs, models=tuple(models), **kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def with_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Apply ``{field: raw string}`` overrides (e.g. from command-line flags)."""
    vals = {}
    for k, raw in overrides.items():
        if raw is None:
            continue
        if k not in _RUN_FIELDS:
            raise ConfigError(f"unknown parameter {k!r}")
        vals[k] = _coerce(k, str(raw))
    return replace(cfg, **vals)
