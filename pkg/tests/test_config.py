import pytest

from raintrack.config import DatasetConfig, RunConfig, parse_config, with_overrides
from raintrack.errors import ConfigError

BASIC = """
[run]
output = out
threshold = 0.5   # mm
radius = auto
svg = yes

[obs]
name = radar
path = obs.pgrd
upscale = 3
exclude = 4, 7

[model CTRL]
path = ctrl.pgrd
"""


def test_parse_basic():
    cfg = parse_config(BASIC)
    assert cfg.threshold == 0.5 and cfg.radius is None and cfg.svg is True
    assert cfg.obs == DatasetConfig("radar", "obs.pgrd", 3, (4, 7))
    assert cfg.models == (DatasetConfig("CTRL", "ctrl.pgrd"),)
    cfg.validate()


@pytest.mark.parametrize("text", [
    "[run]\nthreshold = wet\n",
    "[run]\ncolour = red\n",
    "[weird]\nx = 1\n",
    "[obs]\nupscale = 2\n",
    "[obs]\npath = a\nupscale = two\n",
    "[obs]\npath = a\nfoo = 1\n",
    "no section header\n",
    "[run]\nthreshold = auto\n",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("kw", [
    dict(threshold=0.0), dict(connectivity=6), dict(radius=-1), dict(day_boundary="x"),
    dict(profile_center="x"), dict(null_intensity_bias="x"), dict(profile_q=0.0), dict(decimate=0),
])
def test_validate_errors(kw):
    with pytest.raises(ConfigError):
        RunConfig(obs=DatasetConfig("o", "o.pgrd"), **kw).validate()


def test_validate_requires_obs_and_unique_names():
    with pytest.raises(ConfigError):
        RunConfig().validate()
    with pytest.raises(ConfigError):
        RunConfig(obs=DatasetConfig("a", "x"), models=(DatasetConfig("a", "y"),)).validate()
    with pytest.raises(ConfigError):
        RunConfig(obs=DatasetConfig("a", "x", upscale=0)).validate()


def test_manifest_echoes_every_parameter():
    cfg = parse_config(BASIC)
    keys = [ln.split(" = ", 1)[0] for ln in cfg.manifest_lines()]
    for name in ("threshold", "connectivity", "radius", "overlap_tau", "dist_max_km", "bandwidth_km",
                 "offset_hours", "incident_bins", "output"):
        assert name in keys
    assert "obs.radar" in keys and "model.CTRL" in keys


def test_hash_ignores_output_location_only():
    cfg = parse_config(BASIC)
    assert with_overrides(cfg, {"output": "elsewhere"}).config_hash == cfg.config_hash
    assert with_overrides(cfg, {"threshold": "0.3"}).config_hash != cfg.config_hash


def test_overrides():
    cfg = with_overrides(parse_config(BASIC), {"radius": "3", "size_coef": None, "connectivity": "4"})
    assert cfg.radius == 3 and cfg.connectivity == 4 and cfg.size_coef is None
    with pytest.raises(ConfigError):
        with_overrides(cfg, {"nope": "1"})
    with pytest.raises(ConfigError):
        with_overrides(cfg, {"svg": "maybe"})
