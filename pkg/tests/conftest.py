from datetime import datetime, timezone

import numpy as np
import pytest

from raintrack.gridio import FieldSeries, GridSpec

T0 = datetime(2005, 6, 1, tzinfo=timezone.utc)


def make_series(fields, cell_km=12.0, dt_hours=6.0, mask=None, t0=T0):
    """FieldSeries from an (nt, ny, nx) or (ny, nx) array."""
    arr = np.asarray(fields, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    spec = GridSpec(arr.shape[2], arr.shape[1], cell_km)
    return FieldSeries(spec, t0, dt_hours, arr, mask)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def synth_pair(directory, scale=1.5, dilation=0, seed=3, n_storms=4, nx=80, ny=70, nt=16,
               peak_range=(5.0, 20.0), max_lifetime=12):
    """Write a random synthetic obs file and a perturbed model file; returns both paths.

    With ``peak_range`` above ``1.5 * (max_lifetime + 1)`` mm/h every rendered
    cell, down to the 3-sigma edge of the weakest interval, exceeds 0.2 mm, so
    scaling up never changes the wet support.
    """
    from pathlib import Path

    from raintrack.gridio import write_series
    from raintrack.synth import generate, perturb, random_scene

    directory = Path(directory)
    grid = GridSpec(nx, ny, 12.0)
    specs = random_scene(np.random.default_rng(seed), grid, nt, n_storms, min_gap_km=150.0,
                         peak_range=peak_range, max_lifetime=max_lifetime)
    obs, _ = generate(specs, grid, nt, seed)
    model = perturb(obs, scale, dilation)
    paths = directory / "obs.pgrd", directory / "model.pgrd"
    write_series(obs, paths[0])
    write_series(model, paths[1])
    return paths


def write_config(directory, obs, models, **run):
    """Write a run config with ``[run]`` keys from ``run``; returns its path."""
    from pathlib import Path

    lines = ["[run]"] + [f"{k} = {v}" for k, v in run.items()]
    lines += ["", "[obs]", f"path = {obs}"]
    for name, path in models.items():
        lines += ["", f"[model {name}]", f"path = {path}"]
    p = Path(directory) / "run.cfg"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p
