"""Synthetic island inputs shaped like the real pipeline's files.

Used by the CLI tests and ``scripts/make_synthetic_inputs.py``; every file
is derived from one seed.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .geom import Window, save_window
from .ingest import Projector, write_pattern_csv
from .raster import GridRaster, sample, write_ascii_grid, write_categories
from .separable import simulate_thinning

CORINE_CODES = {
    112: "Discontinuous urban fabric",
    211: "Non-irrigated arable land",
    223: "Olive groves",
    311: "Broad-leaved forest",
    323: "Sclerophyllous vegetation",
    512: "Water bodies",
}
PROJECTION = {"lon0": 14.0, "lat0": 37.5}
YEAR = 2023
NDAYS = 365


def island_window(rng) -> Window:
    th = np.linspace(0, 2 * np.pi, 48, endpoint=False)
    r = 1.0 + 0.12 * np.sin(3 * th) + 0.05 * rng.standard_normal(len(th))
    main = np.column_stack([40 + 32 * r * np.cos(th), 30 + 22 * r * np.sin(th)])
    islet = np.column_stack([88 + 3 * np.cos(th[::4]), 6 + 2 * np.sin(th[::4])])
    return Window(shells=(main, islet))


def terrain(x, y):
    """Elevation in metres: two hills on a gentle slope."""
    return (150 + 4 * x
            + 900 * np.exp(-((x - 55) ** 2 + (y - 38) ** 2) / 120)
            + 500 * np.exp(-((x - 22) ** 2 + (y - 22) ** 2) / 200))


def land_use_code(x, y, elev):
    code = np.where(elev > 600, 311, np.where(elev > 400, 323, 211))
    code = np.where((x > 30) & (x < 38) & (y > 24) & (y < 30), 112, code)
    code = np.where((x > 12) & (x < 18) & (y > 36) & (y < 40), 512, code)
    code = np.where((code == 211) & (np.sin(x / 3) > 0.6), 223, code)
    return code


def make_synthetic_inputs(directory, seed: int = 1, scale: float = 1.0) -> Path:
    """Write window, rasters, fires, climate table and ``config.json``.

    ``scale`` multiplies the expected number of fires (about 1500 at 1.0).
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    window = island_window(rng)
    save_window(window, out / "window.geojson")

    x0, y0, x1, y1 = window.bbox
    cell = 1.0
    gx0, gy0 = np.floor(x0) - 2, np.floor(y0) - 2
    ncols, nrows = int(np.ceil(x1 - gx0)) + 3, int(np.ceil(y1 - gy0)) + 3
    grid = GridRaster(np.zeros((nrows, ncols)), gx0, gy0, cell, cell)
    cx, cy = grid.cell_centers()
    elev = np.round(terrain(cx, cy), 1)
    dem = grid.with_values(elev)
    write_ascii_grid(dem, out / "dem.asc")
    codes = land_use_code(cx, cy, elev)
    lu = GridRaster(codes, gx0, gy0, cell, cell, nodata=-9999, categories=CORINE_CODES)
    write_ascii_grid(lu, out / "landuse.asc")
    write_categories(CORINE_CODES, out / "landuse.csv")

    # daily climate: a seasonal cycle plus noise, 4 cells x 4 stamps per day
    days = np.arange(NDAYS)
    season = np.sin(2 * np.pi * (days - 100) / 365)
    v10 = 1.5 * rng.standard_normal(NDAYS)
    stl2 = 290 + 9 * season + rng.standard_normal(NDAYS)
    sp = 100_800 - 300 * season + 400 * rng.standard_normal(NDAYS)
    tp = np.clip(0.004 * (1 - season) * rng.exponential(1, NDAYS), 0, None)
    rows = []
    for d in days:
        stamp = pd.Timestamp(f"{YEAR}-01-01") + pd.Timedelta(days=int(d))
        for h in (0, 6, 12, 18):
            diurnal = np.sin(np.pi * h / 24)
            for c in range(4):
                rows.append({
                    "time": (stamp + pd.Timedelta(hours=h)).isoformat(),
                    "cell": c,
                    "v10": round(v10[d] + 0.3 * diurnal + 0.1 * c, 4),
                    "stl2": round(stl2[d] + 2 * diurnal - 0.2 * c, 4),
                    "sp": round(sp[d] - 50 * diurnal + 10 * c, 2),
                    "tp": round(tp[d] * (0.5 + diurnal), 6),
                })
    pd.DataFrame(rows).to_csv(out / "climate.csv", index=False, lineterminator="\n")

    # true separable intensity; climate effect uses the daily maxima it will see
    theta = {"Artificial surfaces": 0.0, "Agricultural areas": -0.3,
             "Forest and semi-natural areas": -0.6, "Water bodies": -1.0}
    label = {c: lab for c, lab in zip((112, 211, 223, 311, 323, 512),
                                      ("Artificial surfaces", "Agricultural areas", "Agricultural areas",
                                       "Forest and semi-natural areas", "Forest and semi-natural areas",
                                       "Water bodies"))}
    lu_effect = lu.with_values(np.vectorize(lambda c: theta[label[int(c)]])(codes))
    climate_max = pd.read_csv(out / "climate.csv")
    climate_max["day"] = (pd.to_datetime(climate_max["time"]) - pd.Timestamp(f"{YEAR}-01-01")).dt.days
    cm = climate_max.groupby(["time", "day"]).mean(numeric_only=True).groupby("day").max()
    log_rate_t = (0.25 * cm["v10"].to_numpy() + 0.12 * (cm["stl2"].to_numpy() - 273.15)
                  - 0.001 * (cm["sp"].to_numpy() - 100_800) - 60 * cm["tp"].to_numpy()
                  + 0.4 * np.sin(4 * np.pi * days / 365))
    rate_t = np.exp(log_rate_t)

    def spatial(x, y):
        return np.exp(-9.3 + sample(lu_effect, x, y) + 1.2 * sample(dem, x, y) / 1000.0)

    xs, ys = grid.cell_centers()
    smax = float(np.nanmax(spatial(xs.ravel(), ys.ravel()))) * 1.05

    def intensity(x, y, t):
        return scale * spatial(x, y) * rate_t[np.minimum(np.floor(t).astype(int), NDAYS - 1)]

    pat = simulate_thinning(intensity, window, (0.0, float(NDAYS)), scale * smax * rate_t.max(), rng)
    projector = Projector.from_dict(PROJECTION)
    write_pattern_csv(pat, out / "fires.csv", projector, YEAR)

    config = {
        "fires": "fires.csv",
        "window": "window.geojson",
        "year": YEAR,
        "projection": PROJECTION,
        "dem": "dem.asc",
        "dem_unit": "m",
        "covariates": [
            {"name": "land_use", "path": "landuse.asc", "kind": "categorical",
             "categories": "landuse.csv", "baseline": "Artificial surfaces"},
            {"name": "elevation", "path": "dem.asc", "scale": 0.001},
            {"name": "slope", "path": "dem.asc", "kind": "slope", "dem_unit": "m"},
        ],
        "climate": "climate.csv",
        "temporal_covariates": ["v10", "stl2", "sp", "tp"],
        "dummy_grid": [64, 64],
        "seed": seed,
        "output_dir": "out",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return out
