"""Smoothed-residual size against event density for refits of simulated data.

A model is fitted once to a pattern on a star-shaped island; patterns are
then simulated from that fit, refitted, and the mean |s(u)| of each refit's
smoothed residual field is reported relative to its mean fitted intensity.
Pure Poisson noise makes the ratio shrink roughly like one over the square
root of the expected count per kernel footprint.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from stfire.geom import Window
from stfire.raster import GridRaster, sample
from stfire.separable import simulate_thinning
from stfire.spatial_model import fit_spatial, predict_intensity, smoothed_residuals

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import star_polygon  # noqa: E402


def run(expected, base, replicates):
    rng = np.random.default_rng(base)
    window = Window(shells=(star_polygon(rng, 30, r0=20.0),))
    grid = GridRaster(np.zeros((50, 50)), -20, -20, 0.8, 0.8)
    cx, cy = grid.cell_centers()
    elev = grid.with_values(0.5 + 0.4 * np.sin(cx / 6) * np.cos(cy / 7))
    lu = GridRaster(np.where(cx + 0.5 * cy > 0, 1.0, 2.0), -20, -20, 0.8, 0.8,
                    categories={1: "Artificial surfaces", 2: "Agricultural areas"})
    covs = {"land_use": lu, "elevation": elev}
    level = expected / window.area / 1.6

    def truth(x, y, t):
        return level * np.exp(sample(elev, x, y) - 0.3 * (sample(lu, x, y) == 2) + 0.02 * x)

    pat = simulate_thinning(truth, window, (0, 1), level * np.exp(1.5), rng)
    fitted = fit_spatial(pat, covs, knots=30)
    bound = 1.1 * float(np.nanmax(predict_intensity(fitted, (256, 256)).values))
    ratios, bws = [], []
    for r in range(replicates):
        sim = simulate_thinning(lambda x, y, t: fitted.intensity(x, y), window, (0, 1), bound,
                                np.random.default_rng(100 + r + 1000 * base))
        m = fit_spatial(sim, covs, knots=30)
        field = smoothed_residuals(m)
        ratios.append(field.mean_abs() / float(np.nanmean(predict_intensity(m).values)))
        bws.append(field.bandwidth)
    return window.area, np.array(ratios), np.array(bws)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--expected", type=float, nargs="+", default=[1500, 3000, 6000])
    p.add_argument("--bases", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--replicates", type=int, default=20)
    args = p.parse_args()
    print("E[n]  base  area  under_10%  median_ratio  max_ratio  median_bandwidth")
    for expected in args.expected:
        for base in args.bases:
            area, ratios, bws = run(expected, base, args.replicates)
            print(f"{expected:5.0f}  {base:4d}  {area:4.0f}  {int((ratios < 0.1).sum()):3d}/{len(ratios)}"
                  f"  {np.median(ratios):12.3f}  {ratios.max():9.3f}  {np.median(bws):8.2f}", flush=True)


if __name__ == "__main__":
    main()
