"""Write a synthetic island dataset (window, rasters, fires, climate, config.json).

    python3 scripts/make_synthetic_inputs.py demo --seed 1 --scale 1.0
    stfire fit-spatial --config demo/config.json
"""
import argparse

from stfire.synthetic import make_synthetic_inputs


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("directory")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on the expected fire count")
    args = p.parse_args()
    out = make_synthetic_inputs(args.directory, seed=args.seed, scale=args.scale)
    print(out / "config.json")


if __name__ == "__main__":
    main()
