"""Taylor remainders for Examples 1 and 3 across mesh sizes and seeds.

    python3 scripts/taylor_convergence.py [--sizes 8 16 32] [--seeds 42 7]
"""

import argparse

import numpy as np

from shapediff import unit_square_mesh
from shapediff.examples import example1, example3
from shapediff.shapeopt import taylor_test


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--seeds", type=int, nargs="+", default=[42, 7, 123])
    args = ap.parse_args()
    steps = 2.0 ** -np.arange(5, 11)
    print(f"{'example':>8} {'n':>4} {'seed':>5} {'slope1':>8} {'slope2':>8}  dropped")
    for build in (example1, example3):
        for n in args.sizes:
            for seed in args.seeds:
                mesh = unit_square_mesh(n)
                r = taylor_test(build(mesh).functional, mesh, seed=seed, steps=steps)
                print(f"{build.__name__[-1]:>8} {n:>4} {seed:>5} {r.slope1:8.4f} {r.slope2:8.4f}  {r.dropped}")


if __name__ == "__main__":
    main()
