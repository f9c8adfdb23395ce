"""Monte Carlo size and power of the slope-homogeneity test on linear-trend panels.

    python scripts/size_power.py --reps 500 --N 200 --T 500
"""

import argparse

import numpy as np

from poolbench.homogeneity import slope_homogeneity


def rejection_rate(reps, N, T, slope_sd, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(1, T + 1)
    hits = 0
    for _ in range(reps):
        slopes = 0.01 + slope_sd * rng.normal(size=(N, 1))
        Y = rng.normal(0, 2, size=(N, 1)) + slopes * t + rng.normal(size=(N, T))
        hits += slope_homogeneity(Y).reject_at_5pct
    return hits / reps


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--slope-sd", type=float, nargs="+", default=[0.0, 0.0005, 0.001, 0.002])
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    for i, sd in enumerate(a.slope_sd):
        print(f"slope sd {sd:<8g} rejection rate {rejection_rate(a.reps, a.N, a.T, sd, a.seed + i):.3f}")


if __name__ == "__main__":
    main()
