"""Coverage benchmark over the reference DGPs and the heterogeneous demand panel.

Trains global and station models (optionally cluster models too) with the
default booster and writes one row per (dataset, scheme) to a CSV file.

    python scripts/run_benchmark.py --out bench.csv
    python scripts/run_benchmark.py --stations 10 --hours 1000 --datasets sarima ar_t
"""

import argparse
import time

import pandas as pd

from poolbench.cluster import cluster_stations
from poolbench.dgp import heterogeneous_demand_panel, reference_specs, simulate_panel
from poolbench.features import panel_features
from poolbench.harness import boundary_hour, run_cluster, run_global, run_station
from poolbench.qboost import TrainParams


def make_panel(name, n_stations, hours, seed):
    if name == "heterogeneous":
        return heterogeneous_demand_panel(n_stations, hours, seed=seed)
    return simulate_panel(reference_specs()[name], [(f"s{i:02d}", 1.0) for i in range(n_stations)], hours, seed=seed)


def main():
    names = [*reference_specs(), "heterogeneous"]
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--datasets", nargs="+", default=names, choices=names)
    p.add_argument("--stations", type=int, default=50)
    p.add_argument("--hours", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-cluster", action="store_true")
    p.add_argument("--out", default="benchmark.csv")
    a = p.parse_args()

    params = TrainParams()
    rows = []
    for name in a.datasets:
        panel = make_panel(name, a.stations, a.hours, a.seed)
        runs = {"global": lambda: run_global(panel, params, dgp=name), "station": lambda: run_station(panel, params, dgp=name)}
        if a.with_cluster:
            # cluster on training-period features only
            feats = panel_features(panel.hour_slice(0, boundary_hour(panel, panel.n_hours // 2)))
            assign = cluster_stations(feats, seed=a.seed)
            runs["cluster"] = lambda: run_cluster(panel, params, assign, dgp=name)
        for scheme, fn in runs.items():
            t0 = time.perf_counter()
            res = fn()
            mean = res.summary().loc["mean"]
            rows.append({"dataset": name, "scheme": scheme, "scopes": len(res.reports), "seconds": round(time.perf_counter() - t0, 1),
                         **{k: mean[k] for k in ("picp", "pinaw", "mse_median", "crossing_rate")}})
            print(f"{name:14s} {scheme:8s} picp {mean['picp']:.4f} pinaw {mean['pinaw']:.4f} ({rows[-1]['seconds']}s)", flush=True)
    pd.DataFrame(rows).to_csv(a.out, index=False)


if __name__ == "__main__":
    main()
