"""Command-line entry point: ``poolbench <stage> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from . import dgp as dgpmod
from .cluster import cluster_stations
from .errors import ConfigError, DataError, PoolbenchError
from .features import panel_features
from .harness import ExperimentConfig, boundary_hour, run_experiment
from .homogeneity import slope_homogeneity
from .panel import (
    InputFormat,
    build_design_matrix,
    ingest_csv,
    read_covariates,
    read_include_list,
    read_panel_csv,
    split_design,
)
from .qboost import FeatureSchema, TrainParams, train_interval

log = logging.getLogger("poolbench")


def _load_spec(arg: str):
    refs = dgpmod.reference_specs()
    if arg in refs and not Path(arg).exists():
        return refs[arg]
    return dgpmod.load_spec(arg)


def _read_stations(path) -> list[tuple[str, float]]:
    try:
        df = pd.read_csv(path, dtype={"station_id": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read stations file {path}: {exc}") from exc
    if "station_id" not in df.columns:
        raise DataError(f"{path}: stations file needs a station_id column")
    init = pd.to_numeric(df.get("init_value", pd.Series(0.0, index=df.index)), errors="coerce")
    if init.isna().any():
        raise DataError(f"{path}: non-numeric init_value")
    return list(zip(df["station_id"], init.astype(float)))


def _write_csv(df, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, float_format="%.17g", lineterminator="\n")


def cmd_simulate(a) -> None:
    spec = _load_spec(a.dgp)
    panel = dgpmod.simulate_panel(spec, _read_stations(a.stations), a.steps, a.seed, a.burn_in, a.start)
    panel.to_csv(a.out)


def cmd_ingest(a) -> None:
    fmt = InputFormat(a.station_column, a.timestamp_column, a.value_column, a.timestamp_format)
    include = read_include_list(a.include) if a.include else None
    panel = ingest_csv(a.records, fmt, include, a.drop_duplicates)
    panel.to_csv(a.out)


def _params(path) -> TrainParams:
    if not path:
        return TrainParams()
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read params file {path}: {exc}") from exc
    return TrainParams.from_dict(d)


def cmd_train(a) -> None:
    panel = read_panel_csv(a.panel)
    try:
        qs = tuple(float(q) for q in a.quantiles.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --quantiles {a.quantiles!r}") from exc
    if len(qs) != 3 or not qs[0] < qs[1] < qs[2]:
        raise ConfigError("--quantiles needs three increasing values")
    if qs != (0.025, 0.5, 0.975):
        raise ConfigError("only the 0.025,0.5,0.975 interval is supported")
    params = _params(a.params)
    b = None if a.boundary is None else boundary_hour(panel, _parse_boundary(a.boundary))
    if a.scheme == "global":
        groups = {"global": list(panel.stations)}
    elif a.scheme == "station":
        groups = {s: [s] for s in panel.stations}
    else:
        groups = _cluster_groups(panel, a.assignment)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"scheme": a.scheme, "quantiles": list(qs), "train_hours": b or panel.n_hours, "scopes": {}}
    for scope, members in groups.items():
        model = _train_scope(panel, members, params, b)
        if model is None:
            log.warning("scope %s skipped: too few training rows", scope)
            continue
        model.save(out / scope)
        manifest["scopes"][scope] = list(members)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _cluster_groups(panel, path) -> dict[str, list[str]]:
    if not path:
        raise ConfigError("--scheme cluster needs --assignment")
    try:
        lab = pd.read_csv(path, dtype={"station_id": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read assignment {path}: {exc}") from exc
    if not {"station_id", "cluster"} <= set(lab.columns):
        raise DataError(f"{path}: needs station_id,cluster columns")
    mapping = dict(zip(lab["station_id"], lab["cluster"].astype(int)))
    missing = [s for s in panel.stations if s not in mapping]
    if missing:
        raise DataError(f"assignment lacks station {missing[0]!r}")
    groups: dict[int, list[str]] = {}
    for s in panel.stations:
        groups.setdefault(mapping[s], []).append(s)
    return {str(c): groups[c] for c in sorted(groups)}


def _train_scope(panel, members, params, train_hours):
    """Interval model on the scope's rows before hour ``train_hours`` (all rows if None)."""
    keep = set(members)
    design = build_design_matrix(panel.subset([s for s in panel.stations if s in keep]))
    if train_hours is not None:
        design, _ = split_design(design, train_hours)
    if len(design) < 2 * params.min_samples_leaf:
        return None
    return train_interval(design.X, design.y, params, FeatureSchema.from_design(design))


def _parse_boundary(text: str):
    try:
        return int(text)
    except ValueError:
        return pd.Timestamp(text)


def cmd_features(a) -> None:
    panel = read_panel_csv(a.panel)
    if a.covariates:
        panel = panel.with_covariates(read_covariates(a.covariates))
    if a.boundary is not None:
        panel = panel.hour_slice(0, boundary_hour(panel, _parse_boundary(a.boundary)))
    _write_csv(panel_features(panel), a.out)


def cmd_cluster(a) -> None:
    try:
        feats = pd.read_csv(a.features, index_col="station_id", dtype={"station_id": str})
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read features {a.features}: {exc}") from exc
    kmax = None if a.kmax == "auto" else int(a.kmax)
    res = cluster_stations(feats, a.threshold, a.kmin, kmax, a.seed, a.restarts, a.k_cap)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    res.to_frame().to_csv(out / "assignment.csv", index=False, lineterminator="\n")
    res.diagnostics().to_csv(out / "diagnostics.csv", index=False, float_format="%.17g", lineterminator="\n")


def cmd_homogeneity(a) -> None:
    res = slope_homogeneity(read_panel_csv(a.panel))
    Path(a.out).parent.mkdir(parents=True, exist_ok=True)
    res.to_json(a.out)


def cmd_report(a) -> None:
    cfg = ExperimentConfig.load(a.experiment)
    if a.out:
        cfg = ExperimentConfig(**{**cfg.__dict__, "out_dir": a.out})
    run_experiment(cfg)
    print(Path(cfg.out_dir, "summary.txt").read_text(), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poolbench", description="Global vs cluster vs station interval forecasting benchmark")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a station panel from a DGP")
    s.add_argument("--dgp", required=True, help="DGP JSON file or reference name (sarima, ar_t, mlp_ar, ar_garch)")
    s.add_argument("--stations", required=True, help="CSV with station_id[,init_value]")
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--burn-in", type=int, default=500)
    s.add_argument("--start", default=str(dgpmod.DEFAULT_START))
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("ingest", help="aggregate trip records into an hourly panel")
    s.add_argument("--records", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--include", help="file with one station id per line")
    s.add_argument("--station-column", default="station_id")
    s.add_argument("--timestamp-column", default="timestamp")
    s.add_argument("--value-column", default="value")
    s.add_argument("--timestamp-format")
    s.add_argument("--drop-duplicates", action="store_true")
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("train", help="train interval models for one pooling scheme")
    s.add_argument("--panel", required=True)
    s.add_argument("--scheme", choices=("global", "cluster", "station"), required=True)
    s.add_argument("--quantiles", default="0.025,0.5,0.975")
    s.add_argument("--params", help="JSON file of training parameters")
    s.add_argument("--assignment", help="station_id,cluster CSV (cluster scheme)")
    s.add_argument("--boundary", help="train on hours before this offset or timestamp")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("features", help="per-station time-series features")
    s.add_argument("--panel", required=True)
    s.add_argument("--covariates")
    s.add_argument("--boundary", help="use only hours before this offset or timestamp")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_features)

    s = sub.add_parser("cluster", help="PCA + K-means station clustering")
    s.add_argument("--features", required=True)
    s.add_argument("--threshold", type=float, default=0.9)
    s.add_argument("--kmin", type=int, default=2)
    s.add_argument("--kmax", default="auto")
    s.add_argument("--k-cap", type=int, default=200)
    s.add_argument("--restarts", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="directory for assignment.csv and diagnostics.csv")
    s.set_defaults(fn=cmd_cluster)

    s = sub.add_parser("homogeneity", help="slope-homogeneity test on a panel")
    s.add_argument("--panel", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_homogeneity)

    s = sub.add_parser("report", help="run a full experiment from a config file")
    s.add_argument("--experiment", required=True)
    s.add_argument("--out", help="override the config's out_dir")
    s.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except PoolbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
