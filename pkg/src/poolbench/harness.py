"""Train and score global, cluster-level and station-level interval models."""

from __future__ import annotations

import json
import logging
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from . import dgp as dgpmod
from .cluster import ClusterAssignment, cluster_stations
from .errors import ConfigError, DataError, PoolbenchError
from .features import panel_features
from .homogeneity import slope_homogeneity
from .metrics import REPORT_COLUMNS, ForecastTriplet, IntervalReport, evaluate
from .panel import PanelSeries, boundary_index, build_design_matrix, read_panel_csv, split_design
from .qboost import FeatureSchema, IntervalModel, TrainParams, train_interval

log = logging.getLogger(__name__)

SCHEMES = ("global", "cluster", "station")
METRICS = ("picp", "pinaw", "mse_median", "crossing_rate")
SUMMARY_STATS = ("mean", "min", "median", "max", "std")


@dataclass(frozen=True)
class SchemeResult:
    scheme: str
    reports: tuple[IntervalReport, ...]
    degenerate: tuple[str, ...] = ()
    models: dict = field(default_factory=dict, compare=False, repr=False)

    def summary(self) -> pd.DataFrame:
        return summarize(self.reports)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.as_row() for r in self.reports], columns=list(REPORT_COLUMNS))


def summarize(reports: Sequence[IntervalReport]) -> pd.DataFrame:
    """Mean / min / median / max / sample std of each metric across scopes."""
    df = pd.DataFrame([r.as_row() for r in reports])
    rows = {}
    for m in METRICS:
        v = df[m].to_numpy(dtype=np.float64) if len(df) else np.zeros(0)
        rows[m] = {
            "mean": v.mean() if len(v) else np.nan,
            "min": v.min() if len(v) else np.nan,
            "median": np.median(v) if len(v) else np.nan,
            "max": v.max() if len(v) else np.nan,
            "std": v.std(ddof=1) if len(v) > 1 else np.nan,
        }
    return pd.DataFrame(rows).loc[list(SUMMARY_STATS)]


def boundary_hour(panel: PanelSeries, boundary) -> int:
    if isinstance(boundary, (int, np.integer)):
        if not 0 < boundary < panel.n_hours:
            raise DataError(f"boundary hour {boundary} outside (0, {panel.n_hours})")
        return int(boundary)
    return boundary_index(panel, boundary)


def fit_scope(panel: PanelSeries, stations: Sequence[str], params: TrainParams, train_hours: int):
    """Train one interval model on ``stations`` and forecast their test hours.

    Returns (model, triplet), or (None, reason) when the scope has too few
    training rows or an empty test period.
    """
    order = [s for s in panel.stations if s in set(stations)]
    sub = panel.subset(order)
    design = build_design_matrix(sub)
    tr, te = split_design(design, train_hours)
    if len(tr) < 2 * params.min_samples_leaf:
        return None, f"{len(tr)} training rows < 2 * min_samples_leaf"
    if len(te) == 0:
        return None, "no test rows"
    model = train_interval(tr.X, tr.y, params, FeatureSchema.from_design(design))
    lo, med, hi = model.predict(te.X)
    return model, ForecastTriplet(lo, med, hi, te.y)


def _score(triplet: ForecastTriplet, scope: str, scheme: str, dgp: str) -> IntervalReport | str:
    try:
        return evaluate(triplet, scope, scheme, dgp)
    except DataError as exc:
        return str(exc)


def _run_groups(panel, groups: dict, params, boundary, scheme, dgp, keep_models) -> SchemeResult:
    b = boundary_hour(panel, boundary)
    reports, degenerate, models = [], [], {}
    for scope, members in groups.items():
        model, out = fit_scope(panel, members, params, b)
        rep = out if model is None else _score(out, scope, scheme, dgp)
        if isinstance(rep, str):
            log.warning("%s scope %s is degenerate: %s", scheme, scope, rep)
            degenerate.append(str(scope))
            continue
        reports.append(rep)
        if keep_models:
            models[str(scope)] = model
    if not reports:
        raise DataError(f"{scheme} scheme: every scope is degenerate")
    return SchemeResult(scheme, tuple(reports), tuple(degenerate), models)


def run_global(panel, params=TrainParams(), boundary=None, dgp="", keep_models=False) -> SchemeResult:
    """One model on all stations pooled, with station id as a categorical covariate."""
    boundary = panel.n_hours // 2 if boundary is None else boundary
    return _run_groups(panel, {"global": panel.stations}, params, boundary, "global", dgp, keep_models)


def run_cluster(panel, params, assignment, boundary=None, dgp="", keep_models=False) -> SchemeResult:
    """One model per cluster; ``assignment`` is a ClusterAssignment or a station -> cluster mapping."""
    labels = assignment.labels if isinstance(assignment, ClusterAssignment) else pd.Series(assignment)
    missing = set(panel.stations) - set(labels.index)
    if missing:
        raise DataError(f"assignment lacks {len(missing)} station(s), e.g. {sorted(missing)[0]!r}")
    groups = {}
    for s in panel.stations:
        groups.setdefault(int(labels[s]), []).append(s)
    groups = {str(c): groups[c] for c in sorted(groups)}
    boundary = panel.n_hours // 2 if boundary is None else boundary
    return _run_groups(panel, groups, params, boundary, "cluster", dgp, keep_models)


def run_station(panel, params=TrainParams(), boundary=None, dgp="", keep_models=False) -> SchemeResult:
    groups = {s: [s] for s in panel.stations}
    boundary = panel.n_hours // 2 if boundary is None else boundary
    return _run_groups(panel, groups, params, boundary, "station", dgp, keep_models)


# -- experiment ----------------------------------------------------------------

@dataclass(frozen=True)
class ClusterParams:
    threshold: float = 0.9
    k_min: int = 2
    k_max: int | None = None
    n_restarts: int = 10
    k_cap: int = 200


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one benchmark run.

    ``dgp`` is either a DGP mapping (see :func:`poolbench.dgp.spec_from_dict`),
    the name of a reference DGP, or ``"ingested"`` together with ``panel_csv``.
    ``boundary`` is an hour offset or a timestamp; ``None`` splits in half.
    """

    dgp: object
    out_dir: str
    n_stations: int = 50
    horizon_hours: int = 4000
    boundary: object = None
    schemes: tuple[str, ...] = SCHEMES
    train: TrainParams = TrainParams()
    clustering: ClusterParams = ClusterParams()
    seed: int = 0
    init_value: float = 0.0
    burn_in: int = 500
    start: str = "2023-01-01 00:00"
    panel_csv: str | None = None
    dgp_label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ConfigError(f"unknown scheme(s) {sorted(bad)}")
        if self.dgp == "ingested":
            if not self.panel_csv:
                raise ConfigError("dgp 'ingested' needs panel_csv")
        elif self.n_stations < 1 or self.horizon_hours < 26:
            raise ConfigError("n_stations >= 1 and horizon_hours >= 26 required")
        if isinstance(self.boundary, (int, np.integer)) and self.dgp != "ingested":
            if not 0 < self.boundary < self.horizon_hours:
                raise ConfigError(f"boundary {self.boundary} outside the horizon")

    @property
    def label(self) -> str:
        if self.dgp_label:
            return self.dgp_label
        if isinstance(self.dgp, str):
            return self.dgp
        return str(self.dgp.get("kind", "custom"))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schemes"] = list(self.schemes)
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        for key in ("dgp", "out_dir"):
            if key not in d:
                raise ConfigError(f"config needs {key!r}")
        try:
            if "train" in d:
                d["train"] = TrainParams.from_dict(d["train"])
            if "clustering" in d:
                d["clustering"] = ClusterParams(**d["clustering"])
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if base_dir is not None:
            for key in ("panel_csv", "out_dir"):
                if d.get(key) and not Path(d[key]).is_absolute():
                    d[key] = str(Path(base_dir) / d[key])
            if isinstance(d["dgp"], dict) and "weights" in d["dgp"]:
                w = Path(d["dgp"]["weights"])
                if not w.is_absolute():
                    d["dgp"] = {**d["dgp"], "weights": str(Path(base_dir) / w)}
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read experiment config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        return cls.from_dict(d, base_dir=Path(path).parent)


def build_panel(cfg: ExperimentConfig) -> PanelSeries:
    if cfg.dgp == "ingested":
        return read_panel_csv(cfg.panel_csv)
    if isinstance(cfg.dgp, str):
        refs = dgpmod.reference_specs()
        if cfg.dgp not in refs:
            raise ConfigError(f"unknown reference dgp {cfg.dgp!r}; choose from {sorted(refs)}")
        spec = refs[cfg.dgp]
    else:
        spec = dgpmod.spec_from_dict(cfg.dgp)
    width = len(str(cfg.n_stations - 1))
    stations = [(f"s{i:0{width}d}", cfg.init_value) for i in range(cfg.n_stations)]
    return dgpmod.simulate_panel(spec, stations, cfg.horizon_hours, cfg.seed, cfg.burn_in, cfg.start)


class StageError(PoolbenchError):
    def __init__(self, stage: str, cause: PoolbenchError):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.exit_code = cause.exit_code


def _stage(name: str, fn: Callable, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except PoolbenchError as exc:
        raise StageError(name, exc) from exc


def format_summary(label: str, results: Sequence[SchemeResult]) -> str:
    lines = [f"DGP: {label}", ""]
    for res in results:
        lines.append(f"[{res.scheme}] scopes={len(res.reports)} degenerate={len(res.degenerate)}")
        if len(res.reports) == 1:
            r = res.reports[0]
            lines.append(f"  PICP {r.picp:.5f}  PINAW {r.pinaw:.5f}  MSE {r.mse_median:.5f}  crossing {r.crossing_rate:.5f}")
        else:
            tab = res.summary()
            lines.append(f"  {'':8s}{'PICP':>10s}{'PINAW':>10s}{'MSE':>10s}")
            for stat in SUMMARY_STATS:
                row = tab.loc[stat]
                lines.append(f"  {stat:8s}{row['picp']:10.5f}{row['pinaw']:10.5f}{row['mse_median']:10.5f}")
        lines.append("")
    return "\n".join(lines)


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def run_experiment(cfg: ExperimentConfig) -> dict[str, SchemeResult]:
    """Run every configured scheme and write the report bundle to ``cfg.out_dir``.

    Files are staged in a sibling temporary directory and moved into place
    only when every stage succeeds.
    """
    out = Path(cfg.out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        panel = _stage("simulate" if cfg.dgp != "ingested" else "ingest", build_panel, cfg)
        b = _stage("split", boundary_hour, panel, panel.n_hours // 2 if cfg.boundary is None else cfg.boundary)
        label = cfg.label

        homo = _stage("homogeneity", slope_homogeneity, panel)
        homo.to_json(tmp / "homogeneity.json")

        results = []
        for scheme in SCHEMES:
            if scheme not in cfg.schemes:
                continue
            if scheme == "global":
                results.append(_stage("global", run_global, panel, cfg.train, b, label))
            elif scheme == "station":
                results.append(_stage("station", run_station, panel, cfg.train, b, label))
            else:
                train_part = panel.hour_slice(0, b)
                feats = _stage("features", panel_features, train_part)
                cp = cfg.clustering
                assignment = _stage(
                    "cluster", cluster_stations, feats, cp.threshold, cp.k_min, cp.k_max,
                    cfg.seed, cp.n_restarts, cp.k_cap,
                )
                _write_csv(assignment.to_frame(), tmp / "assignment.csv")
                _write_csv(assignment.diagnostics(), tmp / "diagnostics.csv")
                results.append(_stage("cluster-train", run_cluster, panel, cfg.train, assignment, b, label))

        metrics = pd.concat([r.frame() for r in results], ignore_index=True)
        _write_csv(metrics, tmp / "metrics.csv")
        (tmp / "summary.txt").write_text(format_summary(label, results))
        (tmp / "config.echo").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True, default=str) + "\n")
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    tmp.rename(out)
    return {r.scheme: r for r in results}
