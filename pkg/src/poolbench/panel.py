"""Hourly station panels: ingestion, design matrices and period splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError

HOUR = pd.Timedelta(hours=1)

FEATURE_COLUMNS = (
    "lag1",
    "lag24",
    "month",
    "day_of_month",
    "hour_of_day",
    "weekday",
    "season",
    "station_id",
)
CATEGORICAL_COLUMNS = ("weekday", "season", "station_id")

SEASONS = ("winter", "spring", "summer", "fall")
WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
# meteorological seasons, index = month - 1
_MONTH_TO_SEASON = np.array([0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0])


def season_of_month(month):
    """Season code (0=winter .. 3=fall) for month numbers 1-12."""
    return _MONTH_TO_SEASON[np.asarray(month) - 1]


@dataclass(frozen=True)
class InputFormat:
    station_column: str = "station_id"
    timestamp_column: str = "timestamp"
    value_column: str | None = "value"
    timestamp_format: str | None = None


@dataclass(frozen=True, eq=False)
class PanelSeries:
    """Station x hour matrix on a gap-free hourly grid.

    ``values[i, t]`` is the demand of ``stations[i]`` during hour ``start + t``.
    """

    stations: tuple[str, ...]
    start: pd.Timestamp
    values: np.ndarray
    static_covariates: pd.DataFrame | None = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("panel values must be a 2-D station x hour matrix")
        if values.shape[0] != len(self.stations):
            raise DataError(
                f"{values.shape[0]} value rows for {len(self.stations)} stations"
            )
        if len(set(self.stations)) != len(self.stations):
            raise DataError("duplicate station ids in panel")
        if values.shape[1] == 0:
            raise DataError("panel has an empty time index")
        if not np.all(np.isfinite(values)):
            raise DataError("panel values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "stations", tuple(str(s) for s in self.stations))
        object.__setattr__(self, "start", pd.Timestamp(self.start).floor("h"))
        object.__setattr__(self, "values", values)

    @property
    def n_stations(self) -> int:
        return self.values.shape[0]

    @property
    def n_hours(self) -> int:
        return self.values.shape[1]

    @property
    def time_index(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=self.n_hours, freq="h")

    @property
    def end(self) -> pd.Timestamp:
        return self.start + (self.n_hours - 1) * HOUR

    def series(self, station: str) -> np.ndarray:
        return self.values[self.stations.index(station)]

    def subset(self, stations: Sequence[str]) -> "PanelSeries":
        """Panel restricted to ``stations``, in the order given."""
        rows = [self.stations.index(s) for s in stations]
        cov = None
        if self.static_covariates is not None:
            cov = self.static_covariates.reindex(list(stations))
        return PanelSeries(tuple(stations), self.start, self.values[rows], cov)

    def hour_slice(self, lo: int, hi: int) -> "PanelSeries":
        return PanelSeries(
            self.stations,
            self.start + lo * HOUR,
            self.values[:, lo:hi],
            self.static_covariates,
        )

    def with_covariates(self, covariates: pd.DataFrame) -> "PanelSeries":
        """Attach per-station numeric covariates (index = station id).

        Stations missing from ``covariates`` get an all-NaN row.
        """
        cov = covariates.copy()
        cov.index = cov.index.astype(str)
        cov = cov.reindex(list(self.stations)).astype(float)
        return PanelSeries(self.stations, self.start, self.values, cov)

    def to_long(self) -> pd.DataFrame:
        hours = self.time_index.strftime("%Y-%m-%dT%H:%M:%S")
        return pd.DataFrame(
            {
                "station_id": np.repeat(np.array(self.stations, dtype=object), self.n_hours),
                "hour_iso": np.tile(np.asarray(hours, dtype=object), self.n_stations),
                "value": self.values.ravel(),
            }
        )

    def to_csv(self, path) -> None:
        self.to_long().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _round_to_hour(ts: pd.Series) -> pd.Series:
    # :30:00 exactly rounds up
    return (ts + pd.Timedelta(minutes=30)).dt.floor("h")


def _read_csv(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"cannot read {path}: no such file")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path} is empty") from exc


def _to_float(raw: pd.Series) -> pd.Series:
    """Exact decimal-to-double parsing; unparseable cells become NaN."""
    try:
        return pd.Series(np.array(raw, dtype=np.float64), index=raw.index)
    except ValueError:
        out = pd.to_numeric(raw, errors="coerce")
        ok = out.notna()
        out[ok] = np.array(raw[ok], dtype=np.float64)
        return out


def _parse_timestamps(raw: pd.Series, fmt: str | None, path) -> pd.Series:
    parsed = pd.to_datetime(raw, format=fmt if fmt else "ISO8601", errors="coerce")
    bad = parsed.isna().to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        # +2: header line and 1-based numbering
        raise DataError(f"{path}: line {i + 2}: unparseable timestamp {raw.iloc[i]!r}")
    return parsed


def ingest_csv(
    path,
    fmt: InputFormat = InputFormat(),
    include: Sequence[str] | None = None,
    drop_exact_duplicates: bool = False,
) -> PanelSeries:
    """Aggregate trip/observation records into an hourly station panel.

    Each record's timestamp is rounded to the nearest hour; per hour the values
    (default 1 per record) are summed. Hours with no records become 0.

    Parameters
    ----------
    path : path-like
        CSV with at least station and timestamp columns.
    fmt : InputFormat
        Column names and optional strptime format (ISO-8601 otherwise).
    include : sequence of str, optional
        Keep only these stations.
    drop_exact_duplicates : bool
        Drop rows identical in every column before aggregation.
    """
    df = _read_csv(path)
    missing = [
        c for c in (fmt.station_column, fmt.timestamp_column) if c not in df.columns
    ]
    if missing:
        raise DataError(f"{path}: header lacks required column(s) {missing}")
    if df.empty:
        raise DataError(f"{path}: no records")
    if drop_exact_duplicates:
        df = df.drop_duplicates().reset_index(drop=True)

    ts = _parse_timestamps(df[fmt.timestamp_column], fmt.timestamp_format, path)
    if fmt.value_column and fmt.value_column in df.columns:
        raw_vals = df[fmt.value_column].replace("", "1")
        vals = _to_float(raw_vals)
        bad = (vals.isna() | (vals < 0)).to_numpy()
        if bad.any():
            i = int(np.argmax(bad))
            raise DataError(
                f"{path}: line {i + 2}: invalid value {df[fmt.value_column].iloc[i]!r}"
            )
        vals = vals.to_numpy(dtype=np.float64)
    else:
        vals = np.ones(len(df))

    stations = df[fmt.station_column].astype(str)
    if include is not None:
        keep = stations.isin(set(include)).to_numpy()
        stations, ts, vals = stations[keep], ts[keep], vals[keep]
        if not keep.any():
            raise DataError(f"{path}: no records left after station filter")

    hours = _round_to_hour(ts)
    start, end = hours.min(), hours.max()
    n_hours = int((end - start) / HOUR) + 1
    names = tuple(sorted(stations.unique()))
    row = pd.Index(names).get_indexer(stations)
    col = ((hours - start) / HOUR).to_numpy().astype(np.int64)
    values = np.zeros((len(names), n_hours))
    np.add.at(values, (row, col), vals)
    return PanelSeries(names, start, values)


def read_include_list(path) -> list[str]:
    lines = Path(path).read_text().splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def read_covariates(path) -> pd.DataFrame:
    """Station covariates CSV ``station_id,<name1>,...`` -> numeric frame."""
    df = _read_csv(path)
    if "station_id" not in df.columns:
        raise DataError(f"{path}: covariates file needs a station_id column")
    df = df.set_index("station_id")
    out = df.apply(_to_float)
    if out.isna().to_numpy().any():
        r, c = np.argwhere(out.isna().to_numpy())[0]
        raise DataError(f"{path}: line {r + 2}: non-numeric covariate {df.columns[c]!r}")
    return out


def read_panel_csv(path) -> PanelSeries:
    """Inverse of :meth:`PanelSeries.to_csv`."""
    df = _read_csv(path)
    need = {"station_id", "hour_iso", "value"}
    if not need <= set(df.columns):
        raise DataError(f"{path}: panel CSV needs columns {sorted(need)}")
    if df.empty:
        raise DataError(f"{path}: empty panel")
    hours = _parse_timestamps(df["hour_iso"], None, path)
    vals = _to_float(df["value"])
    if vals.isna().any():
        i = int(np.argmax(vals.isna().to_numpy()))
        raise DataError(f"{path}: line {i + 2}: non-numeric value")
    stations = list(dict.fromkeys(df["station_id"]))
    start, end = hours.min(), hours.max()
    n_hours = int((end - start) / HOUR) + 1
    values = np.full((len(stations), n_hours), np.nan)
    row = pd.Index(stations).get_indexer(df["station_id"])
    col = ((hours - start) / HOUR).to_numpy().astype(np.int64)
    values[row, col] = vals.to_numpy()
    if np.isnan(values).any():
        raise DataError(f"{path}: panel CSV has missing (station, hour) cells")
    return PanelSeries(tuple(stations), start, values)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Feature rows (one per station-hour with both lags defined).

    ``X`` columns follow :data:`FEATURE_COLUMNS`; categorical columns hold
    integer codes described by ``labels``. ``hour`` is the position of the
    target hour in the source panel's time index and ``station`` the row of
    the source panel.
    """

    X: np.ndarray
    y: np.ndarray
    station: np.ndarray
    hour: np.ndarray
    stations: tuple[str, ...]
    labels: dict

    @property
    def columns(self) -> tuple[str, ...]:
        return FEATURE_COLUMNS

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(
            len(self.labels[c]) if c in CATEGORICAL_COLUMNS else 0
            for c in FEATURE_COLUMNS
        )

    def __len__(self):
        return len(self.y)

    def take(self, mask) -> "DesignMatrix":
        return DesignMatrix(
            self.X[mask],
            self.y[mask],
            self.station[mask],
            self.hour[mask],
            self.stations,
            self.labels,
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(FEATURE_COLUMNS))
        df["target"] = self.y
        return df


def build_design_matrix(panel: PanelSeries) -> DesignMatrix:
    """Lag and calendar features for every station-hour with a full lag window."""
    T = panel.n_hours
    if T < 25:
        raise DataError(f"panel has {T} hours; lag24 features need at least 25")
    n = panel.n_stations
    t = np.arange(24, T)
    times = panel.time_index[24:]
    month = times.month.to_numpy()
    cal = np.column_stack(
        [
            month,
            times.day.to_numpy(),
            times.hour.to_numpy(),
            times.weekday.to_numpy(),
            season_of_month(month),
        ]
    ).astype(np.float64)

    v = panel.values
    X = np.empty((n * len(t), len(FEATURE_COLUMNS)))
    X[:, 0] = v[:, t - 1].ravel()
    X[:, 1] = v[:, t - 24].ravel()
    X[:, 2:7] = np.tile(cal, (n, 1))
    X[:, 7] = np.repeat(np.arange(n), len(t))
    labels = {
        "weekday": dict(enumerate(WEEKDAYS)),
        "season": dict(enumerate(SEASONS)),
        "station_id": dict(enumerate(panel.stations)),
    }
    return DesignMatrix(
        X=X,
        y=v[:, t].ravel().copy(),
        station=np.repeat(np.arange(n), len(t)),
        hour=np.tile(t, n),
        stations=panel.stations,
        labels=labels,
    )


def boundary_index(panel: PanelSeries, boundary) -> int:
    """Hour offset of ``boundary`` (snapped down to the hour) in ``panel``."""
    b = pd.Timestamp(boundary).floor("h")
    idx = int((b - panel.start) / HOUR)
    if idx <= 0 or idx >= panel.n_hours:
        raise DataError(
            f"boundary {b} outside ({panel.start}, {panel.end}]; both periods must be non-empty"
        )
    return idx


def split_by_period(panel: PanelSeries, boundary) -> tuple[PanelSeries, PanelSeries]:
    """Train = hours before ``boundary``, test = hours from ``boundary`` on."""
    idx = boundary_index(panel, boundary)
    return panel.hour_slice(0, idx), panel.hour_slice(idx, panel.n_hours)


def split_design(design: DesignMatrix, boundary_hour: int) -> tuple[DesignMatrix, DesignMatrix]:
    """Partition rows of a full-panel design matrix at an hour offset.

    Lags are taken from the unsplit panel, so early test rows see real
    training-period values.
    """
    is_train = design.hour < boundary_hour
    return design.take(is_train), design.take(~is_train)
