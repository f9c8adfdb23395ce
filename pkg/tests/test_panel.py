import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from conftest import make_panel
from poolbench.errors import DataError
from poolbench.panel import (
    FEATURE_COLUMNS,
    InputFormat,
    PanelSeries,
    build_design_matrix,
    ingest_csv,
    read_covariates,
    read_include_list,
    read_panel_csv,
    season_of_month,
    split_by_period,
    split_design,
)


def test_nearest_hour_rounding(write):
    p = write("r.csv", "station_id,timestamp\nA,2023-05-01 08:10\nA,2023-05-01 08:40\nA,2023-05-01 09:05\n")
    panel = ingest_csv(p)
    assert panel.start == pd.Timestamp("2023-05-01 08:00")
    np.testing.assert_array_equal(panel.series("A"), [1, 2])


def test_half_hour_rounds_up(write):
    p = write("r.csv", "station_id,timestamp\nA,2023-05-01 08:30:00\nA,2023-05-01 08:29:59\n")
    panel = ingest_csv(p)
    np.testing.assert_array_equal(panel.series("A"), [1, 1])


def test_single_record(write):
    panel = ingest_csv(write("r.csv", "station_id,timestamp\nA,2024-01-01T00:00:00\n"))
    assert panel.n_hours == 1 and panel.series("A")[0] == 1


def test_missing_hours_are_zero(write):
    panel = ingest_csv(write("r.csv", "station_id,timestamp\nA,2024-01-01 00:00\nA,2024-01-01 02:00\n"))
    np.testing.assert_array_equal(panel.series("A"), [1, 0, 1])


def test_value_column_summed_and_stations_aligned(write):
    text = "station_id,timestamp,value\nB,2024-01-01 00:05,2.5\nA,2024-01-01 01:00,1\nB,2024-01-01 00:20,0.5\n"
    panel = ingest_csv(write("r.csv", text))
    assert panel.stations == ("A", "B")
    np.testing.assert_array_equal(panel.values, [[0, 1], [3, 0]])


def test_bad_timestamp_reports_line(write):
    p = write("r.csv", "station_id,timestamp\nA,2024-01-01 00:00\nA,not-a-date\n")
    with pytest.raises(DataError, match="line 3"):
        ingest_csv(p)


def test_negative_value_rejected(write):
    with pytest.raises(DataError, match="line 2"):
        ingest_csv(write("r.csv", "station_id,timestamp,value\nA,2024-01-01 00:00,-1\n"))


def test_empty_and_missing_file(write, tmp_path):
    with pytest.raises(DataError):
        ingest_csv(write("r.csv", "station_id,timestamp\n"))
    with pytest.raises(DataError):
        ingest_csv(tmp_path / "nope.csv")


def test_custom_format_and_include(write):
    text = "sid,when\nA,01/02/2024 10:00\nB,01/02/2024 11:00\n"
    fmt = InputFormat(station_column="sid", timestamp_column="when", timestamp_format="%d/%m/%Y %H:%M")
    panel = ingest_csv(write("r.csv", text), fmt, include=["B"])
    assert panel.stations == ("B",)
    assert panel.start == pd.Timestamp("2024-02-01 11:00")


def test_exact_duplicates_optional(write):
    p = write("r.csv", "station_id,timestamp\nA,2024-01-01 00:00\nA,2024-01-01 00:00\n")
    assert ingest_csv(p).values.sum() == 2
    assert ingest_csv(p, drop_exact_duplicates=True).values.sum() == 1


@given(st.lists(st.tuples(st.sampled_from("ABC"), st.integers(0, 6 * 60 - 1)), min_size=1, max_size=40))
def test_trip_conservation(tmp_path_factory, records):
    lines = ["station_id,timestamp"]
    base = pd.Timestamp("2024-03-01")
    for s, minute in records:
        lines.append(f"{s},{(base + pd.Timedelta(minutes=minute)).isoformat()}")
    p = tmp_path_factory.mktemp("c") / "r.csv"
    p.write_text("\n".join(lines) + "\n")
    panel = ingest_csv(p)
    assert panel.values.sum() == len(records)
    assert np.all(np.isfinite(panel.values))
    assert panel.values.shape == (panel.n_stations, panel.n_hours)


def test_include_list_and_covariates(write):
    assert read_include_list(write("inc.txt", "# keep\nA\n\nB\n")) == ["A", "B"]
    cov = read_covariates(write("cov.csv", "station_id,pop,rail\nA,10,1\nB,20,0\n"))
    assert list(cov.columns) == ["pop", "rail"] and cov.loc["B", "pop"] == 20
    with pytest.raises(DataError):
        read_covariates(write("bad.csv", "station_id,pop\nA,x\n"))


def test_panel_csv_round_trip(tmp_path):
    panel = make_panel(np.random.default_rng(0).normal(size=(3, 30)))
    panel.to_csv(tmp_path / "p.csv")
    back = read_panel_csv(tmp_path / "p.csv")
    assert back.stations == panel.stations and back.start == panel.start
    np.testing.assert_array_equal(back.values, panel.values)


def test_panel_validation():
    with pytest.raises(DataError):
        make_panel([[1.0, np.nan]])
    with pytest.raises(DataError):
        PanelSeries(("a", "a"), pd.Timestamp("2024-01-01"), np.zeros((2, 3)))
    panel = make_panel(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        panel.values[0, 0] = 1.0


def test_design_25_hours_one_row_per_station():
    d = build_design_matrix(make_panel(np.arange(50.0).reshape(2, 25)))
    assert len(d) == 2
    np.testing.assert_array_equal(d.X[:, 0], [23, 48])
    np.testing.assert_array_equal(d.X[:, 1], [0, 25])


def test_design_too_short():
    with pytest.raises(DataError):
        build_design_matrix(make_panel(np.zeros((1, 24))))


def test_constant_series_lags():
    d = build_design_matrix(make_panel(np.full((2, 60), 5.0)))
    assert np.all(d.X[:, :2] == 5.0)


def test_season_mapping():
    assert season_of_month(1) == 0 and season_of_month(4) == 1
    np.testing.assert_array_equal(season_of_month(np.arange(1, 13)), [0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0])


@given(st.integers(1, 3), st.integers(25, 80), st.integers(0, 10_000))
def test_lag_identity_exhaustive(n, T, seed):
    v = np.random.default_rng(seed).normal(size=(n, T))
    d = build_design_matrix(make_panel(v, start="2024-02-27 13:00"))
    assert d.X.shape == (n * (T - 24), len(FEATURE_COLUMNS))
    for row in range(len(d)):
        s, h = d.station[row], d.hour[row]
        assert d.X[row, 0] == v[s, h - 1] and d.X[row, 1] == v[s, h - 24] and d.y[row] == v[s, h]
        ts = pd.Timestamp("2024-02-27 13:00") + pd.Timedelta(hours=int(h))
        assert tuple(d.X[row, 2:7]) == (ts.month, ts.day, ts.hour, ts.weekday(), season_of_month(ts.month))
        assert d.X[row, 7] == s


def test_split_halves_and_errors():
    panel = make_panel(np.arange(48.0)[None])
    tr, te = split_by_period(panel, panel.start + pd.Timedelta(hours=24))
    assert tr.n_hours == 24 and te.n_hours == 24 and te.values[0, 0] == 24
    with pytest.raises(DataError):
        split_by_period(panel, panel.start)
    with pytest.raises(DataError):
        split_by_period(panel, panel.start + pd.Timedelta(hours=48))


def test_split_snaps_down_to_hour():
    panel = make_panel(np.arange(48.0)[None])
    tr, te = split_by_period(panel, panel.start + pd.Timedelta(hours=10, minutes=45))
    assert tr.n_hours == 10 and te.start == panel.start + pd.Timedelta(hours=10)


def test_split_design_keeps_cross_boundary_lags():
    v = np.arange(60.0)[None]
    d = build_design_matrix(make_panel(v))
    tr, te = split_design(d, 30)
    assert tr.hour.max() == 29 and te.hour.min() == 30
    assert te.X[0, 0] == 29 and te.X[0, 1] == 6
