import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from poolbench.errors import DataError
from poolbench.features import (
    FEATURE_NAMES,
    FEATURE_SET_VERSION,
    autocorrelation,
    binned_entropy,
    extract_features,
    fft_peaks,
    longest_zero_run,
    panel_features,
)

from conftest import make_panel

PINNED_NAMES = (
    "mean", "variance", "skewness", "kurtosis",
    "acf_1", "acf_2", "acf_3", "acf_6", "acf_12", "acf_24",
    "quantile_0.1", "quantile_0.25", "quantile_0.5", "quantile_0.75", "quantile_0.9",
    "binned_entropy",
    "fft_abs_1", "fft_abs_2", "fft_abs_3", "fft_abs_4", "fft_abs_5",
    "fft_dominant_index", "trend_slope", "count_above_mean_ratio", "longest_zero_run",
)

series = arrays(np.float64, st.integers(48, 200), elements=st.floats(-1e3, 1e3, allow_nan=False))


def test_name_set_pinned():
    assert FEATURE_NAMES == PINNED_NAMES
    fv = extract_features(np.arange(48.0))
    assert fv.names == PINNED_NAMES and fv.version == FEATURE_SET_VERSION
    assert len(fv.values) == 25


def test_constant_series():
    f = extract_features(np.full(60, 5.0)).as_dict()
    assert f["variance"] == 0 and f["binned_entropy"] == 0
    assert all(f[f"acf_{lag}"] == 0 for lag in (1, 2, 3, 6, 12, 24))
    assert f["fft_dominant_index"] == 0 and f["fft_abs_1"] == 0
    assert f["longest_zero_run"] == 0 and f["quantile_0.5"] == 5.0


def test_sine_period_24():
    t = np.arange(480)
    f = extract_features(np.sin(2 * np.pi * t / 24)).as_dict()
    assert f["fft_dominant_index"] == 20
    assert f["fft_abs_1"] == pytest.approx(240.0)
    assert f["acf_24"] == pytest.approx(1.0, abs=1e-9)
    assert f["acf_12"] == pytest.approx(-1.0, abs=1e-9)


def test_iid_noise_acf_within_band():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(50):
        x = rng.normal(size=2000)
        hits += sum(abs(autocorrelation(x, lag)) <= 2 / np.sqrt(len(x)) for lag in (1, 2, 3, 6, 12, 24))
    # each lag falls inside the band with probability about 0.95
    assert hits / 300 > 0.9


def test_acf_matches_numpy_reference():
    rng = np.random.default_rng(1)
    x = rng.normal(size=100).cumsum()
    d = x - x.mean()
    ref = np.correlate(d, d, mode="full")[len(x) - 1 :] / (len(x) * x.var())
    for lag in (1, 6, 24):
        assert autocorrelation(x, lag) == pytest.approx(ref[lag] * len(x) / (len(x) - lag))


def test_entropy_uniform_bins():
    x = np.repeat(np.arange(10.0), 7)
    assert binned_entropy(x) == pytest.approx(np.log(10))


def test_fft_ties_go_low():
    x = np.cos(2 * np.pi * 3 * np.arange(64) / 64) + np.cos(2 * np.pi * 5 * np.arange(64) / 64)
    top, dom = fft_peaks(x)
    assert dom == 3
    assert top[:2] == pytest.approx([32.0, 32.0])


def test_longest_zero_run_and_counts():
    x = np.array([0, 0, 1, 0, 0, 0, 2, 0] + [1] * 40, dtype=float)
    assert longest_zero_run(x) == 3
    f = extract_features(x).as_dict()
    assert f["longest_zero_run"] == 3
    assert f["count_above_mean_ratio"] == pytest.approx(np.mean(x > x.mean()))


def test_trend_slope():
    x = 3.0 + 0.25 * np.arange(100)
    assert extract_features(x).as_dict()["trend_slope"] == pytest.approx(0.25)


def test_too_short_and_non_finite():
    with pytest.raises(DataError):
        extract_features(np.zeros(47))
    with pytest.raises(DataError):
        extract_features(np.r_[np.zeros(60), np.nan])


@given(series, st.floats(-100, 100))
def test_shift_equivariance(x, c):
    a, b = extract_features(x).as_dict(), extract_features(x + c).as_dict()
    scale = max(1.0, np.abs(x).max(), abs(c))
    assert b["mean"] == pytest.approx(a["mean"] + c, abs=1e-9 * scale)
    for q in ("0.1", "0.25", "0.5", "0.75", "0.9"):
        assert b[f"quantile_{q}"] == pytest.approx(a[f"quantile_{q}"] + c, abs=1e-9 * scale)
    assert b["variance"] == pytest.approx(a["variance"], rel=1e-6, abs=1e-6 * scale)
    if a["variance"] > 1e-6 * scale:
        for lag in (1, 2, 3, 6, 12, 24):
            assert b[f"acf_{lag}"] == pytest.approx(a[f"acf_{lag}"], abs=1e-6)


@given(series)
def test_deterministic_and_finite(x):
    a, b = extract_features(x), extract_features(x.copy())
    assert np.array_equal(a.values, b.values)
    assert np.all(np.isfinite(a.values))


def test_panel_features_with_covariates():
    rng = np.random.default_rng(2)
    panel = make_panel(rng.poisson(3, size=(3, 72)), stations=("a", "b", "c"))
    cov = pd.DataFrame({"capacity": [10, 20, 30]}, index=pd.Index(["a", "b", "c"], name="station_id"))
    df = panel_features(panel.with_covariates(cov))
    assert list(df.index) == ["a", "b", "c"]
    assert list(df.columns) == list(FEATURE_NAMES) + ["capacity"]
    assert df.loc["b", "mean"] == pytest.approx(panel.values[1].mean())
    assert list(panel_features(panel.with_covariates(cov), include_covariates=False).columns) == list(FEATURE_NAMES)


def test_panel_features_missing_covariate():
    panel = make_panel(np.ones((2, 50)), stations=("a", "b"))
    cov = pd.DataFrame({"capacity": [1.0]}, index=pd.Index(["a"], name="station_id"))
    with pytest.raises(DataError):
        panel_features(panel.with_covariates(cov))
