"""Fixed-length summary statistics of an hourly series, used for clustering."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .errors import DataError

FEATURE_SET_VERSION = "ts25-v1"
ACF_LAGS = (1, 2, 3, 6, 12, 24)
QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)
ENTROPY_BINS = 10
N_FFT = 5
MIN_LENGTH = 48

FEATURE_NAMES: tuple[str, ...] = (
    ("mean", "variance", "skewness", "kurtosis")
    + tuple(f"acf_{lag}" for lag in ACF_LAGS)
    + tuple(f"quantile_{q:g}" for q in QUANTILES)
    + ("binned_entropy",)
    + tuple(f"fft_abs_{i}" for i in range(1, N_FFT + 1))
    + ("fft_dominant_index", "trend_slope", "count_above_mean_ratio", "longest_zero_run")
)


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray
    version: str = FEATURE_SET_VERSION

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


def autocorrelation(x: np.ndarray, lag: int) -> float:
    """Sample autocorrelation normalised by (n - lag) * variance; 0 for a flat series."""
    n = len(x)
    if np.ptp(x) == 0 or lag >= n:
        return 0.0
    var = x.var()
    d = x - x.mean()
    return float(np.dot(d[:-lag], d[lag:]) / ((n - lag) * var))


def binned_entropy(x: np.ndarray, bins: int = ENTROPY_BINS) -> float:
    lo, hi = x.min(), x.max()
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(x, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / len(x)
    return float(-np.sum(p * np.log(p)))


def fft_peaks(x: np.ndarray, k: int = N_FFT) -> tuple[np.ndarray, int]:
    """Magnitudes of the ``k`` strongest nonzero frequencies and the index of the strongest.

    Ties are resolved towards the lower frequency. A flat series has no
    spectrum away from zero and reports zeros with index 0.
    """
    if np.ptp(x) == 0:
        return np.zeros(k), 0
    mag = np.abs(np.fft.rfft(x))[1:]
    order = np.argsort(-mag, kind="stable")[:k]
    top = np.zeros(k)
    top[: len(order)] = mag[order]
    return top, int(order[0]) + 1


def longest_zero_run(x: np.ndarray) -> int:
    best = run = 0
    for v in (x == 0):
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def extract_features(series) -> FeatureVector:
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or len(x) < MIN_LENGTH:
        raise DataError(f"series needs at least {MIN_LENGTH} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")

    n = len(x)
    mean = x.mean()
    flat = np.ptp(x) == 0
    var = 0.0 if flat else x.var()
    skew = kurt = 0.0
    if not flat:
        with np.errstate(all="ignore"), warnings.catch_warnings():
            # near-flat series lose precision in the higher moments
            warnings.simplefilter("ignore", RuntimeWarning)
            skew, kurt = float(stats.skew(x)), float(stats.kurtosis(x))
        skew = skew if np.isfinite(skew) else 0.0
        kurt = kurt if np.isfinite(kurt) else 0.0
    t = np.arange(n, dtype=np.float64)
    slope = float(np.dot(t - t.mean(), x - mean) / np.dot(t - t.mean(), t - t.mean()))
    peaks, dominant = fft_peaks(x)

    values = np.concatenate(
        [
            [mean, var, skew, kurt],
            [autocorrelation(x, lag) for lag in ACF_LAGS],
            np.quantile(x, QUANTILES),
            [binned_entropy(x)],
            peaks,
            [dominant, slope, np.mean(x > mean), longest_zero_run(x)],
        ]
    )
    return FeatureVector(FEATURE_NAMES, values)


def panel_features(panel, include_covariates: bool = True) -> pd.DataFrame:
    """One row per station; numeric static covariates are appended when present."""
    rows = [extract_features(panel.values[i]).values for i in range(panel.n_stations)]
    out = pd.DataFrame(np.vstack(rows), index=pd.Index(panel.stations, name="station_id"), columns=FEATURE_NAMES)
    cov = panel.static_covariates
    if include_covariates and cov is not None:
        num = cov.select_dtypes(include=[np.number]).reindex(out.index)
        if num.isna().any().any():
            raise DataError("static covariates missing for some stations")
        clash = set(num.columns) & set(out.columns)
        if clash:
            raise DataError(f"covariate names clash with series features: {sorted(clash)}")
        out = pd.concat([out, num.astype(float)], axis=1)
    return out
