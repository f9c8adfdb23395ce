"""Panel slope-homogeneity test and year-over-year profile correlation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .errors import DataError
from .panel import PanelSeries, boundary_index

log = logging.getLogger(__name__)

CRITICAL_5PCT = 1.645


def within(v: np.ndarray) -> np.ndarray:
    """Apply M = I - 11'/T along the last axis (demeaning)."""
    v = np.asarray(v, dtype=np.float64)
    return v - v.mean(axis=-1, keepdims=True)


@dataclass(frozen=True)
class HomogeneityResult:
    d_tilde: float
    stations: tuple[str, ...]
    intercept: np.ndarray
    slope: np.ndarray
    sigma2: np.ndarray
    d_i: np.ndarray
    pooled_intercept: float
    pooled_slope: float
    n_stations: int
    T: int
    k: int
    excluded: tuple[str, ...] = ()

    @property
    def reject_at_5pct(self) -> bool:
        return bool(self.d_tilde > CRITICAL_5PCT)

    def to_dict(self) -> dict:
        return {
            "d_tilde": self.d_tilde,
            "reject_at_5pct": self.reject_at_5pct,
            "n_stations": self.n_stations,
            "T": self.T,
            "k": self.k,
            "pooled": {"intercept": self.pooled_intercept, "slope": self.pooled_slope},
            "per_station": [
                {"station_id": s, "intercept": a, "slope": b, "sigma2": v, "d_i": d}
                for s, a, b, v, d in zip(
                    self.stations, self.intercept.tolist(), self.slope.tolist(),
                    self.sigma2.tolist(), self.d_i.tolist(),
                )
            ],
            "excluded": list(self.excluded),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def slope_homogeneity(panel: PanelSeries | np.ndarray, stations=None, k: int | None = None) -> HomogeneityResult:
    """Bias-adjusted dispersion test of a common linear time trend across stations.

    Each station is regressed on X = [1, t] with t = 1..T after the within
    transformation. Because M annihilates the constant column, X'MX has rank
    one and only the slope is identified by the projected regression, so the
    statistic is centred with ``k`` equal to that rank (1) unless overridden.
    Intercepts are recovered as mean(y) - slope * mean(t).
    """
    if isinstance(panel, PanelSeries):
        Y = np.asarray(panel.values, dtype=np.float64)
        ids = tuple(panel.stations)
    else:
        Y = np.atleast_2d(np.asarray(panel, dtype=np.float64))
        ids = tuple(stations) if stations is not None else tuple(str(i) for i in range(len(Y)))
    N, T = Y.shape
    if T < 4:
        raise DataError(f"need T >= 4 hours per station, got {T}")
    t = np.arange(1, T + 1, dtype=np.float64)
    tc = within(t)
    S = float(tc @ tc)  # t'Mt
    Yc = within(Y)
    slope = Yc @ tc / S
    resid = Yc - slope[:, None] * tc[None, :]
    sigma2 = (resid**2).sum(axis=1) / (T - 2)
    intercept = Y.mean(axis=1) - slope * t.mean()

    keep = sigma2 > 0
    excluded = tuple(s for s, ok in zip(ids, keep) if not ok)
    for s in excluded:
        log.warning("station %s has zero residual variance; excluded", s)
    if keep.sum() < 1:
        raise DataError("no station with positive residual variance")
    w = S / sigma2[keep]
    pooled_slope = float((w * slope[keep]).sum() / w.sum())
    pooled_intercept = float((w * intercept[keep]).sum() / w.sum())
    d_i = w * (slope[keep] - pooled_slope) ** 2
    kk = 1 if k is None else int(k)
    n = int(keep.sum())
    d_tilde = float(np.sqrt(n) * np.mean((d_i - kk) / np.sqrt(2 * kk)))
    return HomogeneityResult(
        d_tilde=d_tilde,
        stations=tuple(s for s, ok in zip(ids, keep) if ok),
        intercept=intercept[keep],
        slope=slope[keep],
        sigma2=sigma2[keep],
        d_i=d_i,
        pooled_intercept=pooled_intercept,
        pooled_slope=pooled_slope,
        n_stations=n,
        T=T,
        k=kk,
        excluded=excluded,
    )


def _profile(panel: PanelSeries) -> pd.Series:
    mean = pd.Series(panel.values.mean(axis=0), index=panel.time_index)
    idx = mean.index
    mean = mean[~((idx.month == 2) & (idx.day == 29))]
    keys = mean.index.strftime("%m-%d %H")
    return mean.groupby(keys).mean()


@dataclass(frozen=True)
class ProfileCorrelation:
    r: float
    p_value: float
    n_keys: int


def pearson_profile_correlation(panel: PanelSeries, boundary) -> ProfileCorrelation:
    """Pearson r between station-mean hourly profiles before and after ``boundary``.

    Hours are matched on month-day-hour keys present in both periods.
    """
    b = boundary_index(panel, boundary)
    a, c = _profile(panel.hour_slice(0, b)), _profile(panel.hour_slice(b, panel.n_hours))
    common = a.index.intersection(c.index)
    if len(common) < 3:
        raise DataError(f"only {len(common)} month-day-hour keys shared by both periods")
    x, y = a[common].to_numpy(), c[common].to_numpy()
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DataError("a period profile is constant; correlation undefined")
    r, p = stats.pearsonr(x, y)
    return ProfileCorrelation(float(r), float(p), len(common))
