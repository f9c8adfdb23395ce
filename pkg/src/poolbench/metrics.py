"""Interval forecast scores: coverage, normalised width and median MSE."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError

REPORT_COLUMNS = ("dgp", "scheme", "scope", "picp", "pinaw", "mse_median", "crossing_rate", "n")


@dataclass(frozen=True)
class ForecastTriplet:
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=np.float64).ravel() for a in (self.lower, self.median, self.upper, self.y)]
        n = len(arrs[3])
        if any(len(a) != n for a in arrs):
            raise DataError("lower, median, upper and y must have equal lengths")
        if n == 0:
            raise DataError("empty forecast set")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise DataError("non-finite forecast or observation")
        for name, a in zip(("lower", "median", "upper", "y"), arrs):
            object.__setattr__(self, name, a)

    @property
    def N(self) -> int:
        return len(self.y)

    def concat(self, other: "ForecastTriplet") -> "ForecastTriplet":
        return ForecastTriplet(
            np.concatenate([self.lower, other.lower]),
            np.concatenate([self.median, other.median]),
            np.concatenate([self.upper, other.upper]),
            np.concatenate([self.y, other.y]),
        )


def picp(t: ForecastTriplet) -> float:
    """Share of observations inside the closed interval [lower, upper]."""
    return float(np.mean((t.y >= t.lower) & (t.y <= t.upper)))


def pinaw(t: ForecastTriplet) -> float:
    """Mean (upper - lower) over the observed range of ``t.y``.

    Crossed rows contribute their negative width.
    """
    rng = t.y.max() - t.y.min()
    if rng <= 0:
        raise DataError("PINAW undefined: observed values have zero range")
    return float(np.mean(t.upper - t.lower) / rng)


def mse_median(t: ForecastTriplet) -> float:
    return float(np.mean((t.y - t.median) ** 2))


def crossing_rate(t: ForecastTriplet) -> float:
    return float(np.mean(t.upper < t.lower))


@dataclass(frozen=True)
class IntervalReport:
    dgp: str
    scheme: str
    scope: str
    picp: float
    pinaw: float
    mse_median: float
    crossing_rate: float
    n: int

    def as_row(self) -> dict:
        return asdict(self)


def evaluate(t: ForecastTriplet, scope: str, scheme: str = "", dgp: str = "") -> IntervalReport:
    return IntervalReport(dgp, scheme, str(scope), picp(t), pinaw(t), mse_median(t), crossing_rate(t), t.N)
