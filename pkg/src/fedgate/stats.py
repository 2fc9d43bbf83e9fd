"""Regression fits and series statistics for the benchmark harness."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateInput

Point = tuple[float, float]


def fit_slope(points: Sequence[Point]) -> float:
    """Least-squares slope of y = kx (no intercept): sum(xy) / sum(x^2)."""
    if not points:
        raise DegenerateInput("no points")
    sxx = sum(x * x for x, _ in points)
    if sxx == 0:
        raise DegenerateInput("all x are zero")
    sxy = sum(x * y for x, y in points)
    return sxy / sxx


def fit_line(points: Sequence[Point]) -> tuple[float, float]:
    """Ordinary least squares (slope, intercept)."""
    if len(points) < 2:
        raise DegenerateInput("need at least two points for an intercept fit")
    n = len(points)
    mx = sum(x for x, _ in points) / n
    my = sum(y for _, y in points) / n
    sxx = sum((x - mx) ** 2 for x, _ in points)
    if sxx == 0:
        raise DegenerateInput("x values are constant")
    sxy = sum((x - mx) * (y - my) for x, y in points)
    slope = sxy / sxx
    return slope, my - slope * mx

def r_squared_through_origin(points: Sequence[Point], slope: float) -> float:
    """Coefficient of determination for a no-intercept fit, using the
    uncentered total sum of squares (the convention no-intercept linear
    model summaries report)."""
    ss_tot = sum(y * y for _, y in points)
    if ss_tot == 0:
        return 1.0
    ss_res = sum((y - slope * x) ** 2 for x, y in points)
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class SeriesStats:
    mean: float
    median: float
    sample_std: float


def series_stats(values: Sequence[float]) -> SeriesStats:
    if not values:
        raise DegenerateInput("empty series")
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return SeriesStats(statistics.fmean(values), statistics.median(values), std)


@dataclass(frozen=True)
class BenchResult:
    sizes_mb: tuple[float, ...]
    native_seconds: tuple[float, ...]
    broker_seconds: tuple[float, ...]
    slope_native: float
    slope_broker: float
    native_stats: SeriesStats
    broker_stats: SeriesStats

    @classmethod
    def from_series(
        cls,
        sizes_mb: Sequence[float],
        native_seconds: Sequence[float],
        broker_seconds: Sequence[float],
    ) -> "BenchResult":
        if not (len(sizes_mb) == len(native_seconds) == len(broker_seconds)):
            raise DegenerateInput("size/native/broker series lengths differ")
        native_pts = list(zip(sizes_mb, native_seconds))
        broker_pts = list(zip(sizes_mb, broker_seconds))
        return cls(
            sizes_mb=tuple(sizes_mb),
            native_seconds=tuple(native_seconds),
            broker_seconds=tuple(broker_seconds),
            slope_native=fit_slope(native_pts),
            slope_broker=fit_slope(broker_pts),
            native_stats=series_stats(native_seconds),
            broker_stats=series_stats(broker_seconds),
        )

    def native_points(self) -> list[Point]:
        return list(zip(self.sizes_mb, self.native_seconds))

    def broker_points(self) -> list[Point]:
        return list(zip(self.sizes_mb, self.broker_seconds))

    def slope_ratio(self) -> float:
        return self.slope_broker / self.slope_native

    def to_csv(self) -> str:
        lines = ["size,native,broker"]
        for s, n, b in zip(self.sizes_mb, self.native_seconds, self.broker_seconds):
            lines.append(f"{s:g},{n:.6g},{b:.6g}")
        return "\n".join(lines) + "\n"
