"""Daily decile sorts, long-short spreads, annualized statistics and news decay."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable

import numpy as np

from .errors import DaySkipped, DegenerateError, InsufficientSampleError, ParseError, ShapeError

log = logging.getLogger(__name__)

N_DECILES = 10
MIN_NAMES_PER_DAY = 20
TRADING_DAYS = 252
N_HORIZONS = 7
Z_95 = 1.96

# Remainder names go to the extreme deciles first, then inward.
_REMAINDER_ORDER = (1, 10, 2, 9, 3, 8, 4, 7, 5, 6)


@dataclass(frozen=True, eq=False)
class DailyForecastSet:
    """Forecasts made at the close of ``trading_day`` for every firm with news.

    ``horizon_returns[:, k]`` is the realized return on day ``t + k``
    (``k = 0`` is the news day itself); NaN marks a missing return.
    """

    trading_day: date
    firm_ids: np.ndarray
    predictions: np.ndarray
    realized: np.ndarray
    horizon_returns: np.ndarray | None = None

    def __post_init__(self):
        firms = np.asarray(self.firm_ids).astype(str)
        preds = np.asarray(self.predictions, dtype=np.float64)
        real = np.asarray(self.realized, dtype=np.float64)
        if not (firms.shape == preds.shape == real.shape) or preds.ndim != 1:
            raise ShapeError(f"{self.trading_day}: entry arrays differ in shape")
        if not np.all(np.isfinite(preds)):
            raise ShapeError(f"{self.trading_day}: non-finite predictions")
        if not np.all(np.isfinite(real)):
            raise ShapeError(f"{self.trading_day}: every entry needs a t+1 return")
        object.__setattr__(self, "firm_ids", firms)
        object.__setattr__(self, "predictions", preds)
        object.__setattr__(self, "realized", real)
        if self.horizon_returns is not None:
            hr = np.asarray(self.horizon_returns, dtype=np.float64)
            if hr.ndim != 2 or hr.shape[0] != preds.size:
                raise ShapeError(f"{self.trading_day}: horizon_returns shape {hr.shape}")
            object.__setattr__(self, "horizon_returns", hr)

    def __len__(self):
        return self.predictions.size


def decile_sizes(n: int) -> np.ndarray:
    """Sizes of deciles 1..10 for ``n`` names, differing by at most one."""
    sizes = np.full(N_DECILES, n // N_DECILES, dtype=np.int64)
    for k in _REMAINDER_ORDER[: n % N_DECILES]:
        sizes[k - 1] += 1
    return sizes


def decile_assign(day: DailyForecastSet, min_names=MIN_NAMES_PER_DAY) -> np.ndarray:
    """Decile label 1..10 per entry, ranking by prediction then firm id."""
    n = len(day)
    if n < max(min_names, N_DECILES):
        raise DaySkipped(day.trading_day, f"{n} names, need {max(min_names, N_DECILES)}")
    order = np.lexsort((day.firm_ids, day.predictions))
    labels = np.empty(n, dtype=np.int64)
    labels[order] = np.repeat(np.arange(1, N_DECILES + 1), decile_sizes(n))
    return labels


def daily_decile_returns(labels, returns):
    """Equal-weighted decile returns, their H-L spread, and member counts."""
    labels = np.asarray(labels)
    returns = np.asarray(returns, dtype=np.float64)
    counts = np.bincount(labels, minlength=N_DECILES + 1)[1:]
    assert np.all(counts > 0), "every decile must have members"
    sums = np.bincount(labels, weights=returns, minlength=N_DECILES + 1)[1:]
    means = sums / counts
    return means, means[-1] - means[0], counts


@dataclass(frozen=True)
class PerfStats:
    mean: float
    sd: float
    sr: float
    n_days: int

    def to_json(self):
        return {"mean": self.mean, "sd": self.sd, "sr": self.sr, "n_days": self.n_days}


def annualize(daily) -> PerfStats:
    """Annualized mean and sd in percent (252 days, sample sd) and their ratio."""
    x = np.asarray(daily, dtype=np.float64)
    if x.size < 2:
        raise InsufficientSampleError(f"need at least 2 daily returns, got {x.size}")
    sd_d = x.std(ddof=1)
    # a constant series leaves rounding-level spread; treat it as zero
    if not sd_d > 1e-12 * np.abs(x).max():
        raise DegenerateError("zero variance: Sharpe ratio undefined")
    mean = TRADING_DAYS * x.mean() * 100.0
    sd = math.sqrt(TRADING_DAYS) * sd_d * 100.0
    return PerfStats(float(mean), float(sd), float(mean / sd), int(x.size))


@dataclass(eq=False)
class DecileSeries:
    days: list[date]
    returns: np.ndarray
    hl: np.ndarray
    counts: np.ndarray
    gaps: list[tuple[date, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.days)

    @property
    def n_names(self):
        return self.counts.sum(axis=1)

    def select(self, mask) -> "DecileSeries":
        mask = np.asarray(mask, dtype=bool)
        return DecileSeries(
            [d for d, m in zip(self.days, mask) if m],
            self.returns[mask],
            self.hl[mask],
            self.counts[mask],
            list(self.gaps),
        )

    def between(self, start: date | None, end: date | None) -> "DecileSeries":
        mask = [(start is None or d >= start) and (end is None or d <= end) for d in self.days]
        return self.select(mask)

    def perf(self):
        """PerfStats per decile (1..10) and for H-L."""
        out = {f"d{k + 1}": annualize(self.returns[:, k]) for k in range(N_DECILES)}
        out["hl"] = annualize(self.hl)
        return out


def build_decile_series(forecasts: Iterable[DailyForecastSet], min_names=MIN_NAMES_PER_DAY) -> DecileSeries:
    days, rets, hls, counts, gaps = [], [], [], [], []
    prev = None
    for day in forecasts:
        if prev is not None and not day.trading_day > prev:
            raise ShapeError(f"forecast days out of order at {day.trading_day}")
        prev = day.trading_day
        try:
            labels = decile_assign(day, min_names)
        except DaySkipped as skip:
            log.info("skipping %s: %s", skip.day, skip.reason)
            gaps.append((skip.day, skip.reason))
            continue
        means, hl, cnt = daily_decile_returns(labels, day.realized)
        days.append(day.trading_day)
        rets.append(means)
        hls.append(hl)
        counts.append(cnt)
    return DecileSeries(
        days,
        np.array(rets).reshape(-1, N_DECILES),
        np.array(hls, dtype=np.float64),
        np.array(counts, dtype=np.int64).reshape(-1, N_DECILES),
        gaps,
    )


@dataclass(eq=False)
class DecayCurve:
    horizons: np.ndarray
    mean: np.ndarray
    half_width: np.ndarray
    n_days: np.ndarray
    omitted: list[int] = field(default_factory=list)

    @property
    def ci_low(self):
        return self.mean - self.half_width

    @property
    def ci_high(self):
        return self.mean + self.half_width

    def covers_zero(self):
        return (self.ci_low <= 0.0) & (self.ci_high >= 0.0)


def decay_curve(forecasts: Iterable[DailyForecastSet], min_names=MIN_NAMES_PER_DAY, n_horizons=N_HORIZONS) -> DecayCurve:
    """Annualized H-L mean and 95% normal half-width for holding days 0..6.

    Labels come from the day-``t`` sort; horizon ``k`` realizes returns on
    ``t + k``. A firm missing the horizon-``k`` return drops out of that
    horizon only. Horizons with fewer than two days are omitted (NaN).
    """
    series = [[] for _ in range(n_horizons)]
    for day in forecasts:
        if day.horizon_returns is None:
            raise ShapeError(f"{day.trading_day}: decay needs horizon returns")
        try:
            labels = decile_assign(day, min_names)
        except DaySkipped:
            continue
        lo, hi = labels == 1, labels == N_DECILES
        for k in range(n_horizons):
            r = day.horizon_returns[:, k]
            ok = np.isfinite(r)
            a, b = r[hi & ok], r[lo & ok]
            if a.size and b.size:
                series[k].append(a.mean() - b.mean())

    mean = np.full(n_horizons, np.nan)
    half = np.full(n_horizons, np.nan)
    n_days = np.zeros(n_horizons, dtype=np.int64)
    omitted = []
    for k, s in enumerate(series):
        x = np.asarray(s)
        n_days[k] = x.size
        if x.size < 2:
            omitted.append(k)
            continue
        mean[k] = TRADING_DAYS * x.mean() * 100.0
        # standard error of the annualized mean 252 * xbar * 100
        half[k] = Z_95 * TRADING_DAYS * x.std(ddof=1) / math.sqrt(x.size) * 100.0
    return DecayCurve(np.arange(n_horizons), mean, half, n_days, omitted)


# -- files -----------------------------------------------------------------

DECILE_HEADER = ["date"] + [f"d{k}" for k in range(1, N_DECILES + 1)] + ["hl", "n_names"]


def write_decile_csv(series: DecileSeries, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECILE_HEADER)
        for day, r, hl, n in zip(series.days, series.returns, series.hl, series.n_names):
            w.writerow([day.isoformat()] + [repr(float(x)) for x in r] + [repr(float(hl)), int(n)])


def read_decile_csv(path) -> DecileSeries:
    days, rets, hls, names = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != DECILE_HEADER:
            raise ParseError("unexpected decile header", line=1, path=path)
        for row in reader:
            if not row:
                continue
            try:
                days.append(date.fromisoformat(row[0]))
                rets.append([float(x) for x in row[1 : 1 + N_DECILES]])
                hls.append(float(row[1 + N_DECILES]))
                names.append(int(row[2 + N_DECILES]))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=reader.line_num, path=path) from None
    counts = np.zeros((len(days), N_DECILES), dtype=np.int64)
    for i, n in enumerate(names):
        counts[i] = decile_sizes(n)
    return DecileSeries(days, np.array(rets).reshape(-1, N_DECILES), np.array(hls), counts)


def write_perf_json(perf: dict, path):
    with open(path, "w") as fh:
        json.dump({k: v.to_json() for k, v in perf.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_decay_csv(curve: DecayCurve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["horizon", "mean_annual", "ci_low", "ci_high", "n_days"])
        for k in range(len(curve.horizons)):
            if k in curve.omitted:
                w.writerow([k, "", "", "", int(curve.n_days[k])])
            else:
                w.writerow(
                    [k, f"{curve.mean[k]:.2f}", f"{curve.ci_low[k]:.2f}", f"{curve.ci_high[k]:.2f}", int(curve.n_days[k])]
                )
