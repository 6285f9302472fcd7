"""Monthly cross-sectional ridge regressions and their expanding average.

Each month pools every (firm, day) pair ``(e_{i,t}, r_{i,t+1})`` whose day
``t`` falls in that month, standardizes the features, picks the ridge penalty
by exact leave-one-out error, and stores the fit in raw feature coordinates.
Forecasts for month ``m'`` use the plain average of all earlier monthly fits.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    LeverageError,
    MonthSkipped,
    NoValidLambdaError,
    OrderingError,
    ParameterError,
    ParseError,
    RankDeficiencyError,
    ShapeError,
)

#: 10^-10, 10^-9, ..., 10^10
DEFAULT_LAMBDA_GRID = tuple(float(10.0**k) for k in range(-10, 11))
MIN_OBS_PER_MONTH = 30
LEVERAGE_TOL = 1e-12
TIE_RTOL = 1e-15


def month_key(day: date) -> str:
    return f"{day.year:04d}-{day.month:02d}"


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    mean: np.ndarray
    scale: np.ndarray
    zero_variance: np.ndarray

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d), np.zeros(d, dtype=bool))


def standardize(X):
    """Demean each column and scale it to unit sample standard deviation.

    Columns with no variation are left unscaled (scale 1), set to exactly
    zero, and flagged in ``stats.zero_variance``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ShapeError(f"standardize needs an (n >= 2, d) matrix, got {X.shape}")
    mean = X.mean(axis=0)
    Xc = X - mean
    sd = Xc.std(axis=0, ddof=1)
    flat = ~(sd > 1e-14 * np.maximum(1.0, np.abs(mean)))
    scale = np.where(flat, 1.0, sd)
    Xs = Xc / scale
    Xs[:, flat] = 0.0
    return Xs, StandardizationStats(mean, scale, flat)


class _RidgeSVD:
    """Thin SVD of the centred design, reused across a penalty grid."""

    def __init__(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ShapeError(f"X {X.shape} and y {y.shape} do not conform")
        self.n, self.d = X.shape
        self.x_mean = X.mean(axis=0)
        self.y_mean = y.mean()
        self.y = y
        self.yc = y - self.y_mean
        U, s, Vt = np.linalg.svd(X - self.x_mean, full_matrices=False)
        tol = (s[0] if s.size else 0.0) * max(self.n, self.d) * np.finfo(float).eps
        self.rank = int((s > tol).sum())
        keep = s > tol
        self.U, self.s, self.Vt = U[:, keep], s[keep], Vt[keep]
        self.Uty = self.U.T @ self.yc

    def _shrink(self, lam):
        if lam < 0:
            raise ParameterError(f"ridge penalty must be >= 0, got {lam}")
        if lam == 0 and self.rank < self.d:
            raise RankDeficiencyError(f"design has rank {self.rank} < {self.d} at lambda = 0")
        s2 = self.s**2
        return s2 / (s2 + lam)

    def coef(self, lam):
        self._shrink(lam)
        beta = self.Vt.T @ (self.s / (self.s**2 + lam) * self.Uty)
        alpha = self.y_mean - self.x_mean @ beta
        return alpha, beta

    def loo(self, lam):
        f = self._shrink(lam)
        fitted = self.y_mean + self.U @ (f * self.Uty)
        h = 1.0 / self.n + (self.U**2) @ f
        if np.any(h >= 1.0 - LEVERAGE_TOL):
            raise LeverageError(f"leverage {h.max():.15g} is degenerate at lambda = {lam:g}")
        e = (self.y - fitted) / (1.0 - h)
        return float(np.mean(e**2))


def fit_ridge(X_std, y, lam):
    """Ridge fit with an unpenalized intercept.

    Returns ``(alpha, beta)`` such that predictions are ``alpha + X_std @ beta``;
    ``beta = (Xc'Xc + lam I)^-1 Xc'yc`` on column-centred data.
    """
    return _RidgeSVD(X_std, y).coef(float(lam))


def loo_mse(X_std, y, lam):
    """Exact leave-one-out mean squared error via ``e_i / (1 - h_ii)``.

    The hat matrix includes the unpenalized intercept, so refitting without
    observation ``i`` re-estimates the intercept as well.
    """
    return _RidgeSVD(X_std, y).loo(float(lam))


def _select(path: _RidgeSVD, grid):
    grid = [float(g) for g in grid]
    if not grid:
        raise ParameterError("lambda grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("lambda grid must be strictly ascending")
    best = None
    for lam in grid:
        try:
            mse = path.loo(lam)
        except (LeverageError, RankDeficiencyError):
            continue
        # ascending grid: a later lambda wins any tie, i.e. the largest shrinkage
        if best is None or mse <= best[1] + TIE_RTOL * abs(best[1]):
            best = (lam, mse)
    if best is None:
        raise NoValidLambdaError("every grid lambda hit a leverage or rank failure")
    return best


def select_lambda(X_std, y, grid=DEFAULT_LAMBDA_GRID):
    """Grid penalty with the smallest leave-one-out error (ties go to the larger)."""
    return _select(_RidgeSVD(X_std, y), grid)[0]


@dataclass(frozen=True, eq=False)
class MonthDesign:
    month: str
    X: np.ndarray
    y: np.ndarray
    rows: Sequence[tuple[str, date]] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ShapeError(f"{self.month}: X {X.shape} and y {y.shape} do not conform")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ShapeError(f"{self.month}: non-finite design entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]


@dataclass(frozen=True, eq=False)
class CrossSectionModel:
    month: str
    alpha: float
    beta: np.ndarray
    lam: float
    loo_mse: float
    n: int
    stats: StandardizationStats
    alpha_std: float
    beta_std: np.ndarray

    def predict(self, X):
        return self.alpha + np.asarray(X, dtype=np.float64) @ self.beta

    def to_json(self, **extra):
        rec = {
            "month": self.month,
            "alpha": self.alpha,
            "beta": [float(b) for b in self.beta],
            "lambda": self.lam,
            "loo_mse": self.loo_mse,
            "n": self.n,
        }
        rec.update(extra)
        return rec


def fit_month(design: MonthDesign, grid=DEFAULT_LAMBDA_GRID, min_obs=MIN_OBS_PER_MONTH, standardize_features=True):
    """Fit one month's cross-section; raise :class:`MonthSkipped` if too thin."""
    if design.n < max(min_obs, 2):
        raise MonthSkipped(design.month, f"n={design.n} below threshold {min_obs}")
    if standardize_features:
        Xs, stats = standardize(design.X)
    else:
        Xs, stats = design.X, StandardizationStats.identity(design.X.shape[1])
    path = _RidgeSVD(Xs, design.y)
    lam, mse = _select(path, grid)
    alpha_s, beta_s = path.coef(lam)
    beta = beta_s / stats.scale
    alpha = alpha_s - float(np.sum(beta_s * stats.mean / stats.scale))
    return CrossSectionModel(
        month=design.month,
        alpha=float(alpha),
        beta=beta,
        lam=lam,
        loo_mse=mse,
        n=design.n,
        stats=stats,
        alpha_std=float(alpha_s),
        beta_std=beta_s,
    )


@dataclass(frozen=True, eq=False)
class AveragedModel:
    """Equal-weight average of all monthly fits so far (raw coordinates)."""

    months: tuple[str, ...]
    alpha_sum: float
    beta_sum: np.ndarray

    @property
    def months_used(self):
        return len(self.months)

    @property
    def alpha_bar(self):
        return self.alpha_sum / self.months_used

    @property
    def beta_bar(self):
        return self.beta_sum / self.months_used

    @property
    def last_month(self):
        return self.months[-1]

    def usable_for(self, month: str) -> bool:
        """True when every averaged month strictly precedes ``month``."""
        return self.last_month < month


def update_average(prior: AveragedModel | None, new_model: CrossSectionModel) -> AveragedModel:
    beta = np.asarray(new_model.beta, dtype=np.float64)
    if prior is None:
        return AveragedModel((new_model.month,), float(new_model.alpha), beta.copy())
    if not new_model.month > prior.last_month:
        raise OrderingError(f"month {new_model.month} is not after {prior.last_month}")
    if beta.shape != prior.beta_sum.shape:
        raise ShapeError(f"beta of length {beta.size} vs averaged length {prior.beta_sum.size}")
    return AveragedModel(
        prior.months + (new_model.month,),
        prior.alpha_sum + float(new_model.alpha),
        prior.beta_sum + beta,
    )


def predict(avg: AveragedModel, e) -> float:
    e = np.asarray(e, dtype=np.float64)
    if e.shape != avg.beta_sum.shape:
        raise ShapeError(f"embedding of shape {e.shape}, model expects {avg.beta_sum.shape}")
    return float(avg.alpha_bar + avg.beta_bar @ e)


def predict_many(avg: AveragedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != avg.beta_sum.shape[0]:
        raise ShapeError(f"design of shape {X.shape}, model expects d={avg.beta_sum.shape[0]}")
    return avg.alpha_bar + X @ avg.beta_bar


# -- ledgers ---------------------------------------------------------------


def write_model_ledger(models: Iterable[CrossSectionModel], path, **extra):
    with open(path, "w", encoding="utf-8") as fh:
        for m in models:
            fh.write(json.dumps(m.to_json(**extra), sort_keys=True) + "\n")


def read_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
    return out


FORECAST_HEADER = ["firm_id", "date", "prediction"]


def write_forecasts(rows: Iterable[tuple[str, date, float]], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_HEADER)
        for firm, day, pred in rows:
            w.writerow([firm, day.isoformat(), repr(float(pred))])


def read_forecasts(path) -> list[tuple[str, date, float]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FORECAST_HEADER:
            raise ParseError(f"expected header {','.join(FORECAST_HEADER)}", line=1, path=path)
        for row in reader:
            if not row:
                continue
            try:
                firm, day, pred = row
                value = float(pred)
                if not math.isfinite(value):
                    raise ValueError("non-finite prediction")
                rows.append((firm, date.fromisoformat(day), value))
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num, path=path) from None
    return rows


def count_forecasts_by_month(path) -> Counter:
    """Rows per ``YYYY-MM`` in a forecasts CSV, without materializing the rows."""
    counts = Counter()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != FORECAST_HEADER:
            raise ParseError(f"expected header {','.join(FORECAST_HEADER)}", line=1, path=path)
        for row in reader:
            if not row:
                continue
            try:
                _, day, _ = row
                date.fromisoformat(day)
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num, path=path) from None
            counts[day[:7]] += 1
    return counts
