"""Robust tests for the difference of two Sharpe ratios.

The default test is the HAC delta method: the Sharpe difference is a smooth
function of the first two moments of both series, whose long-run covariance
is estimated with a Parzen kernel. A studentized circular block bootstrap of
the same statistic is available for robustness checks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .errors import AlignmentError, DegenerateError, InsufficientSampleError, ParameterError
from .portfolio import TRADING_DAYS, annualize

MIN_T = 60
PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PairedSeries:
    a: np.ndarray
    b: np.ndarray
    dates: Sequence | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim != 1 or a.shape != b.shape:
            raise AlignmentError(f"paired series must be 1-D of equal length, got {a.shape} and {b.shape}")
        if self.dates is not None and len(self.dates) != a.size:
            raise AlignmentError("dates do not match series length")
        if a.size < MIN_T:
            raise InsufficientSampleError(f"need at least {MIN_T} paired observations, got {a.size}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise AlignmentError("paired series contain non-finite values")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def T(self):
        return self.a.size


def _as_pair(pair) -> PairedSeries:
    if isinstance(pair, PairedSeries):
        return pair
    a, b = pair
    return PairedSeries(a, b)


@dataclass(frozen=True)
class SharpeTestResult:
    delta: float
    se: float
    z: float
    p_one_sided: float
    method: str = "hac"
    bandwidth: int | None = None
    draws: int | None = None
    block_length: int | None = None

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def sharpe_delta(pair) -> float:
    """Annualized ``SR_a - SR_b``."""
    pair = _as_pair(pair)
    return annualize(pair.a).sr - annualize(pair.b).sr


def auto_bandwidth(T: int) -> int:
    return int(math.floor(1.3 * T ** (1.0 / 3.0)))


def parzen(x):
    x = np.abs(np.asarray(x, dtype=np.float64))
    return np.where(x <= 0.5, 1 - 6 * x**2 + 6 * x**3, np.where(x <= 1.0, 2 * (1 - x) ** 3, 0.0))


def psd_repair(mat, tol=PSD_TOL):
    """Symmetrize and clip tiny negative eigenvalues to zero.

    Eigenvalues below ``-tol * max|eigenvalue|`` mean the input was not a
    covariance estimate, and raise :class:`DegenerateError`.
    """
    sym = 0.5 * (mat + mat.T)
    w, V = np.linalg.eigh(sym)
    scale = max(np.abs(w).max(), np.finfo(float).tiny)
    if w.min() >= 0:
        return sym
    if w.min() < -tol * scale:
        raise DegenerateError(f"long-run covariance has eigenvalue {w.min():.3g}")
    return (V * np.clip(w, 0.0, None)) @ V.T


def hac_long_run_cov(psi, bandwidth: int):
    """Parzen-weighted long-run covariance of the rows of ``psi``.

    ``psi`` is ``(T, k)`` and assumed demeaned. Lag ``j`` gets weight
    ``parzen(j / (bandwidth + 1))`` for ``j = 1..bandwidth``; bandwidth 0 is
    the plain ``1/T`` sample covariance.
    """
    psi = np.asarray(psi, dtype=np.float64)
    T = psi.shape[0]
    bandwidth = int(bandwidth)
    if bandwidth < 0 or bandwidth >= T:
        raise ParameterError(f"bandwidth must satisfy 0 <= bandwidth < T={T}, got {bandwidth}")
    omega = psi.T @ psi / T
    for j in range(1, bandwidth + 1):
        w = float(parzen(j / (bandwidth + 1)))
        if w == 0.0:
            continue
        gamma = psi[j:].T @ psi[:-j] / T
        omega += w * (gamma + gamma.T)
    return psd_repair(omega)


def _moments(a, b):
    mu_a, mu_b = a.mean(), b.mean()
    g_a, g_b = (a * a).mean(), (b * b).mean()
    return mu_a, mu_b, g_a, g_b


def _gradient(mu_a, mu_b, g_a, g_b):
    va, vb = g_a - mu_a**2, g_b - mu_b**2
    if not (va > 0 and vb > 0):
        raise DegenerateError("zero variance in one of the series")
    return np.array([g_a / va**1.5, -g_b / vb**1.5, -mu_a / (2 * va**1.5), mu_b / (2 * vb**1.5)])


def _se_daily(a, b, bandwidth):
    T = a.size
    mu_a, mu_b, g_a, g_b = _moments(a, b)
    grad = _gradient(mu_a, mu_b, g_a, g_b)
    psi = np.column_stack([a - mu_a, b - mu_b, a * a - g_a, b * b - g_b])
    omega = hac_long_run_cov(psi, bandwidth)
    var = float(grad @ omega @ grad) / T
    return math.sqrt(max(var, 0.0))


def _canonical(a, b):
    """Order a pair so the symmetric standard error is computed identically both ways."""
    return (a, b) if a.tobytes() <= b.tobytes() else (b, a)


def lw_test(pair, *, bandwidth: int | None = None) -> SharpeTestResult:
    """One-sided HAC delta-method test of H0: SR_a <= SR_b.

    ``p(a, b) + p(b, a) == 1`` because the standard error is symmetric in the
    pair and the statistic is antisymmetric.
    """
    pair = _as_pair(pair)
    T = pair.T
    bw = auto_bandwidth(T) if bandwidth is None else int(bandwidth)
    delta = sharpe_delta(pair)
    se = math.sqrt(TRADING_DAYS) * _se_daily(*_canonical(pair.a, pair.b), bw)
    if se > 0:
        z = delta / se
    elif delta == 0:
        z = 0.0
    else:
        raise DegenerateError("zero standard error for a non-zero Sharpe difference")
    return SharpeTestResult(delta, se, z, float(norm.sf(z)), "hac", bw)


def _block_se_daily(A, B, block_length):
    """Per-draw standard error of the daily SR difference from block sums."""
    n_draws, T = A.shape
    mu_a, mu_b = A.mean(1), B.mean(1)
    g_a, g_b = (A * A).mean(1), (B * B).mean(1)
    va, vb = g_a - mu_a**2, g_b - mu_b**2
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = np.stack([g_a / va**1.5, -g_b / vb**1.5, -mu_a / (2 * va**1.5), mu_b / (2 * vb**1.5)], axis=1)
    psi = np.stack([A - mu_a[:, None], B - mu_b[:, None], A * A - g_a[:, None], B * B - g_b[:, None]], axis=2)
    l = T // block_length
    zeta = psi.reshape(n_draws, l, block_length, 4).sum(axis=2) / math.sqrt(block_length)
    omega = np.einsum("nlk,nlm->nkm", zeta, zeta) / l
    var = np.einsum("nk,nkm,nm->n", grad, omega, grad) / T
    return np.sqrt(np.clip(var, 0.0, None))


def _daily_sr(X):
    return X.mean(axis=1) / X.std(axis=1, ddof=1)


def lw_bootstrap_test(pair, draws: int = 4999, block_length: int = 5, seed: int = 0, *, bandwidth=None, chunk=256) -> SharpeTestResult:
    """Studentized circular block bootstrap test of H0: SR_a <= SR_b.

    Dates are resampled in blocks so the two series stay synchronized. The
    p-value is ``(#{d* >= d} + 1) / (draws + 1)`` where ``d*`` is the centred
    studentized bootstrap statistic; exact ties count one half. Identical
    ``seed`` gives bit-identical output.
    """
    pair = _as_pair(pair)
    T = pair.T
    if draws < 999:
        raise ParameterError(f"need at least 999 bootstrap draws, got {draws}")
    if not 1 <= block_length < T:
        raise ParameterError(f"block length must satisfy 1 <= b < T={T}, got {block_length}")
    hac = lw_test(pair, bandwidth=bandwidth)
    delta_daily = hac.delta / math.sqrt(TRADING_DAYS)
    se_daily = hac.se / math.sqrt(TRADING_DAYS)
    d_obs = delta_daily / se_daily if se_daily > 0 else 0.0

    n_blocks = -(-T // block_length)
    rng = np.random.Generator(np.random.PCG64(seed))
    starts = rng.integers(0, T, size=(draws, n_blocks))
    offsets = np.arange(block_length)
    above = 0.0
    for lo in range(0, draws, chunk):
        st = starts[lo : lo + chunk]
        idx = ((st[:, :, None] + offsets) % T).reshape(st.shape[0], -1)
        A, B = pair.a[idx], pair.b[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            dstar = _daily_sr(A) - _daily_sr(B)
            se_star = _block_se_daily(A, B, block_length)
            stat = (dstar - delta_daily) / se_star
        stat = np.where(se_star > 0, stat, 0.0)
        stat = np.nan_to_num(stat, nan=0.0)
        above += float(np.sum(stat > d_obs)) + 0.5 * float(np.sum(stat == d_obs))
    p = (above + 1.0) / (draws + 1.0)
    return SharpeTestResult(hac.delta, hac.se, d_obs, min(p, 1.0), "bootstrap", hac.bandwidth, draws, block_length)


@dataclass(eq=False)
class PValueMatrix:
    names: list[str]
    p: np.ndarray
    results: dict = field(default_factory=dict)
    method: str = "hac"

    def get(self, row, col):
        return self.p[self.names.index(row), self.names.index(col)]

    def to_json(self):
        return {
            "method": self.method,
            "names": list(self.names),
            "p": [[None if i == j else float(self.p[i, j]) for j in range(len(self.names))] for i in range(len(self.names))],
        }


def pairwise_matrix(series: Mapping[str, object], method="hac", **kwargs) -> PValueMatrix:
    """One-sided p-values for H0: SR_row <= SR_col over every ordered pair.

    Values of ``series`` are arrays, or ``(dates, values)`` tuples whose date
    grids must match exactly.
    """
    names = list(series)
    arrays, grid = {}, None
    for name in names:
        s = series[name]
        if isinstance(s, tuple) and len(s) == 2:
            dates, vals = s
            dates = list(dates)
            if grid is None:
                grid = dates
            elif dates != grid:
                raise AlignmentError(f"series {name!r} is on a different date grid")
            arrays[name] = np.asarray(vals, dtype=np.float64)
        else:
            arrays[name] = np.asarray(s, dtype=np.float64)
    lengths = {v.size for v in arrays.values()}
    if len(lengths) > 1:
        raise AlignmentError(f"series lengths differ: {sorted(lengths)}")
    k = len(names)
    p = np.full((k, k), np.nan)
    results = {}
    for i, ri in enumerate(names):
        for j, cj in enumerate(names):
            if i == j:
                continue
            pair = PairedSeries(arrays[ri], arrays[cj])
            if method == "hac":
                res = lw_test(pair, bandwidth=kwargs.get("bandwidth"))
            elif method == "bootstrap":
                res = lw_bootstrap_test(pair, **kwargs)
            else:
                raise ParameterError(f"unknown Sharpe test method {method!r}")
            p[i, j] = res.p_one_sided
            results[(ri, cj)] = res
    return PValueMatrix(names, p, results, method)


def write_pmatrix_csv(mat: PValueMatrix, path, decimals=3):
    """Square layout: header of column models, blank diagonal."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + mat.names)
        for i, name in enumerate(mat.names):
            w.writerow([name] + ["" if i == j else f"{mat.p[i, j]:.{decimals}f}" for j in range(len(mat.names))])
