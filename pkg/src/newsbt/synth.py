"""Seeded synthetic panels with a planted linear news signal.

Each trading day ``t`` draws standard-normal embeddings ``e_{i,t}`` for the
firms with news, and the next-day return is

    r_{i,t+1} = s * (w_t' e_{i,t}) / sqrt(d) + sigma * eps_{i,t+1}

where ``w_t`` is a unit vector that can rotate once per calendar year. All
randomness for day ``t`` comes from ``SeedSequence(seed, spawn_key=(t,))`` so
a day can be regenerated on its own, in any order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ParameterError
from .panel_store import EmbeddingStore, IndexEntry, ReturnPanel
from .variants import VARIANT_ORDER, Variant

#: Extra isotropic noise added on top of the informative embedding, per variant.
DEFAULT_VARIANT_NOISE = {
    Variant.LAST_LAYER: 0.0,
    Variant.ALL_LAYER_MEAN: 0.5,
    Variant.FIRST_LAYER: 1.0,
}


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of a synthetic panel.

    Parameters
    ----------
    seed : int
        Root seed; the whole panel is a pure function of the config.
    n_firms, n_days : int
        Cross-section width and calendar length (business days from ``start``).
    dim : int
        Embedding dimension ``d``.
    s : float
        Signal norm. ``s / sigma`` is the signal-to-noise ratio.
    sigma : float
        Idiosyncratic return noise sd.
    coverage : float
        Probability that a firm has news on a given day.
    rotation : float
        Angle (radians) by which ``w`` turns at each new calendar year; 0 for a
        static signal.
    variants : tuple
        Variants emitted by :func:`generate`.
    variant_noise : tuple, optional
        Noise sd per entry of ``variants``; defaults to 0, 0.5 and 1.0 for the
        last, all-layer-mean and first layer.
    """

    seed: int = 0
    n_firms: int = 200
    n_days: int = 1000
    dim: int = 32
    s: float = 0.04
    sigma: float = 0.02
    coverage: float = 1.0
    rotation: float = 0.0
    start: date = date(2007, 1, 2)
    variants: tuple = VARIANT_ORDER
    variant_noise: tuple | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if not 0 < self.coverage <= 1:
            raise ConfigError(f"coverage must be in (0, 1], got {self.coverage}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.s < 0:
            raise ConfigError(f"signal norm must be >= 0, got {self.s}")
        if self.n_firms < 1 or self.n_days < 2:
            raise ConfigError("need at least one firm and two days")
        variants = tuple(Variant.parse(v) for v in self.variants)
        object.__setattr__(self, "variants", variants)
        if self.variant_noise is None:
            noise = tuple(DEFAULT_VARIANT_NOISE[v] for v in variants)
        else:
            noise = tuple(float(x) for x in self.variant_noise)
            if len(noise) != len(variants):
                raise ConfigError("variant_noise must match variants in length")
        object.__setattr__(self, "variant_noise", noise)

    @classmethod
    def from_snr(cls, snr, sigma=0.02, **kwargs):
        return cls(s=snr * sigma, sigma=sigma, **kwargs)

    @property
    def snr(self):
        return self.s / self.sigma

    def to_json(self):
        rec = asdict(self)
        rec["start"] = self.start.isoformat()
        rec["variants"] = [v.value for v in self.variants]
        rec["variant_noise"] = list(self.variant_noise)
        return rec


@dataclass(eq=False)
class SynthTruth:
    config: SynthConfig
    days: list
    w: np.ndarray  # (n_days, d), the signal direction in force on each news day
    w0: np.ndarray
    plane: np.ndarray  # (2, d) orthonormal pair spanning the rotation plane

    def w_on(self, day):
        return self.w[self.days.index(day)]

    def to_json(self):
        return {
            "config": self.config.to_json(),
            "days": [d.isoformat() for d in self.days],
            "w": self.w.tolist(),
            "w0": self.w0.tolist(),
            "plane": self.plane.tolist(),
        }


class SynthPanel(NamedTuple):
    embeddings: EmbeddingStore
    returns: ReturnPanel
    truth: SynthTruth


def business_days(start: date, n: int) -> list[date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def firm_ids(n):
    return [f"F{i + 1:04d}" for i in range(n)]


def givens(plane, angle):
    """Rotation by ``angle`` in the plane spanned by the orthonormal rows of ``plane``."""
    p, q = plane
    d = p.size
    c, s = math.cos(angle), math.sin(angle)
    G = np.eye(d) + (c - 1.0) * (np.outer(p, p) + np.outer(q, q)) + s * (np.outer(q, p) - np.outer(p, q))
    return G


def _day_rng(seed, t):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(t,))))


def _signal_geometry(cfg):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(2**31,))))
    w0 = rng.standard_normal(cfg.dim)
    w0 /= np.linalg.norm(w0)
    if cfg.dim >= 2:
        q = rng.standard_normal(cfg.dim)
        q -= (q @ w0) * w0
        q /= np.linalg.norm(q)
    else:
        q = np.zeros(1)
    return w0, np.vstack([w0, q])


class _Draws(NamedTuple):
    days: list
    x: np.ndarray  # (T, n, d) base embeddings
    news: np.ndarray  # (T, n) bool
    extra: np.ndarray  # (T, V, n, d) variant noise draws
    returns: np.ndarray  # (T, n)
    w: np.ndarray  # (T, d)
    w0: np.ndarray
    plane: np.ndarray


def _simulate(cfg: SynthConfig, n_extra: int) -> _Draws:
    T, n, d = cfg.n_days, cfg.n_firms, cfg.dim
    days = business_days(cfg.start, T)
    w0, plane = _signal_geometry(cfg)
    y0 = days[0].year
    rotations = {}
    w = np.empty((T, d))
    for t, day in enumerate(days):
        k = day.year - y0
        if k not in rotations:
            rotations[k] = givens(plane, k * cfg.rotation) @ w0 if cfg.rotation and d >= 2 else w0
        w[t] = rotations[k]

    x = np.empty((T, n, d))
    news = np.empty((T, n), dtype=bool)
    extra = np.empty((T, n_extra, n, d))
    eps = np.empty((T, n))
    for t in range(T):
        rng = _day_rng(cfg.seed, t)
        x[t] = rng.standard_normal((n, d))
        news[t] = rng.random(n) < cfg.coverage
        eps[t] = rng.standard_normal(n)
        if n_extra:
            extra[t] = rng.standard_normal((n_extra, n, d))

    signal = np.einsum("tnd,td->tn", x, w) * (cfg.s / math.sqrt(d)) * news
    rets = cfg.sigma * eps
    rets[1:] += signal[:-1]
    return _Draws(days, x, news, extra, rets, w, w0, plane)


def _return_panel(draws: _Draws, firms):
    recs = {}
    for t, day in enumerate(draws.days):
        row = draws.returns[t]
        for i, f in enumerate(firms):
            recs[(f, day)] = float(row[i])
    return ReturnPanel(recs, tuple(draws.days))


def _pack_store(draws: _Draws, firms, layers):
    """``layers`` maps a variant to a ``(T, n, d)`` array of document vectors."""
    t_idx, f_idx = np.nonzero(draws.news)
    variants = list(layers)
    d = draws.x.shape[2]
    mat = np.stack([layers[v][t_idx, f_idx] for v in variants], axis=1).reshape(-1, d).astype(np.float32)
    index = []
    row = 0
    for t, i in zip(t_idx.tolist(), f_idx.tolist()):
        day, firm = draws.days[t], firms[i]
        for v in variants:
            index.append(IndexEntry(firm, day, v, row))
            row += 1
    return EmbeddingStore(mat, tuple(index))


def generate(config: SynthConfig) -> SynthPanel:
    """Embeddings, returns and truth for ``config``; byte-identical for equal configs."""
    V = len(config.variants)
    draws = _simulate(config, V)
    firms = firm_ids(config.n_firms)
    layers = {}
    for k, (v, sd) in enumerate(zip(config.variants, config.variant_noise)):
        layers[v] = draws.x + sd * draws.extra[:, k] if sd else draws.x
    store = _pack_store(draws, firms, layers)
    truth = SynthTruth(config, draws.days, draws.w, draws.w0, draws.plane)
    return SynthPanel(store, _return_panel(draws, firms), truth)


@dataclass(eq=False)
class EnvelopeFixture:
    """Per-vintage stores over one return panel, plus the stitched realtime store.

    ``vintages[v]`` is what a model with knowledge through year ``v`` would
    emit: its coordinates line up with the signal in force during year
    ``v + 1``, and drift away (by ``rotation`` per year) on either side.
    """

    vintages: dict
    realtime: EmbeddingStore
    returns: ReturnPanel
    truth: SynthTruth
    variant: Variant = Variant.LAST_LAYER
    schedule: dict = field(default_factory=dict)  # year -> vintage used by realtime


def realtime_vintage(year, vintages):
    """Latest vintage trained through ``year - 1``; the earliest one if none is that old."""
    older = [v for v in sorted(vintages) if v <= year - 1]
    return older[-1] if older else min(vintages)


def stitch_realtime(vintages, variant=None):
    """Realtime store: for each year ``y``, the slice of vintage ``y - 1``."""
    if not vintages:
        raise ParameterError("no vintages to stitch")
    years = sorted({d.year for st in vintages.values() for _, d in st.keys(variant)})
    items, schedule = [], {}
    for y in years:
        v = realtime_vintage(y, vintages)
        schedule[y] = v
        st = vintages[v]
        for e in st.index:
            if e.date.year == y and (variant is None or e.variant is Variant.parse(variant)):
                items.append(((e.firm_id, e.date, e.variant), st.matrix[e.row]))
    items.sort(key=lambda kv: (kv[0][1], kv[0][0], VARIANT_ORDER.index(kv[0][2])))
    return EmbeddingStore.from_vectors(items, dimension=next(iter(vintages.values())).dimension), schedule


def vintage_envelope_fixture(config: SynthConfig, n_vintages=5, vintage_noise=0.0) -> EnvelopeFixture:
    """Simulate one panel and view it through ``n_vintages`` model vintages.

    Vintages are labelled ``Y0 - 1, ..., Y0 + n_vintages - 2`` where ``Y0`` is
    the first calendar year of the panel, so every year has a ``y - 1``
    vintage for the realtime store. Vintage ``v`` reports ``Q_v x`` with
    ``Q_v`` the rotation by ``-(v - Y0 + 1)`` steps, optionally plus isotropic
    noise of sd ``vintage_noise``.
    """
    if n_vintages < 1:
        raise ConfigError("need at least one vintage")
    n_extra = n_vintages if vintage_noise else 0
    draws = _simulate(config, n_extra)
    firms = firm_ids(config.n_firms)
    y0 = draws.days[0].year
    variant = config.variants[0]
    stores = {}
    for k in range(n_vintages):
        v = y0 - 1 + k
        Q = givens(draws.plane, -(v - y0 + 1) * config.rotation) if config.dim >= 2 else np.eye(1)
        emb = draws.x @ Q.T
        if vintage_noise:
            emb = emb + vintage_noise * draws.extra[:, k]
        stores[v] = _pack_store(draws, firms, {variant: emb})
    realtime, schedule = stitch_realtime(stores, variant)
    truth = SynthTruth(config, draws.days, draws.w, draws.w0, draws.plane)
    return EnvelopeFixture(stores, realtime, _return_panel(draws, firms), truth, variant, schedule)


def write_truth(truth: SynthTruth, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_json(), fh, sort_keys=True)
        fh.write("\n")
