import json
import math
from datetime import date

import numpy as np
import pytest

from newsbt import cross_ridge as cr
from newsbt.errors import ConfigError, ParameterError
from newsbt.panel_store import write_embedding_store, write_returns
from newsbt.pipeline import RunConfig, run_variant
from newsbt.synth import (
    SynthConfig,
    business_days,
    generate,
    givens,
    realtime_vintage,
    stitch_realtime,
    vintage_envelope_fixture,
    write_truth,
)
from newsbt.variants import Variant

SMALL = dict(n_firms=40, n_days=120, dim=6)


def test_same_config_is_byte_identical(tmp_path):
    for tag in ("a", "b"):
        p = generate(SynthConfig(seed=3, **SMALL))
        write_embedding_store(p.embeddings, tmp_path / f"{tag}.bin")
        write_returns(p.returns, tmp_path / f"{tag}.csv")
        write_truth(p.truth, tmp_path / f"{tag}.json")
    for ext in ("bin", "bin.index.jsonl", "csv", "json"):
        a, b = tmp_path / f"a.{ext}", tmp_path / f"b.{ext}"
        assert a.read_bytes() == b.read_bytes(), ext


def test_different_seed_differs():
    a = generate(SynthConfig(seed=1, **SMALL))
    b = generate(SynthConfig(seed=2, **SMALL))
    assert not np.array_equal(a.embeddings.matrix, b.embeddings.matrix)


def test_config_errors():
    with pytest.raises(ConfigError):
        SynthConfig(dim=0)
    with pytest.raises(ConfigError):
        SynthConfig(coverage=0.0)
    with pytest.raises(ConfigError):
        SynthConfig(sigma=0.0)
    with pytest.raises(ConfigError):
        SynthConfig(s=-1.0)
    with pytest.raises(ConfigError):
        SynthConfig(variants=("last", "mean"), variant_noise=(0.0,))
    with pytest.raises(ConfigError):
        vintage_envelope_fixture(SynthConfig(**SMALL), n_vintages=0)


def test_snr_round_trip():
    cfg = SynthConfig.from_snr(1.5, sigma=0.01)
    assert cfg.s == pytest.approx(0.015) and cfg.snr == pytest.approx(1.5)


def test_business_days_skip_weekends():
    days = business_days(date(2010, 1, 1), 10)  # a Friday
    assert all(d.weekday() < 5 for d in days) and days[1] == date(2010, 1, 4)


def test_returns_follow_the_planted_formula():
    cfg = SynthConfig(seed=5, variants=("last",), **SMALL)
    p = generate(cfg)
    t = 17
    day, nxt = p.truth.days[t], p.truth.days[t + 1]
    # with no variant noise the last-layer vector is the raw embedding
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(5, spawn_key=(t + 1,))))
    rng.standard_normal((cfg.n_firms, cfg.dim))
    rng.random(cfg.n_firms)
    eps = rng.standard_normal(cfg.n_firms)
    for i, f in enumerate(sorted({k[0] for k in p.embeddings.keys()})[:5]):
        e = p.embeddings.vector(f, day, "last").astype(np.float64)
        want = cfg.s * (p.truth.w[t] @ e) / math.sqrt(cfg.dim) + cfg.sigma * eps[i]
        assert p.returns.get(f, nxt) == pytest.approx(want, abs=1e-6)


def test_day_draws_do_not_depend_on_panel_length():
    short = generate(SynthConfig(seed=9, n_firms=20, n_days=30, dim=4))
    long = generate(SynthConfig(seed=9, n_firms=20, n_days=90, dim=4))
    n = short.embeddings.n_rows
    assert np.array_equal(short.embeddings.matrix, long.embeddings.matrix[:n])


def test_coverage_thins_news():
    p = generate(SynthConfig(seed=0, coverage=0.3, variants=("last",), **SMALL))
    frac = len(p.embeddings) / (SMALL["n_firms"] * SMALL["n_days"])
    assert 0.25 < frac < 0.35


def test_givens_is_a_plane_rotation():
    rng = np.random.default_rng(0)
    p = rng.standard_normal(5)
    p /= np.linalg.norm(p)
    q = rng.standard_normal(5)
    q -= (q @ p) * p
    q /= np.linalg.norm(q)
    G = givens(np.vstack([p, q]), 0.7)
    assert np.allclose(G @ G.T, np.eye(5))
    assert G @ p == pytest.approx(math.cos(0.7) * p + math.sin(0.7) * q)
    z = rng.standard_normal(5)
    z -= (z @ p) * p + (z @ q) * q
    assert np.allclose(G @ z, z)


def test_rotation_steps_once_per_year():
    cfg = SynthConfig(seed=0, n_firms=5, n_days=600, dim=4, rotation=0.3, variants=("last",))
    truth = generate(cfg).truth
    years = [d.year for d in truth.days]
    for y in set(years):
        rows = truth.w[[i for i, yy in enumerate(years) if yy == y]]
        assert np.allclose(rows, rows[0])
        k = y - years[0]
        assert rows[0] @ truth.w0 == pytest.approx(math.cos(k * 0.3))


# -- vintages --------------------------------------------------------------


def test_realtime_is_the_year_slices_of_the_prior_vintage():
    cfg = SynthConfig(seed=1, n_firms=15, n_days=800, dim=4, rotation=0.5, variants=("last",))
    fx = vintage_envelope_fixture(cfg, n_vintages=4)
    y0 = fx.truth.days[0].year
    assert sorted(fx.vintages) == [y0 - 1, y0, y0 + 1, y0 + 2]
    for y, v in fx.schedule.items():
        assert v == min(y - 1, y0 + 2)
    for firm, day in fx.realtime.keys():
        src = fx.vintages[fx.schedule[day.year]]
        assert np.array_equal(fx.realtime.vector(firm, day, "last"), src.vector(firm, day, "last"))
    assert len(fx.realtime) == len(fx.vintages[y0])


def test_vintage_aligned_with_its_year():
    cfg = SynthConfig(seed=2, n_firms=10, n_days=300, dim=4, rotation=0.4, variants=("last",))
    fx = vintage_envelope_fixture(cfg, n_vintages=3)
    y0 = fx.truth.days[0].year
    day = fx.truth.days[0]
    firm = next(iter(fx.realtime.keys()))[0]
    # the y0 - 1 vintage is the identity view, so it equals the raw draw
    raw = generate(SynthConfig(seed=2, n_firms=10, n_days=300, dim=4, rotation=0.4, variants=("last",), variant_noise=(0.0,)))
    assert np.array_equal(fx.vintages[y0 - 1].vector(firm, day, "last"), raw.embeddings.vector(firm, day, "last"))


def test_realtime_vintage_rule():
    assert realtime_vintage(2010, [2006, 2008, 2012]) == 2008
    assert realtime_vintage(2009, [2008]) == 2008
    assert realtime_vintage(2005, [2008, 2009]) == 2008
    with pytest.raises(ParameterError):
        stitch_realtime({})


def test_truth_json(tmp_path):
    p = generate(SynthConfig(seed=0, n_firms=3, n_days=5, dim=2))
    write_truth(p.truth, tmp_path / "t.json")
    rec = json.loads((tmp_path / "t.json").read_text())
    assert rec["config"]["seed"] == 0 and len(rec["w"]) == 5 and rec["config"]["start"] == "2007-01-02"


# -- planted recovery ------------------------------------------------------


def _recovery(snr, seed):
    cfg = SynthConfig.from_snr(snr, seed=seed, n_firms=80, n_days=260, dim=6, variants=("last",))
    p = generate(cfg)
    rc = RunConfig(burn_in_start=date(2007, 1, 1), test_start=date(2007, 6, 1), test_end=date(2008, 12, 31), variant_policy="last_layer")
    run = run_variant(p.embeddings, p.returns, p.embeddings.keys("last"), Variant.LAST_LAYER, rc)
    avg = None
    for m in run.models:
        avg = cr.update_average(avg, m)
    b = avg.beta_bar
    return float(b @ p.truth.w0 / np.linalg.norm(b))


def test_recovery_improves_with_signal():
    cos = {snr: np.mean([_recovery(snr, seed) for seed in range(3)]) for snr in (0.5, 1.0, 2.0)}
    assert cos[0.5] < cos[1.0] < cos[2.0], cos
    assert cos[2.0] > 0.9
