import json
import shutil
from datetime import date

import numpy as np
import pytest

from newsbt import cross_ridge as cr
from newsbt.errors import CausalityError, ConfigError, CorruptionError, CoverageError, StageError
from newsbt.panel_store import write_embedding_store, write_returns
from newsbt.pipeline import (
    LEDGER_FILE,
    REALTIME,
    SELECTION_FILE,
    STALE_FILE,
    RunConfig,
    audit,
    backtest,
    check_coverage,
    forecast_file,
    load_config,
    run_pipeline,
    vintage_sweep,
)
from newsbt.report import DECILE_LABELS
from newsbt.sharpe import pairwise_matrix
from newsbt.synth import SynthConfig, generate, vintage_envelope_fixture
from newsbt.variants import Variant

PANEL = dict(seed=4, n_firms=60, n_days=420, dim=6)


def write_run(tmp, **panel):
    p = generate(SynthConfig.from_snr(2.0, **{**PANEL, **panel}))
    tmp.mkdir(parents=True, exist_ok=True)
    write_returns(p.returns, tmp / "returns.csv")
    write_embedding_store(p.embeddings, tmp / "embeddings.bin")
    (tmp / "run.ini").write_text(
        "[paths]\nreturns = returns.csv\nembeddings = embeddings.bin\noutput_dir = run\n\n[sample]\ntest_start = 2007-07-01\n"
    )
    return p


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipe")
    write_run(base)
    report = run_pipeline(load_config(base / "run.ini"))
    return base / "run", report


# -- config ----------------------------------------------------------------


def test_load_config_resolves_relative_paths(tmp_path):
    (tmp_path / "a.ini").write_text(
        "[paths]\nreturns = r.csv\n[sample]\ntest_start = 2009-01-01\n[model]\nlambda_grid = 0.1,1,10\n"
        "[stats]\nbandwidth = auto\nsr_test = bootstrap\n[run]\nseed = 7\n[vintages]\n2008 = v8.bin\n"
    )
    cfg = load_config(tmp_path / "a.ini", seed=9)
    assert cfg.returns == tmp_path / "r.csv"
    assert cfg.test_start == date(2009, 1, 1) and cfg.lambda_grid == (0.1, 1.0, 10.0)
    assert cfg.bandwidth is None and cfg.sr_test == "bootstrap" and cfg.seed == 9
    assert cfg.vintages == (("2008", tmp_path / "v8.bin"),)


@pytest.mark.parametrize(
    "text",
    [
        "[colours]\nx = 1\n",
        "[model]\nmystery = 1\n",
        "[sample]\ntest_start = next tuesday\n",
        "[sample]\ntest_start = 2006-01-01\n",
        "[model]\nvariant_policy = middle_layer\n",
        "[model]\nlambda_grid = 10,1\n",
        "[stats]\nsr_test = t\n",
        "[stats]\nbootstrap_draws = 100\n",
        "not an ini file",
    ],
)
def test_bad_configs(tmp_path, text):
    (tmp_path / "bad.ini").write_text(text)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.ini")


# -- backtest --------------------------------------------------------------


@pytest.fixture(scope="module")
def small():
    p = generate(SynthConfig.from_snr(2.0, **PANEL))
    cfg = RunConfig(test_start=date(2007, 7, 1))
    return p, cfg, backtest(p.embeddings, p.returns, cfg)


def test_forecasts_only_use_earlier_months(small):
    _, _, res = small
    for run in res.runs.values():
        fitted = [m.month for m in run.models]
        for rec in run.provenance:
            assert rec["model_months"] == [m for m in fitted if m < rec["forecast_month"]]
        first = cr.month_key(run.forecasts[0].trading_day)
        assert first > fitted[0]


def test_forecast_equals_running_average(small):
    p, _, res = small
    run = res.runs[Variant.LAST_LAYER]
    day = run.forecasts[40]
    month = cr.month_key(day.trading_day)
    used = [m for m in run.models if m.month < month]
    alpha = np.mean([m.alpha for m in used])
    beta = np.mean([m.beta for m in used], axis=0)
    X = np.stack([p.embeddings.vector(f, day.trading_day, "last") for f in day.firm_ids]).astype(np.float64)
    assert np.allclose(day.predictions, alpha + X @ beta, atol=1e-10)


def test_realtime_selection_is_causal(small):
    _, cfg, res = small
    sels = {s.year: s for s in res.selections}
    # the first test year has no earlier test history and gets the default
    assert sels[2007].variant is Variant.ALL_LAYER_MEAN and sels[2007].history_end is None
    assert sels[2008].history_end < date(2008, 1, 1)
    assert res.headline_name == REALTIME


def test_planted_signal_has_positive_sharpe(small):
    _, _, res = small
    assert res.hl_sr > 3
    assert res.self_test_p == 0.5


def test_fixed_variant_missing_from_store(small):
    p, _, _ = small
    only_last = p.embeddings.subset(lambda e: e.variant is Variant.LAST_LAYER)
    with pytest.raises(CoverageError):
        backtest(only_last, p.returns, RunConfig(test_start=date(2007, 7, 1), variant_policy="first"))


def test_threads_do_not_change_results(small):
    p, cfg, res = small
    res4 = backtest(p.embeddings, p.returns, RunConfig(test_start=date(2007, 7, 1), threads=4))
    assert res4.hl_sr == res.hl_sr
    assert np.array_equal(res4.selected.hl, res.selected.hl)


# -- end to end ------------------------------------------------------------


def test_artifacts_present(run_dir):
    out, _ = run_dir
    for name in (LEDGER_FILE, SELECTION_FILE, "perf.json", "report.json", "decile_table.csv", "decay.csv", "pmatrix.csv", "decay.svg"):
        assert (out / name).exists(), name
    for v in Variant:
        assert (out / forecast_file(v)).exists()
        assert (out / f"deciles_{v.value}.csv").exists()
    assert not (out / STALE_FILE).exists()


def test_decile_table_shape(run_dir):
    out, report = run_dir
    rows = (out / "decile_table.csv").read_text().splitlines()
    assert len(rows) == 12 and [r.split(",")[0] for r in rows[1:]] == DECILE_LABELS
    header = rows[0].split(",")
    col = header.index(f"{REALTIME} sr")
    hl = report.perf[REALTIME]["hl"]
    assert rows[-1].split(",")[col - 2 : col + 1] == [f"{hl.mean:.2f}", f"{hl.sd:.2f}", f"{hl.sr:.2f}"]


def test_pmatrix_and_decay_outputs(run_dir):
    out, _ = run_dir
    lines = (out / "pmatrix.csv").read_text().splitlines()
    names = lines[0].split(",")[1:]
    for i, line in enumerate(lines[1:]):
        assert line.split(",")[i + 1] == ""
    assert len(names) == 4 and REALTIME in names
    svg = (out / "decay.svg").read_text()
    assert svg.startswith("<svg") and svg.count('class="point"') == 7
    assert len((out / "decay.csv").read_text().splitlines()) == 8


def test_report_json_records_hashes(run_dir):
    out, report = run_dir
    rec = json.loads((out / "report.json").read_text())
    assert rec["headline"]["series"] == REALTIME and rec["headline"]["hl_sr"] == report.hl_sr
    assert set(rec["artifacts"]) >= {LEDGER_FILE, "decile_table.csv", "decay.svg"}
    assert "returns" in rec["inputs"] and "embeddings" in rec["inputs"]


def test_rerun_is_byte_identical(run_dir):
    out, _ = run_dir
    before = (out / "report.json").read_bytes()
    run_pipeline(load_config(out.parent / "run.ini"))
    assert (out / "report.json").read_bytes() == before


def test_audit_passes(run_dir):
    out, _ = run_dir
    rec = audit(out).to_json()
    assert rec["ok"] and rec["variants"] == sorted(v.value for v in Variant)
    assert rec["forecast_rows"] > 0


def _copy(run_dir, tmp_path):
    out, _ = run_dir
    dst = tmp_path / "copy"
    shutil.copytree(out, dst)
    return dst


def test_audit_rejects_self_referencing_month(run_dir, tmp_path):
    dst = _copy(run_dir, tmp_path)
    lines = (dst / LEDGER_FILE).read_text().splitlines()
    for i, line in enumerate(lines):
        rec = json.loads(line)
        if rec["kind"] == "forecast" and len(rec["model_months"]) > 2:
            rec["model_months"].append(rec["forecast_month"])
            lines[i] = json.dumps(rec, sort_keys=True)
            break
    (dst / LEDGER_FILE).write_text("\n".join(lines) + "\n")
    (dst / "report.json").unlink()
    with pytest.raises(CausalityError):
        audit(dst)


def test_audit_rejects_unexplained_forecasts(run_dir, tmp_path):
    dst = _copy(run_dir, tmp_path)
    lines = (dst / LEDGER_FILE).read_text().splitlines()
    drop = next(i for i, l in enumerate(lines) if json.loads(l)["kind"] == "forecast")
    (dst / LEDGER_FILE).write_text("\n".join(lines[:drop] + lines[drop + 1 :]) + "\n")
    (dst / "report.json").unlink()
    with pytest.raises(CausalityError):
        audit(dst)


def test_audit_rejects_late_selection(run_dir, tmp_path):
    dst = _copy(run_dir, tmp_path)
    sels = [json.loads(l) for l in (dst / SELECTION_FILE).read_text().splitlines()]
    sels[-1]["history_end"] = f"{sels[-1]['year']}-02-01"
    (dst / SELECTION_FILE).write_text("".join(json.dumps(s) + "\n" for s in sels))
    (dst / "report.json").unlink()
    with pytest.raises(CausalityError):
        audit(dst)


def test_audit_detects_tampered_artifact(run_dir, tmp_path):
    dst = _copy(run_dir, tmp_path)
    with open(dst / "decile_table.csv", "a") as fh:
        fh.write("extra\n")
    with pytest.raises(CorruptionError):
        audit(dst)


def test_failure_marks_stale(tmp_path):
    write_run(tmp_path)
    run_pipeline(load_config(tmp_path / "run.ini"))
    (tmp_path / "embeddings.bin").write_bytes(b"XXXX" + (tmp_path / "embeddings.bin").read_bytes()[4:])
    with pytest.raises(StageError) as info:
        run_pipeline(load_config(tmp_path / "run.ini"))
    assert info.value.stage == "embed" and info.value.exit_code == 3
    stale = json.loads((tmp_path / "run" / STALE_FILE).read_text())
    assert stale["stage"] == "embed" and "report.json" in stale["stale_artifacts"]


def test_missing_returns_is_io_stage_error(tmp_path):
    cfg = RunConfig(returns=tmp_path / "nope.csv", embeddings=tmp_path / "e.bin", output_dir=tmp_path / "out")
    with pytest.raises(StageError) as info:
        run_pipeline(cfg)
    assert info.value.stage == "ingest" and info.value.exit_code == 5


# -- vintage sweep ---------------------------------------------------------


@pytest.fixture(scope="module")
def envelope():
    cfg = SynthConfig.from_snr(1.0, seed=0, n_firms=60, n_days=780, dim=6, rotation=np.pi / 4, variants=("last",))
    fx = vintage_envelope_fixture(cfg, n_vintages=3)
    rc = RunConfig(test_start=date(2008, 1, 1), variant_policy="last_layer")
    return fx, rc


def test_sweep_labels_are_chronological(envelope):
    fx, rc = envelope
    stores = {str(k): fx.vintages[k] for k in sorted(fx.vintages, reverse=True)}
    sw = vintage_sweep(rc, fx.returns, stores)
    assert sw.labels == [str(k) for k in sorted(fx.vintages)]
    assert set(sw.sr) == set(sw.labels) | {REALTIME}
    assert sw.schedule == {y: str(v) for y, v in fx.schedule.items()}
    assert sw.sr[REALTIME] >= sw.envelope_max - 0.25


def test_single_vintage_equals_realtime(envelope):
    fx, rc = envelope
    only = {"2007": fx.vintages[2007]}
    sw = vintage_sweep(rc, fx.returns, only)
    assert sw.sr["2007"] == sw.sr[REALTIME]


def test_coverage_error_names_the_vintage(envelope):
    fx, rc = envelope
    thin = fx.vintages[2007].subset(lambda e: e.date < date(2008, 3, 1))
    with pytest.raises(CoverageError, match="2007"):
        check_coverage("2007", thin, fx.returns, rc)
    with pytest.raises(CoverageError, match="2007"):
        vintage_sweep(rc, fx.returns, {"2006": fx.vintages[2006], "2007": thin})


@pytest.mark.slow
def test_null_envelope_vintages_indistinguishable():
    # no rotation: the vintages differ only by independent embedding noise
    rc = RunConfig(test_start=date(2008, 1, 1), variant_policy="last_layer")
    tests = passed = 0
    for seed in range(20):
        cfg = SynthConfig.from_snr(1.0, seed=seed, n_firms=60, n_days=780, dim=6, variants=("last",))
        fx = vintage_envelope_fixture(cfg, n_vintages=5, vintage_noise=0.5)
        hl = {str(k): backtest(s, fx.returns, rc).selected.hl for k, s in fx.vintages.items()}
        off = pairwise_matrix(hl).p[~np.eye(5, dtype=bool)]
        tests += off.size
        passed += int((off > 0.05).sum())
    assert passed / tests >= 0.90, passed / tests
