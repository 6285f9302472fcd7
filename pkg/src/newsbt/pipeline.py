"""End-to-end backtest: embeddings and returns in, forecasts, portfolios and tests out.

The chain is strictly causal. Month ``m`` is forecast with the average of
the monthly fits for months before ``m`` only, and the realtime variant for
year ``Y`` is picked from H-L history that ends before January 1 of ``Y``.
Every run writes a model ledger recording which months fed which forecasts,
and :func:`audit` re-checks those claims from the files alone.
"""

from __future__ import annotations

import configparser
import contextlib
import csv
import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from datetime import date
from pathlib import Path
from typing import Mapping

import numpy as np

from . import cross_ridge as cr
from .embed_agg import document_vectors, select_variant
from .errors import (
    CausalityError,
    ConfigError,
    CorruptionError,
    CoverageError,
    InsufficientHistoryError,
    MonthSkipped,
    NewsBTError,
    ParameterError,
    StageError,
)
from .panel_store import (
    EmbeddingStore,
    ReturnPanel,
    align_next_day_returns,
    build_firm_days,
    fetch_embeddings_remote,
    load_news,
    load_returns,
    read_embedding_store,
    to_arrays,
    write_embedding_store,
    write_firm_days,
)
from .panel_store.store import index_path_for
from .portfolio import (
    N_HORIZONS,
    DailyForecastSet,
    DecileSeries,
    build_decile_series,
    decay_curve,
    write_decile_csv,
)
from .sharpe import PairedSeries, lw_test, pairwise_matrix
from .variants import DEFAULT_VARIANT, VARIANT_ORDER, Variant

log = logging.getLogger(__name__)

REALTIME = "realtime"
LEDGER_FILE = "model_ledger.jsonl"
SELECTION_FILE = "variant_selection.jsonl"
STALE_FILE = "STALE"


# -- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; defaults follow the 2008-01 to 2023-07 sample with a 2007 burn-in."""

    returns: Path | None = None
    embeddings: Path | None = None
    news: Path | None = None
    endpoint: str | None = None
    output_dir: Path | None = None
    burn_in_start: date = date(2007, 1, 1)
    test_start: date = date(2008, 1, 1)
    test_end: date = date(2023, 7, 31)
    variant_policy: str = REALTIME
    lambda_grid: tuple = cr.DEFAULT_LAMBDA_GRID
    min_obs: int = cr.MIN_OBS_PER_MONTH
    min_names: int = 20
    sr_test: str = "hac"
    bootstrap_draws: int = 4999
    block_length: int = 5
    bandwidth: int | None = None
    seed: int = 0
    threads: int = 1
    vintages: tuple = ()  # ((label, path), ...)

    def __post_init__(self):
        for name in ("returns", "embeddings", "news", "output_dir"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, Path):
                object.__setattr__(self, name, Path(v))
        if isinstance(self.vintages, Mapping):
            object.__setattr__(self, "vintages", tuple(self.vintages.items()))
        object.__setattr__(self, "vintages", tuple((str(k), Path(p)) for k, p in self.vintages))
        object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))
        self.validate()

    def validate(self):
        if not self.burn_in_start < self.test_start <= self.test_end:
            raise ConfigError(
                f"need burn-in start < test start <= test end, got "
                f"{self.burn_in_start}, {self.test_start}, {self.test_end}"
            )
        if self.variant_policy != REALTIME:
            try:
                Variant.parse(self.variant_policy)
            except ValueError:
                raise ConfigError(f"unknown variant policy {self.variant_policy!r}") from None
        if self.sr_test not in ("hac", "bootstrap"):
            raise ConfigError(f"sr_test must be 'hac' or 'bootstrap', got {self.sr_test!r}")
        if self.bootstrap_draws < 999:
            raise ConfigError("bootstrap_draws must be at least 999")
        if self.block_length < 1 or self.threads < 1 or self.min_obs < 2 or self.min_names < 10:
            raise ConfigError("block_length, threads >= 1; min_obs >= 2; min_names >= 10")
        if not self.lambda_grid or any(b <= a for a, b in zip(self.lambda_grid, self.lambda_grid[1:])):
            raise ConfigError("lambda grid must be non-empty and strictly ascending")
        if any(x < 0 for x in self.lambda_grid):
            raise ConfigError("lambda grid values must be >= 0")

    @property
    def fixed_variant(self) -> Variant | None:
        return None if self.variant_policy == REALTIME else Variant.parse(self.variant_policy)

    def to_json(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, date):
                v = v.isoformat()
            elif f.name == "vintages":
                v = [[k, str(p)] for k, p in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_INI_KEYS = {
    "paths": {"returns", "embeddings", "news", "endpoint", "output_dir"},
    "sample": {"burn_in_start", "test_start", "test_end"},
    "model": {"variant_policy", "lambda_grid", "min_obs"},
    "portfolio": {"min_names"},
    "stats": {"sr_test", "bootstrap_draws", "block_length", "bandwidth"},
    "run": {"seed", "threads"},
}


def load_config(path, **overrides) -> RunConfig:
    """Read an INI run config. Relative paths resolve against the file's directory.

    ``overrides`` (e.g. from command-line flags) replace file values when not ``None``.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent
    kw = {}
    for section in parser.sections():
        if section == "vintages":
            continue
        allowed = _INI_KEYS.get(section)
        if allowed is None:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            kw[key] = raw.strip()
    try:
        for key in ("returns", "embeddings", "news", "output_dir"):
            if key in kw:
                kw[key] = base / kw[key]
        for key in ("burn_in_start", "test_start", "test_end"):
            if key in kw:
                kw[key] = date.fromisoformat(kw[key])
        for key in ("min_obs", "min_names", "bootstrap_draws", "block_length", "seed", "threads"):
            if key in kw:
                kw[key] = int(kw[key])
        if "bandwidth" in kw:
            kw["bandwidth"] = None if kw["bandwidth"].lower() in ("", "auto") else int(kw["bandwidth"])
        if "lambda_grid" in kw:
            raw = kw["lambda_grid"]
            kw["lambda_grid"] = cr.DEFAULT_LAMBDA_GRID if raw == "default" else tuple(float(x) for x in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if parser.has_section("vintages"):
        kw["vintages"] = tuple((k, base / v.strip()) for k, v in parser.items("vintages"))
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**kw)


# -- backtest core ---------------------------------------------------------


@dataclass(eq=False)
class VariantRun:
    variant: Variant
    models: list
    skipped: list
    provenance: list  # dicts: forecast_month, model_months, n_forecasts
    forecasts: list  # DailyForecastSet for every forecast day
    dropped: Counter
    n_obs: int

    def deciles(self, min_names, start=None, end=None) -> DecileSeries:
        days = [f for f in self.forecasts if (start is None or f.trading_day >= start) and (end is None or f.trading_day <= end)]
        return build_decile_series(days, min_names)


def _horizon_matrix(returns: ReturnPanel, firm_ids, day_pos, n_horizons=N_HORIZONS):
    _, dense = returns.dense()
    fpos = np.fromiter((returns.firm_position(f) for f in firm_ids), dtype=np.int64, count=len(firm_ids))
    T = dense.shape[1]
    out = np.full((len(firm_ids), n_horizons), np.nan)
    for k in range(n_horizons):
        cols = day_pos + k
        ok = cols < T
        out[ok, k] = dense[fpos[ok], cols[ok]]
    return out


def run_variant(store, returns, docs, variant, cfg: RunConfig, pool=None) -> VariantRun:
    """Expanding Fama-MacBeth forecasts for one variant.

    Monthly fits are independent and may run on ``pool``; the running
    average is then folded strictly in month order.
    """
    alignment = align_next_day_returns(docs, store, returns, variant)
    arr = to_arrays(alignment, store, returns)
    keep = np.array([cfg.burn_in_start <= d <= cfg.test_end for d in arr.days], dtype=bool)
    days = [d for d, k in zip(arr.days, keep) if k]
    firm_ids = arr.firm_ids[keep]
    X, y, day_pos = arr.X[keep], arr.y[keep], arr.day_pos[keep]

    months, bounds = [], []
    for i, d in enumerate(days):
        m = cr.month_key(d)
        if not months or months[-1] != m:
            months.append(m)
            bounds.append(i)
    bounds.append(len(days))
    slices = [slice(bounds[k], bounds[k + 1]) for k in range(len(months))]

    def fit(k):
        design = cr.MonthDesign(months[k], X[slices[k]], y[slices[k]])
        try:
            return cr.fit_month(design, cfg.lambda_grid, cfg.min_obs)
        except MonthSkipped as skip:
            return skip

    fitted = list(pool.map(fit, range(len(months)))) if pool is not None else [fit(k) for k in range(len(months))]

    hz = _horizon_matrix(returns, firm_ids, day_pos) if len(days) else np.zeros((0, N_HORIZONS))
    models, skipped, provenance, forecasts = [], [], [], []
    avg = None
    for k, month in enumerate(months):
        sl = slices[k]
        if avg is not None:
            assert avg.usable_for(month)
            preds = cr.predict_many(avg, X[sl])
            provenance.append({"forecast_month": month, "model_months": list(avg.months), "n_forecasts": int(sl.stop - sl.start)})
            start = sl.start
            while start < sl.stop:
                stop = start
                while stop < sl.stop and days[stop] == days[start]:
                    stop += 1
                forecasts.append(
                    DailyForecastSet(days[start], firm_ids[start:stop], preds[start - sl.start : stop - sl.start], y[start:stop], hz[start:stop])
                )
                start = stop
        res = fitted[k]
        if isinstance(res, MonthSkipped):
            skipped.append(res)
            continue
        models.append(res)
        avg = cr.update_average(avg, res)
    return VariantRun(variant, models, skipped, provenance, forecasts, alignment.dropped, len(days))


@dataclass(eq=False)
class Selection:
    year: int
    variant: Variant
    history_start: date | None
    history_end: date | None
    n_days: int
    reason: str

    def to_json(self):
        return {
            "year": self.year,
            "variant": self.variant.value,
            "history_start": self.history_start.isoformat() if self.history_start else None,
            "history_end": self.history_end.isoformat() if self.history_end else None,
            "n_days": self.n_days,
            "reason": self.reason,
        }


def _common_days(series: Mapping[str, DecileSeries]):
    sets = [set(s.days) for s in series.values()]
    common = set.intersection(*sets) if sets else set()
    return sorted(common)


def _on_days(s: DecileSeries, days):
    want = set(days)
    return s.select([d in want for d in s.days])


def realtime_selection(test_series: Mapping[Variant, DecileSeries], test_start: date, years) -> list[Selection]:
    """Pick a variant at each year start from H-L history over [test_start, Jan 1 of that year)."""
    available = [v for v in VARIANT_ORDER if v in test_series]
    default = DEFAULT_VARIANT if DEFAULT_VARIANT in available else available[0]
    out = []
    for year in years:
        cut = date(year, 1, 1)
        hist = {v: test_series[v].between(test_start, None) for v in available}
        hist = {v: s.select([d < cut for d in s.days]) for v, s in hist.items()}
        grid = _common_days(hist)
        hist = {v: _on_days(s, grid) for v, s in hist.items()}
        try:
            v = select_variant({k: s.hl for k, s in hist.items()})
            reason = "max_sharpe"
        except InsufficientHistoryError:
            v, reason = default, "default"
        out.append(Selection(year, v, grid[0] if grid else None, grid[-1] if grid else None, len(grid), reason))
    return out


@dataclass(eq=False)
class BacktestResult:
    config: RunConfig
    runs: dict  # Variant -> VariantRun
    test_series: dict  # name -> DecileSeries on the common test grid
    selected: DecileSeries
    selected_forecasts: list
    selections: list
    perf: dict  # name -> {d1..d10, hl: PerfStats}
    pmatrix: object
    self_test_p: float
    decay: object

    @property
    def headline_name(self):
        return REALTIME if self.config.fixed_variant is None else self.config.fixed_variant.value

    @property
    def hl_sr(self):
        return self.perf[self.headline_name]["hl"].sr


def backtest(store: EmbeddingStore, returns: ReturnPanel, cfg: RunConfig, docs=None) -> BacktestResult:
    """Run the whole chain in memory. ``docs`` defaults to every embedded (firm, day)."""
    variants = [v for v in VARIANT_ORDER if v in store.variants()]
    fixed = cfg.fixed_variant
    if fixed is not None and fixed not in variants:
        raise CoverageError(f"variant {fixed.value} is not in the embedding store")
    if not variants:
        raise CoverageError("embedding store is empty")

    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        runs = {}
        for v in variants:
            vdocs = docs if docs is not None else store.keys(v)
            runs[v] = run_variant(store, returns, vdocs, v, cfg, pool)
    finally:
        if pool is not None:
            pool.shutdown()

    raw = {v: r.deciles(cfg.min_names, cfg.test_start, cfg.test_end) for v, r in runs.items()}
    grid = _common_days(raw)
    test = {v: _on_days(s, grid) for v, s in raw.items()}
    years = sorted({d.year for d in grid})

    if fixed is None:
        selections = realtime_selection(test, cfg.test_start, years)
    else:
        selections = [Selection(y, fixed, None, None, 0, "fixed") for y in years]
    chosen = {s.year: s.variant for s in selections}

    rows = [test[chosen[d.year]] for d in grid]
    selected = DecileSeries(
        list(grid),
        np.array([s.returns[i] for i, s in enumerate(rows)]).reshape(-1, 10),
        np.array([s.hl[i] for i, s in enumerate(rows)], dtype=np.float64),
        np.array([s.counts[i] for i, s in enumerate(rows)], dtype=np.int64).reshape(-1, 10),
    )
    by_day = {v: {f.trading_day: f for f in r.forecasts} for v, r in runs.items()}
    selected_forecasts = [by_day[chosen[d.year]][d] for d in grid]

    series = {v.value: s for v, s in test.items()}
    if fixed is None:
        series[REALTIME] = selected
    perf = {name: s.perf() for name, s in series.items()}

    kwargs = {"bandwidth": cfg.bandwidth}
    if cfg.sr_test == "bootstrap":
        kwargs.update(draws=cfg.bootstrap_draws, block_length=cfg.block_length, seed=cfg.seed)
    pmat = pairwise_matrix({k: s.hl for k, s in series.items()}, method=cfg.sr_test, **kwargs) if len(series) > 1 else None
    self_p = lw_test(PairedSeries(selected.hl, selected.hl), bandwidth=cfg.bandwidth).p_one_sided
    decay = decay_curve(selected_forecasts, cfg.min_names)
    return BacktestResult(cfg, runs, series, selected, selected_forecasts, selections, perf, pmat, self_p, decay)


# -- artifacts and the end-to-end run -------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_ledger(result: BacktestResult, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v, run in result.runs.items():
            for m in run.models:
                fh.write(json.dumps(m.to_json(kind="model", variant=v.value), sort_keys=True) + "\n")
            for s in run.skipped:
                fh.write(json.dumps({"kind": "skip", "variant": v.value, "month": s.month, "reason": s.reason}, sort_keys=True) + "\n")
            for p in run.provenance:
                fh.write(json.dumps({"kind": "forecast", "variant": v.value, **p}, sort_keys=True) + "\n")


def forecast_file(variant: Variant) -> str:
    return f"forecasts_{variant.short}.csv"


def write_artifacts(result: BacktestResult, out: Path) -> list[str]:
    """Write every intermediate table; returns the artifact file names."""
    out.mkdir(parents=True, exist_ok=True)
    names = [LEDGER_FILE]
    write_ledger(result, out / LEDGER_FILE)
    for v, run in result.runs.items():
        rows = ((f, day.trading_day, p) for day in run.forecasts for f, p in zip(day.firm_ids, day.predictions))
        cr.write_forecasts(rows, out / forecast_file(v))
        names.append(forecast_file(v))
    for name, s in result.test_series.items():
        fname = f"deciles_{name}.csv"
        write_decile_csv(s, out / fname)
        names.append(fname)
    with open(out / SELECTION_FILE, "w", encoding="utf-8") as fh:
        for s in result.selections:
            fh.write(json.dumps(s.to_json(), sort_keys=True) + "\n")
    names.append(SELECTION_FILE)
    with open(out / "perf.json", "w", encoding="utf-8") as fh:
        json.dump({k: {c: p.to_json() for c, p in v.items()} for k, v in result.perf.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    names.append("perf.json")
    return names


class _Stages:
    """Tracks the current stage; converts failures to :class:`StageError` and flags artifacts stale."""

    def __init__(self, out: Path | None):
        self.out = out

    @contextlib.contextmanager
    def __call__(self, name):
        log.info("stage %s", name)
        try:
            yield
        except StageError:
            raise
        except (NewsBTError, OSError) as exc:
            self._mark_stale(name, exc)
            raise StageError(name, exc) from exc

    def _mark_stale(self, stage, exc):
        if self.out is None or not self.out.is_dir():
            return
        present = sorted(p.name for p in self.out.iterdir() if p.is_file() and p.name != STALE_FILE)
        with contextlib.suppress(OSError):
            (self.out / STALE_FILE).write_text(
                json.dumps({"stage": stage, "error": str(exc), "stale_artifacts": present}, indent=2, sort_keys=True) + "\n"
            )


def embed_documents(docs, endpoint, variants=VARIANT_ORDER, **remote_kw) -> EmbeddingStore:
    """Pool remote token states into an :class:`EmbeddingStore` keyed like ``docs``."""
    states = fetch_embeddings_remote(endpoint, [d.text for d in docs], **remote_kw)
    items = []
    for doc, st in zip(docs, states):
        for v, vec in document_vectors(st, variants).items():
            items.append(((doc.firm_id, doc.trading_day, v), vec))
    return EmbeddingStore.from_vectors(items)


def run_pipeline(config: RunConfig, *, emit=True):
    """Execute the chain from files, write artifacts to ``config.output_dir`` and return the report."""
    from .report import build_report, emit_report

    out = config.output_dir
    if out is None:
        raise ConfigError("run_pipeline needs an output directory")
    stage = _Stages(out)
    with stage("setup"):
        out.mkdir(parents=True, exist_ok=True)
        (out / STALE_FILE).unlink(missing_ok=True)
    inputs = {}
    with stage("ingest"):
        if config.returns is None:
            raise ConfigError("no returns file configured")
        returns = load_returns(config.returns)
        inputs["returns"] = sha256_file(config.returns)
        docs = None
        if config.news is not None:
            docs = build_firm_days(load_news(config.news), returns.calendar)
            write_firm_days(docs, out / "firm_days.jsonl")
            inputs["news"] = sha256_file(config.news)
    with stage("embed"):
        if config.embeddings is not None and config.embeddings.exists():
            store = read_embedding_store(config.embeddings)
        elif config.endpoint and docs is not None:
            store = embed_documents(docs, config.endpoint)
            target = config.embeddings or out / "embeddings.bin"
            write_embedding_store(store, target)
            store = read_embedding_store(target)
            config = replace(config, embeddings=target)
        else:
            raise ConfigError("need an embeddings file, or news plus an inference endpoint")
        inputs["embeddings"] = sha256_file(config.embeddings)
        inputs["embeddings_index"] = sha256_file(index_path_for(config.embeddings))
    with stage("fit"):
        result = backtest(store, returns, config, docs)
    with stage("artifacts"):
        artifacts = write_artifacts(result, out)
    with stage("report"):
        report = build_report(result, inputs, artifacts, out)
        if emit:
            emit_report(report, out)
    return report


# -- audit -----------------------------------------------------------------


@dataclass
class AuditResult:
    variants: list
    forecast_months: int
    forecast_rows: int
    selections: int

    def to_json(self):
        return {
            "ok": True,
            "variants": self.variants,
            "forecast_months": self.forecast_months,
            "forecast_rows": self.forecast_rows,
            "selections": self.selections,
        }


def audit(run_dir) -> AuditResult:
    """Re-validate causality of a finished run from its files alone.

    Checks that each forecast month was produced by models from strictly
    earlier months, that those are exactly the ledger's earlier months, that
    every forecast row is covered by a provenance record, that each yearly
    variant choice used history ending before that year, and (when a report
    is present) that artifact hashes still match.
    """
    run_dir = Path(run_dir)
    ledger = cr.read_jsonl(run_dir / LEDGER_FILE)
    model_months, provenance = {}, {}
    for rec in ledger:
        kind = rec.get("kind")
        v = rec.get("variant")
        if kind == "model":
            model_months.setdefault(v, []).append(rec["month"])
        elif kind == "forecast":
            fm = rec["forecast_month"]
            if fm in provenance.setdefault(v, {}):
                raise CausalityError(f"{v}: two provenance records for {fm}")
            provenance[v][fm] = rec
        elif kind != "skip":
            raise CorruptionError(f"unknown ledger record kind {kind!r}")
    for v, months in model_months.items():
        if months != sorted(set(months)):
            raise CausalityError(f"{v}: model months are not strictly increasing")

    rows = 0
    for v, prov in provenance.items():
        fitted = model_months.get(v, [])
        for fm, rec in prov.items():
            used = rec["model_months"]
            late = [m for m in used if not m < fm]
            if late:
                raise CausalityError(f"{v}: forecasts for {fm} use models from {late}")
            expected = [m for m in fitted if m < fm]
            if used != expected:
                raise CausalityError(f"{v}: forecasts for {fm} cite {used}, ledger has {expected}")
        path = run_dir / forecast_file(Variant.parse(v))
        counts = cr.count_forecasts_by_month(path)
        for m, n in counts.items():
            if m not in prov:
                raise CausalityError(f"{v}: forecasts dated {m} have no provenance record")
            if prov[m]["n_forecasts"] != n:
                raise CausalityError(f"{v}: {m} has {n} forecasts, ledger claims {prov[m]['n_forecasts']}")
        rows += sum(counts.values())

    sel_path = run_dir / SELECTION_FILE
    selections = cr.read_jsonl(sel_path) if sel_path.exists() else []
    for s in selections:
        end = s.get("history_end")
        if end is not None and not date.fromisoformat(end) < date(int(s["year"]), 1, 1):
            raise CausalityError(f"variant choice for {s['year']} used history through {end}")

    report_path = run_dir / "report.json"
    if report_path.exists():
        with open(report_path, encoding="utf-8") as fh:
            recorded = json.load(fh).get("artifacts", {})
        for name, digest in recorded.items():
            p = run_dir / name
            if not p.exists() or sha256_file(p) != digest:
                raise CorruptionError(f"artifact {name} does not match the hash in report.json")
    return AuditResult(sorted(provenance), sum(len(p) for p in provenance.values()), rows, len(selections))


# -- vintage sweep ---------------------------------------------------------


@dataclass(eq=False)
class SweepResult:
    labels: list  # vintages in chronological order
    sr: dict  # label -> H-L Sharpe ratio; includes REALTIME
    results: dict  # label -> BacktestResult
    schedule: dict  # year -> vintage label used by the realtime store

    @property
    def envelope_max(self):
        return max(self.sr[k] for k in self.labels)

    def to_json(self):
        return {
            "labels": list(self.labels),
            "sr": {k: self.sr[k] for k in list(self.labels) + [REALTIME]},
            "schedule": {str(y): v for y, v in sorted(self.schedule.items())},
        }


def _vintage_sort_key(label):
    try:
        return (0, int(label), "")
    except (TypeError, ValueError):
        return (1, 0, str(label))


def check_coverage(label, store: EmbeddingStore, returns: ReturnPanel, cfg: RunConfig):
    """Every test-window month of the return calendar must have embedded news."""
    need = {cr.month_key(d) for d in returns.calendar[:-1] if cfg.test_start <= d <= cfg.test_end}
    have = {cr.month_key(d) for _, d in store.keys()}
    missing = sorted(need - have)
    if missing:
        raise CoverageError(f"vintage {label} has no embeddings for test month(s) {', '.join(missing[:3])}")


def vintage_sweep(cfg: RunConfig, returns: ReturnPanel | None = None, stores: Mapping | None = None, realtime: EmbeddingStore | None = None, docs=None) -> SweepResult:
    """One backtest per vintage plus one on the realtime stitched store.

    ``stores`` maps vintage label to store; when omitted the ``[vintages]``
    paths of ``cfg`` are read. Labels are put in chronological order. The
    realtime store uses, for each year ``y``, vintage ``y - 1`` (integer
    labels) unless one is passed in.
    """
    from .synth import stitch_realtime

    if returns is None:
        returns = load_returns(cfg.returns)
    if stores is None:
        if not cfg.vintages:
            raise ConfigError("no vintages configured")
        stores = {k: read_embedding_store(p) for k, p in cfg.vintages}
    labels = sorted(stores, key=_vintage_sort_key)
    for label in labels:
        check_coverage(label, stores[label], returns, cfg)
    schedule = {}
    if realtime is None:
        try:
            by_year = {int(k): stores[k] for k in labels}
        except (TypeError, ValueError):
            raise ParameterError("realtime stitching needs integer (year) vintage labels") from None
        realtime, sched = stitch_realtime(by_year)
        schedule = {y: next(k for k in labels if int(k) == v) for y, v in sched.items()}
    results, sr = {}, {}
    for label in labels:
        results[label] = backtest(stores[label], returns, cfg, docs)
        sr[label] = results[label].hl_sr
    results[REALTIME] = backtest(realtime, returns, cfg, docs)
    sr[REALTIME] = results[REALTIME].hl_sr
    return SweepResult(labels, sr, results, schedule)


def write_envelope_csv(sweep: SweepResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vintage", "hl_sr"])
        for k in list(sweep.labels) + [REALTIME]:
            w.writerow([k, f"{sweep.sr[k]:.2f}"])


def forecast_sets_from_rows(rows, returns: ReturnPanel) -> list[DailyForecastSet]:
    """Group ``(firm, day, prediction)`` rows into per-day sets with realized returns.

    Rows whose firm has no return on the next trading day are dropped.
    """
    by_day = {}
    for firm, day, pred in rows:
        by_day.setdefault(day, []).append((firm, pred))
    out = []
    for day in sorted(by_day):
        pos = returns.day_index(day)
        nxt = returns.next_day(day)
        if pos is None or nxt is None:
            continue
        entries = [(f, p, returns.get(f, nxt)) for f, p in by_day[day]]
        entries = [e for e in entries if e[2] is not None]
        if not entries:
            continue
        firms = [e[0] for e in entries]
        hz = _horizon_matrix(returns, firms, np.full(len(firms), pos, dtype=np.int64))
        out.append(DailyForecastSet(day, firms, [e[1] for e in entries], [e[2] for e in entries], hz))
    return out
