"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
degeneracy, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

from . import __version__
from .errors import NewsBTError

log = logging.getLogger("newsbt")


def _date(s):
    try:
        return date.fromisoformat(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {s!r}") from None


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _overrides(args):
    return {
        "seed": args.seed,
        "threads": args.threads,
        "sr_test": args.sr_test,
        "bootstrap_draws": args.bootstrap_draws,
        "block_length": args.block_length,
    }


def _config(args, **extra):
    from .pipeline import RunConfig, load_config

    kw = {k: v for k, v in _overrides(args).items() if v is not None}
    kw.update({k: v for k, v in extra.items() if v is not None})
    if getattr(args, "config", None):
        return load_config(args.config, **kw)
    return RunConfig(**kw)


# -- subcommands -----------------------------------------------------------


def cmd_ingest(args):
    from .panel_store import build_firm_days, load_news, load_returns, write_firm_days

    returns = load_returns(args.returns)
    docs = build_firm_days(load_news(args.news), returns.calendar)
    write_firm_days(docs, args.out)
    print(f"{len(docs)} firm-day documents -> {args.out}")


def cmd_embed(args):
    from .panel_store import read_firm_days, write_embedding_store
    from .pipeline import embed_documents

    docs = read_firm_days(args.docs)
    store = embed_documents(docs, args.endpoint, batch_size=args.batch_size, max_in_flight=args.threads or 4)
    write_embedding_store(store, args.out)
    print(f"{len(store)} vectors of dimension {store.dimension} -> {args.out}")


def cmd_fit(args):
    from . import cross_ridge as cr
    from .panel_store import load_returns, read_embedding_store, read_firm_days
    from .pipeline import forecast_file, run_variant
    from .variants import Variant

    cfg = _config(args, variant_policy=args.variant)
    returns = load_returns(args.returns)
    store = read_embedding_store(args.embeddings)
    docs = read_firm_days(args.docs) if args.docs else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = [Variant.parse(args.variant)] if args.variant else list(store.variants())
    with open(out / "model_ledger.jsonl", "w", encoding="utf-8") as fh:
        for v in variants:
            run = run_variant(store, returns, docs if docs is not None else store.keys(v), v, cfg)
            for m in run.models:
                fh.write(json.dumps(m.to_json(kind="model", variant=v.value), sort_keys=True) + "\n")
            for s in run.skipped:
                fh.write(json.dumps({"kind": "skip", "variant": v.value, "month": s.month, "reason": s.reason}, sort_keys=True) + "\n")
            for p in run.provenance:
                fh.write(json.dumps({"kind": "forecast", "variant": v.value, **p}, sort_keys=True) + "\n")
            rows = ((f, d.trading_day, p) for d in run.forecasts for f, p in zip(d.firm_ids, d.predictions))
            cr.write_forecasts(rows, out / forecast_file(v))
            print(f"{v.value}: {len(run.models)} months fitted, {len(run.skipped)} skipped, {len(run.forecasts)} forecast days")


def _forecast_sets(args):
    from .cross_ridge import read_forecasts
    from .panel_store import load_returns
    from .pipeline import forecast_sets_from_rows

    returns = load_returns(args.returns)
    sets = forecast_sets_from_rows(read_forecasts(args.forecasts), returns)
    return [s for s in sets if (args.start is None or s.trading_day >= args.start) and (args.end is None or s.trading_day <= args.end)]


def cmd_portfolio(args):
    from .portfolio import build_decile_series, write_decile_csv, write_perf_json

    series = build_decile_series(_forecast_sets(args), args.min_names)
    write_decile_csv(series, args.out)
    perf = series.perf()
    if args.perf:
        write_perf_json(perf, args.perf)
    print(f"{len(series)} days ({len(series.gaps)} skipped); H-L SR {perf['hl'].sr:.2f}")


def cmd_decay(args):
    from .portfolio import decay_curve, write_decay_csv
    from .report import decay_svg

    curve = decay_curve(_forecast_sets(args), args.min_names)
    write_decay_csv(curve, args.out)
    if args.svg:
        Path(args.svg).write_text(decay_svg(curve), encoding="utf-8")
    for k in range(len(curve.horizons)):
        print(f"day {k}: {curve.mean[k]:8.2f} +/- {curve.half_width[k]:.2f}")


def cmd_stats(args):
    from .portfolio import read_decile_csv
    from .sharpe import pairwise_matrix, write_pmatrix_csv

    cfg = _config(args)
    series = {}
    for spec in args.deciles:
        name, _, path = spec.rpartition("=")
        name = name or Path(path).stem
        s = read_decile_csv(path)
        series[name] = (s.days, s.hl)
    kw = {"bandwidth": args.bandwidth}
    if cfg.sr_test == "bootstrap":
        kw.update(draws=cfg.bootstrap_draws, block_length=cfg.block_length, seed=cfg.seed)
    mat = pairwise_matrix(series, method=cfg.sr_test, **kw)
    write_pmatrix_csv(mat, args.out)
    _print_json(mat.to_json())


def cmd_sweep(args):
    from .pipeline import vintage_sweep, write_envelope_csv
    from .report import envelope_svg

    cfg = _config(args)
    sweep = vintage_sweep(cfg)
    out = cfg.output_dir or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    write_envelope_csv(sweep, out / "envelope.csv")
    (out / "envelope.svg").write_text(envelope_svg(sweep), encoding="utf-8")
    _print_json(sweep.to_json())


def cmd_probe_score(args):
    from .eval_harness import score_probe_file

    report = score_probe_file(args.file, allow_continuation=args.allow_continuation)
    rec = report.to_json()
    if args.out:
        Path(args.out).write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _print_json(rec)


def cmd_hs_score(args):
    from .eval_harness import hs_accuracy

    res = hs_accuracy(args.file)
    if args.audit:
        with open(args.audit, "w", encoding="utf-8") as fh:
            for row in res.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"accuracy {res.accuracy:.6f} over {res.n} examples")


def cmd_synth(args):
    from .panel_store import write_embedding_store, write_returns
    from .synth import SynthConfig, generate, vintage_envelope_fixture, write_truth

    cfg = SynthConfig.from_snr(
        args.snr,
        sigma=args.sigma,
        seed=args.seed or 0,
        n_firms=args.n_firms,
        n_days=args.n_days,
        dim=args.dim,
        coverage=args.coverage,
        rotation=args.rotation,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.vintages:
        fx = vintage_envelope_fixture(cfg, n_vintages=args.vintages)
        write_returns(fx.returns, out / "returns.csv")
        lines = ["[paths]", "returns = returns.csv", "output_dir = run", "", "[model]", f"variant_policy = {fx.variant.value}", "", "[vintages]"]
        for v, store in fx.vintages.items():
            write_embedding_store(store, out / f"vintage_{v}.bin")
            lines.append(f"{v} = vintage_{v}.bin")
        write_embedding_store(fx.realtime, out / "realtime.bin")
        write_truth(fx.truth, out / "truth.json")
    else:
        panel = generate(cfg)
        write_returns(panel.returns, out / "returns.csv")
        write_embedding_store(panel.embeddings, out / "embeddings.bin")
        write_truth(panel.truth, out / "truth.json")
        lines = ["[paths]", "returns = returns.csv", "embeddings = embeddings.bin", "output_dir = run"]
    (out / "run.ini").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"synthetic panel -> {out} (config {out / 'run.ini'})")


def cmd_report(args):
    from .pipeline import run_pipeline

    cfg = _config(args, output_dir=Path(args.out) if args.out else None)
    report = run_pipeline(cfg)
    print(f"H-L Sharpe ratio ({report.headline}): {report.hl_sr:.2f}")
    print(f"artifacts in {cfg.output_dir}")


def cmd_audit(args):
    from .pipeline import audit

    _print_json(audit(args.run_dir).to_json())


# -- parser ----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="newsbt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--seed", type=int, help="seed for every stochastic step")
    p.add_argument("--sr-test", choices=["hac", "bootstrap"])
    p.add_argument("--bootstrap-draws", type=int)
    p.add_argument("--block-length", type=int)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="aggregate newswire JSONL into firm-day documents")
    s.add_argument("--news", required=True)
    s.add_argument("--returns", required=True, help="returns CSV (supplies the trading calendar)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("embed", help="embed firm-day documents through an inference service")
    s.add_argument("--docs", required=True)
    s.add_argument("--endpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--batch-size", type=int, default=16)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("fit", help="monthly ridge fits and expanding-average forecasts")
    s.add_argument("--returns", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--docs")
    s.add_argument("--variant")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_fit)

    for name, func, helptext in (
        ("portfolio", cmd_portfolio, "daily decile portfolios from a forecasts CSV"),
        ("decay", cmd_decay, "H-L returns over holding days 0..6"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--forecasts", required=True)
        s.add_argument("--returns", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--min-names", type=int, default=20)
        s.add_argument("--start", type=_date)
        s.add_argument("--end", type=_date)
        if name == "portfolio":
            s.add_argument("--perf", help="also write PerfStats JSON here")
        else:
            s.add_argument("--svg", help="also write an SVG chart here")
        s.set_defaults(func=func)

    s = sub.add_parser("stats", help="pairwise one-sided Sharpe ratio tests")
    s.add_argument("deciles", nargs="+", help="decile CSVs, optionally NAME=path")
    s.add_argument("--out", required=True)
    s.add_argument("--bandwidth", type=int)
    s.add_argument("--config")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("sweep", help="one backtest per model vintage plus the realtime store")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("probe-score", help="score a knowledge-cutoff probe file")
    s.add_argument("file")
    s.add_argument("--allow-continuation", action="store_true", help="also accept answers followed by extra words")
    s.add_argument("--out")
    s.set_defaults(func=cmd_probe_score)

    s = sub.add_parser("hs-score", help="score a HellaSwag log-probability file")
    s.add_argument("file")
    s.add_argument("--audit", help="write per-example choices as JSONL")
    s.set_defaults(func=cmd_hs_score)

    s = sub.add_parser("synth", help="write a synthetic panel and a matching run config")
    s.add_argument("--out", required=True)
    s.add_argument("--n-firms", type=int, default=200)
    s.add_argument("--n-days", type=int, default=1000)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--snr", type=float, default=2.0)
    s.add_argument("--sigma", type=float, default=0.02)
    s.add_argument("--coverage", type=float, default=1.0)
    s.add_argument("--rotation", type=float, default=0.0, help="signal rotation per year (radians)")
    s.add_argument("--vintages", type=int, default=0, help="emit this many vintage stores instead")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", help="run the full chain and emit the report")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="override the output directory")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("audit", help="re-check causality of a finished run from its artifacts")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NewsBTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
