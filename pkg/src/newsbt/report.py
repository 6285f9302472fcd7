"""Run reports: machine JSON plus rounded summary CSVs and standalone SVG charts.

CSV numbers are rounded the way published tables are (2 decimals; 3 for
p-values); the JSON keeps full precision. Charts are plain SVG text, so no
plotting library is needed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

from .portfolio import N_DECILES, write_decay_csv
from .sharpe import write_pmatrix_csv

DECILE_LABELS = ["Low (L)"] + [str(k) for k in range(2, N_DECILES)] + ["High (H)", "H-L"]
_PERF_KEYS = [f"d{k}" for k in range(1, N_DECILES + 1)] + ["hl"]


@dataclass(eq=False)
class RunReport:
    config: dict
    inputs: dict
    perf: dict  # series -> {d1..d10, hl: PerfStats}
    headline: str
    pmatrix: object | None
    self_test_p: float
    decay: object
    selections: list
    ledger_summary: dict
    artifacts: dict = field(default_factory=dict)
    envelope: object | None = None

    @property
    def hl_sr(self):
        return self.perf[self.headline]["hl"].sr

    def to_json(self):
        d = self.decay
        out = {
            "config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
            "headline": {"series": self.headline, "hl_sr": self.hl_sr},
            "perf": {k: {c: p.to_json() for c, p in v.items()} for k, v in self.perf.items()},
            "pmatrix": self.pmatrix.to_json() if self.pmatrix is not None else None,
            "self_test_p": self.self_test_p,
            "decay": {
                "horizon": [int(h) for h in d.horizons],
                "mean": [_num(x) for x in d.mean],
                "half_width": [_num(x) for x in d.half_width],
                "n_days": [int(n) for n in d.n_days],
                "omitted": list(d.omitted),
            },
            "selections": [s.to_json() for s in self.selections],
            "ledger": self.ledger_summary,
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        if self.envelope is not None:
            out["envelope"] = self.envelope.to_json()
        return out


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def ledger_summary(result):
    out = {}
    for v, run in result.runs.items():
        lams = {}
        for m in run.models:
            key = f"{m.lam:g}"
            lams[key] = lams.get(key, 0) + 1
        out[v.value] = {
            "months_fitted": len(run.models),
            "months_skipped": [s.month for s in run.skipped],
            "first_month": run.models[0].month if run.models else None,
            "last_month": run.models[-1].month if run.models else None,
            "lambda_counts": dict(sorted(lams.items())),
            "observations": run.n_obs,
            "dropped": dict(sorted(run.dropped.items())),
        }
    return out


def build_report(result, inputs, artifact_names, out_dir) -> RunReport:
    from .pipeline import sha256_file

    out_dir = Path(out_dir)
    return RunReport(
        config=result.config.to_json(),
        inputs=dict(inputs),
        perf=result.perf,
        headline=result.headline_name,
        pmatrix=result.pmatrix,
        self_test_p=result.self_test_p,
        decay=result.decay,
        selections=result.selections,
        ledger_summary=ledger_summary(result),
        artifacts={n: sha256_file(out_dir / n) for n in artifact_names},
    )


# -- CSV -------------------------------------------------------------------


def write_decile_table_csv(perf: dict, path):
    """Rows Low..High and H-L; Mean, SD and SR columns for every series."""
    names = list(perf)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["portfolio"] + [f"{n} {m}" for n in names for m in ("mean", "sd", "sr")])
        for label, key in zip(DECILE_LABELS, _PERF_KEYS):
            row = [label]
            for n in names:
                p = perf[n][key]
                row += [f"{p.mean:.2f}", f"{p.sd:.2f}", f"{p.sr:.2f}"]
            w.writerow(row)


# -- SVG -------------------------------------------------------------------

_W, _H, _PAD = 480, 320, 48


class _Axes:
    def __init__(self, xlo, xhi, ylo, yhi):
        if yhi <= ylo:
            ylo, yhi = ylo - 1.0, yhi + 1.0
        if xhi <= xlo:
            xlo, xhi = xlo - 1.0, xhi + 1.0
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi

    def x(self, v):
        return _PAD + (v - self.xlo) / (self.xhi - self.xlo) * (_W - 2 * _PAD)

    def y(self, v):
        return _H - _PAD - (v - self.ylo) / (self.yhi - self.ylo) * (_H - 2 * _PAD)


def _svg(title, body, ax: _Axes, xlabel, ylabel, xticks):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<line class="axis" x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line class="axis" x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
    ]
    if ax.ylo < 0 < ax.yhi:
        y0 = ax.y(0.0)
        parts.append(f'<line class="zero" x1="{_PAD}" y1="{y0:.2f}" x2="{_W - _PAD}" y2="{y0:.2f}" stroke="gray" stroke-dasharray="4 3"/>')
    for pos, label in xticks:
        parts.append(f'<text x="{ax.x(pos):.2f}" y="{_H - _PAD + 16}" font-size="11" text-anchor="middle">{escape(str(label))}</text>')
    for v in (ax.ylo, (ax.ylo + ax.yhi) / 2, ax.yhi):
        parts.append(f'<text x="{_PAD - 6}" y="{ax.y(v) + 4:.2f}" font-size="11" text-anchor="end">{v:.1f}</text>')
    parts += [
        f'<text x="{_W / 2}" y="{_H - 8}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{_H / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {_H / 2})">{escape(ylabel)}</text>',
        f'<text x="{_W / 2}" y="20" font-size="13" text-anchor="middle">{escape(title)}</text>',
    ]
    parts += body
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def decay_svg(curve) -> str:
    """Annualized H-L return by holding day with 95% CI bars; one point per horizon."""
    ok = [k for k in range(len(curve.horizons)) if k not in curve.omitted]
    lo = [curve.ci_low[k] for k in ok] + [0.0]
    hi = [curve.ci_high[k] for k in ok] + [0.0]
    ax = _Axes(-0.5, len(curve.horizons) - 0.5, min(lo), max(hi))
    body = []
    for k in ok:
        x = ax.x(curve.horizons[k])
        body.append(
            f'<line class="ci" x1="{x:.2f}" y1="{ax.y(curve.ci_low[k]):.2f}" x2="{x:.2f}" y2="{ax.y(curve.ci_high[k]):.2f}" stroke="steelblue" stroke-width="2"/>'
        )
        body.append(f'<circle class="point" cx="{x:.2f}" cy="{ax.y(curve.mean[k]):.2f}" r="4" fill="navy"/>')
    ticks = [(int(h), int(h)) for h in curve.horizons]
    return _svg("H-L return by days after news", body, ax, "trading days after news day", "annualized H-L return (%)", ticks)


def envelope_svg(sweep) -> str:
    """Per-vintage H-L Sharpe ratios as a line, realtime as a dashed level."""
    labels = list(sweep.labels)
    vals = [sweep.sr[k] for k in labels]
    rt = sweep.sr["realtime"]
    ax = _Axes(-0.5, len(labels) - 0.5, min(vals + [rt, 0.0]), max(vals + [rt]))
    pts = " ".join(f"{ax.x(i):.2f},{ax.y(v):.2f}" for i, v in enumerate(vals))
    body = [f'<polyline class="vintages" points="{pts}" fill="none" stroke="navy" stroke-width="2"/>']
    body += [f'<circle class="point" cx="{ax.x(i):.2f}" cy="{ax.y(v):.2f}" r="3" fill="navy"/>' for i, v in enumerate(vals)]
    body.append(
        f'<line class="realtime" x1="{_PAD}" y1="{ax.y(rt):.2f}" x2="{_W - _PAD}" y2="{ax.y(rt):.2f}" stroke="firebrick" stroke-dasharray="6 3"/>'
    )
    ticks = list(enumerate(labels))
    return _svg("H-L Sharpe ratio by model vintage", body, ax, "vintage", "Sharpe ratio", ticks)


# -- emission --------------------------------------------------------------


def dumps_report(report: RunReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_report(report: RunReport, out_dir, formats=("json", "csv", "svg")):
    """Write the report files into ``out_dir``; returns their paths.

    ``report.json`` is written last and records the hashes of every other file.
    """
    from .pipeline import sha256_file, write_envelope_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        write_decile_table_csv(report.perf, out / "decile_table.csv")
        written.append("decile_table.csv")
        write_decay_csv(report.decay, out / "decay.csv")
        written.append("decay.csv")
        if report.pmatrix is not None:
            write_pmatrix_csv(report.pmatrix, out / "pmatrix.csv")
            written.append("pmatrix.csv")
        if report.envelope is not None:
            write_envelope_csv(report.envelope, out / "envelope.csv")
            written.append("envelope.csv")
    if "svg" in formats:
        (out / "decay.svg").write_text(decay_svg(report.decay), encoding="utf-8")
        written.append("decay.svg")
        if report.envelope is not None:
            (out / "envelope.svg").write_text(envelope_svg(report.envelope), encoding="utf-8")
            written.append("envelope.svg")
    for name in written:
        report.artifacts[name] = sha256_file(out / name)
    paths = [out / n for n in written]
    if "json" in formats:
        (out / "report.json").write_text(dumps_report(report), encoding="utf-8")
        paths.append(out / "report.json")
    return paths
