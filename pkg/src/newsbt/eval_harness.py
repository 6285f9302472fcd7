"""Offline scoring of knowledge-cutoff probes and HellaSwag log-probabilities."""

from __future__ import annotations

import json
import re
import string
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateKeyError, InsufficientSampleError, InvariantError, ParseError

# -- probes ----------------------------------------------------------------

_PARENS = re.compile(r"\([^()]*\)")
_WS = re.compile(r"\s+")
_PUNCT = string.punctuation + "“”‘’–—"


def _strip_punct(s: str) -> str:
    return s.strip(_PUNCT + " ")


def normalize_answer(text: str) -> str:
    """Casefold, drop parenthesized qualifiers, collapse whitespace, strip edge punctuation."""
    s = unicodedata.normalize("NFKC", text).casefold()
    s = _PARENS.sub(" ", s)
    s = _WS.sub(" ", s).strip()
    return _strip_punct(s)


def _words(text: str) -> list[str]:
    return [w for w in (_strip_punct(t) for t in normalize_answer(text).split(" ")) if w]


def answers_match(prediction: str, accepted: Sequence[str], allow_continuation=False) -> bool:
    """Whether ``prediction`` is an accepted answer or a word-level prefix of one.

    With ``allow_continuation`` an answer followed by extra generated words
    (``"scandal. The"`` for ``"scandal"``) is also accepted.
    """
    pred = _words(prediction)
    if not pred:
        return False
    for ans in accepted:
        target = _words(ans)
        if not target:
            continue
        if target[: len(pred)] == pred:
            return True
        if allow_continuation and pred[: len(target)] == target:
            return True
    return False


@dataclass(frozen=True)
class ProbeRecord:
    model_id: str
    cutoff_year: int
    prompt_id: str
    prompt_year: int
    prediction: str
    accepted: tuple[str, ...]
    na: bool = False

    def __post_init__(self):
        for name in ("cutoff_year", "prompt_year"):
            y = getattr(self, name)
            if not (isinstance(y, int) and 1000 <= y <= 9999):
                raise InvariantError(f"{name} must be a four-digit year, got {y!r}")
        object.__setattr__(self, "accepted", tuple(self.accepted))
        if not self.na and not self.accepted:
            raise InvariantError(f"{self.model_id}/{self.prompt_id}: accepted answers empty")

    @property
    def window(self):
        return "post" if self.prompt_year > self.cutoff_year else "pre"


@dataclass(frozen=True)
class Grade:
    window: str
    correct: bool


def grade_record(rec: ProbeRecord, allow_continuation=False) -> Grade | None:
    """Window and correctness of one probe; ``None`` for n/a cells."""
    if rec.na:
        return None
    return Grade(rec.window, answers_match(rec.prediction, rec.accepted, allow_continuation))


@dataclass
class Tally:
    correct: int = 0
    total: int = 0

    def add(self, ok):
        self.total += 1
        self.correct += int(ok)

    def as_tuple(self):
        return (self.correct, self.total)

    def __str__(self):
        return f"{self.correct}/{self.total}"


@dataclass
class ProbeReport:
    per_model: dict[str, dict[str, Tally]] = field(default_factory=dict)
    pre: Tally = field(default_factory=Tally)
    post: Tally = field(default_factory=Tally)
    na_count: int = 0
    n_records: int = 0

    @property
    def empty(self):
        return self.n_records == 0

    def to_json(self):
        return {
            "per_model": {
                m: {"pre": list(t["pre"].as_tuple()), "post": list(t["post"].as_tuple())}
                for m, t in sorted(self.per_model.items())
            },
            "pre": list(self.pre.as_tuple()),
            "post": list(self.post.as_tuple()),
            "na": self.na_count,
            "records": self.n_records,
            "empty": self.empty,
        }


def parse_probe_line(line: str) -> ProbeRecord:
    rec = json.loads(line)
    return ProbeRecord(
        model_id=str(rec["model_id"]),
        cutoff_year=rec["cutoff_year"],
        prompt_id=str(rec["prompt_id"]),
        prompt_year=rec["prompt_year"],
        prediction=str(rec.get("prediction") or ""),
        accepted=tuple(str(a) for a in rec.get("accepted") or ()),
        na=bool(rec.get("na", False)),
    )


def score_probes(records: Iterable[ProbeRecord], allow_continuation=False) -> ProbeReport:
    report = ProbeReport()
    seen = set()
    for rec in records:
        key = (rec.model_id, rec.prompt_id)
        if key in seen:
            raise DuplicateKeyError(f"duplicate probe record {key}")
        seen.add(key)
        report.n_records += 1
        tallies = report.per_model.setdefault(rec.model_id, {"pre": Tally(), "post": Tally()})
        g = grade_record(rec, allow_continuation)
        if g is None:
            report.na_count += 1
            continue
        tallies[g.window].add(g.correct)
        getattr(report, g.window).add(g.correct)
    return report


def read_probe_file(path) -> list[ProbeRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(parse_probe_line(line))
            except (ValueError, KeyError, TypeError, InvariantError) as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
    return records


def score_probe_file(path, allow_continuation=False) -> ProbeReport:
    return score_probes(read_probe_file(path), allow_continuation)


# -- HellaSwag -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Candidate:
    token_logprobs: np.ndarray
    completion_mask: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.token_logprobs, dtype=np.float64)
        mask = np.asarray(self.completion_mask, dtype=np.float64)
        if lp.ndim != 1 or lp.shape != mask.shape:
            raise InvariantError(f"logprobs {lp.shape} and mask {mask.shape} differ")
        if not np.all((mask == 0) | (mask == 1)):
            raise InvariantError("completion_mask must be 0/1")
        if mask.sum() < 1:
            raise InvariantError("candidate has no completion tokens")
        object.__setattr__(self, "token_logprobs", lp)
        object.__setattr__(self, "completion_mask", mask)


@dataclass(frozen=True, eq=False)
class HSExample:
    example_id: str
    label: int
    candidates: tuple[Candidate, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise InvariantError(f"{self.example_id}: no candidates")
        if not 0 <= self.label < len(self.candidates):
            raise InvariantError(f"{self.example_id}: label {self.label} out of range")


def hs_losses(candidate: Candidate) -> tuple[float, float]:
    """Summed and per-token negative log-likelihood over completion tokens."""
    loss_sum = float(np.sum(candidate.completion_mask * -candidate.token_logprobs))
    return loss_sum, loss_sum / float(candidate.completion_mask.sum())


def hs_choose(example: HSExample) -> int:
    """Candidate with the lowest average completion loss; ties go to the lowest index."""
    avgs = [hs_losses(c)[1] for c in example.candidates]
    return int(np.argmin(avgs))


@dataclass
class HSResult:
    accuracy: float
    rows: list[dict]

    @property
    def n(self):
        return len(self.rows)


def parse_hs_line(line: str) -> HSExample:
    rec = json.loads(line)
    cands = tuple(Candidate(c["token_logprobs"], c["completion_mask"]) for c in rec["candidates"])
    return HSExample(str(rec["example_id"]), int(rec["label"]), cands)


def read_hs_file(path) -> list[HSExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(parse_hs_line(line))
            except (ValueError, KeyError, TypeError, InvariantError) as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
    return out


def hs_score(examples: Sequence[HSExample]) -> HSResult:
    if not examples:
        raise InsufficientSampleError("accuracy is undefined for zero examples")
    rows = []
    for ex in examples:
        chosen = hs_choose(ex)
        rows.append(
            {
                "example_id": ex.example_id,
                "label": ex.label,
                "chosen": chosen,
                "correct": chosen == ex.label,
                "loss_avg": [hs_losses(c)[1] for c in ex.candidates],
            }
        )
    return HSResult(sum(r["correct"] for r in rows) / len(rows), rows)


def hs_accuracy(path) -> HSResult:
    return hs_score(read_hs_file(path))
