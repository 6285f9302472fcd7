"""Pair each firm-day embedding with the firm's return on the next trading day."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from datetime import date
from typing import Iterable, NamedTuple

import numpy as np

from ..variants import Variant
from .returns import ReturnPanel
from .store import EmbeddingStore


class AlignedObservation(NamedTuple):
    firm_id: str
    trading_day: date
    row: int
    next_day_return: float


@dataclass
class Alignment:
    observations: list[AlignedObservation]
    dropped: Counter

    def __iter__(self):
        return iter(self.observations)

    def __len__(self):
        return len(self.observations)


def _doc_key(doc):
    if isinstance(doc, tuple):
        return doc[0], doc[1]
    return doc.firm_id, doc.trading_day


def align_next_day_returns(
    docs: Iterable,
    embeddings: EmbeddingStore,
    returns: ReturnPanel,
    variant=Variant.LAST_LAYER,
) -> Alignment:
    """Keep (firm, t) docs that have an embedding row and a finite return on t+1.

    ``docs`` may hold :class:`FirmDayDoc` objects or ``(firm_id, day)`` tuples.
    Drops are tallied under ``no_embedding``, ``no_next_day`` (t is the last
    calendar day or not a trading day) and ``no_return``.
    """
    variant = Variant.parse(variant)
    obs = []
    dropped = Counter()
    for doc in docs:
        firm, day = _doc_key(doc)
        row = embeddings.row_of(firm, day, variant)
        if row is None:
            dropped["no_embedding"] += 1
            continue
        nxt = returns.next_day(day)
        if nxt is None:
            dropped["no_next_day"] += 1
            continue
        r = returns.get(firm, nxt)
        if r is None or not math.isfinite(r):
            dropped["no_return"] += 1
            continue
        obs.append(AlignedObservation(firm, day, row, r))
    return Alignment(obs, dropped)


@dataclass
class ObservationArrays:
    """Columnar view of aligned observations, sorted by (day, firm)."""

    firm_ids: np.ndarray
    days: list[date]
    day_pos: np.ndarray
    X: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)


def to_arrays(alignment: Alignment, embeddings: EmbeddingStore, returns: ReturnPanel) -> ObservationArrays:
    ordered = sorted(alignment.observations, key=lambda o: (o.trading_day, o.firm_id))
    rows = np.fromiter((o.row for o in ordered), dtype=np.int64, count=len(ordered))
    X = embeddings.matrix[rows].astype(np.float64) if len(rows) else np.zeros((0, embeddings.dimension))
    return ObservationArrays(
        firm_ids=np.array([o.firm_id for o in ordered], dtype=object),
        days=[o.trading_day for o in ordered],
        day_pos=np.fromiter((returns.day_index(o.trading_day) for o in ordered), dtype=np.int64, count=len(ordered)),
        X=X,
        y=np.fromiter((o.next_day_return for o in ordered), dtype=np.float64, count=len(ordered)),
    )
