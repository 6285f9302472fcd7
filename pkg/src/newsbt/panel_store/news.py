"""News ingestion and firm-day aggregation.

A trading day ``t`` owns every headline displayed after 16:00 New York time on
the previous trading day and at or before 16:00 on ``t``. Weekend and holiday
news therefore rolls forward to the next session.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from dataclasses import dataclass
from datetime import date, datetime, time
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

from ..errors import InvariantError, OutOfRangeError, ParseError

NEW_YORK = ZoneInfo("America/New_York")
MARKET_CLOSE = time(16, 0)


@dataclass(frozen=True)
class NewsItem:
    firm_id: str
    display_time: datetime
    headline: str

    def __post_init__(self):
        if not self.firm_id:
            raise InvariantError("NewsItem.firm_id is empty")
        if self.display_time.tzinfo is None or self.display_time.utcoffset() is None:
            raise InvariantError(f"display_time {self.display_time} has no UTC offset")
        if not self.headline.strip():
            raise InvariantError("headline is empty after trimming")


@dataclass(frozen=True)
class FirmDayDoc:
    firm_id: str
    trading_day: date
    text: str
    item_count: int
    first_display_time: datetime | None = None
    last_display_time: datetime | None = None


class TradingCalendar:
    """Sorted trading days with their 16:00 New York cutoffs precomputed."""

    def __init__(self, days: Iterable[date]):
        self.days = tuple(days)
        if not self.days:
            raise OutOfRangeError("trading calendar is empty")
        for a, b in zip(self.days, self.days[1:]):
            if not a < b:
                raise InvariantError(f"calendar not strictly increasing at {a} -> {b}")
        self.cutoffs = [datetime.combine(d, MARKET_CLOSE, tzinfo=NEW_YORK) for d in self.days]

    def __len__(self):
        return len(self.days)

    def assign(self, display_time: datetime) -> date:
        if display_time.tzinfo is None:
            raise InvariantError("display_time must be timezone-aware")
        i = bisect_left(self.cutoffs, display_time)
        if i == len(self.cutoffs):
            raise OutOfRangeError(
                f"{display_time.isoformat()} is after the last cutoff {self.cutoffs[-1].isoformat()}"
            )
        return self.days[i]


def _as_calendar(calendar) -> TradingCalendar:
    return calendar if isinstance(calendar, TradingCalendar) else TradingCalendar(calendar)


def assign_trading_day(display_time: datetime, calendar) -> date:
    """Trading day whose (prior close, close] window contains ``display_time``.

    Timestamps before the first session's window are assigned to the first
    session; timestamps after the final 16:00 cutoff raise
    :class:`OutOfRangeError`.
    """
    return _as_calendar(calendar).assign(display_time)


def build_firm_days(news: Sequence[NewsItem], calendar) -> list[FirmDayDoc]:
    """Aggregate headlines into one document per (firm, trading day).

    Headlines are ordered by display time (input order breaks ties) and joined
    with ``"\\n"``. A headline repeated verbatim (after trimming) within the
    same firm-day is kept once.
    """
    cal = _as_calendar(calendar)
    groups: dict[tuple[str, date], list[tuple[datetime, int, str]]] = {}
    for pos, item in enumerate(news):
        day = cal.assign(item.display_time)
        groups.setdefault((item.firm_id, day), []).append((item.display_time, pos, item.headline.strip()))

    docs = []
    for (firm, day), items in groups.items():
        items.sort(key=lambda x: (x[0], x[1]))
        seen = set()
        kept = []
        for ts, _, head in items:
            if head in seen:
                continue
            seen.add(head)
            kept.append((ts, head))
        docs.append(
            FirmDayDoc(
                firm_id=firm,
                trading_day=day,
                text="\n".join(h for _, h in kept),
                item_count=len(kept),
                first_display_time=kept[0][0],
                last_display_time=kept[-1][0],
            )
        )
    docs.sort(key=lambda d: (d.trading_day, d.firm_id))
    return docs


def parse_display_time(value: str) -> datetime:
    ts = datetime.fromisoformat(value)
    if ts.tzinfo is None:
        raise ValueError(f"display_time {value!r} has no UTC offset")
    return ts


def load_news(path) -> list[NewsItem]:
    """Read newswire JSONL (``firm_id``, ``display_time``, ``headline`` per line)."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                item = NewsItem(
                    firm_id=str(rec["firm_id"]),
                    display_time=parse_display_time(rec["display_time"]),
                    headline=str(rec["headline"]),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            items.append(item)
    return items


def write_firm_days(docs: Iterable[FirmDayDoc], path):
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            rec = {
                "firm_id": d.firm_id,
                "date": d.trading_day.isoformat(),
                "text": d.text,
                "item_count": d.item_count,
                "first_display_time": d.first_display_time.isoformat() if d.first_display_time else None,
                "last_display_time": d.last_display_time.isoformat() if d.last_display_time else None,
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_firm_days(path) -> list[FirmDayDoc]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                first = rec.get("first_display_time")
                last = rec.get("last_display_time")
                docs.append(
                    FirmDayDoc(
                        firm_id=str(rec["firm_id"]),
                        trading_day=date.fromisoformat(rec["date"]),
                        text=rec["text"],
                        item_count=int(rec["item_count"]),
                        first_display_time=parse_display_time(first) if first else None,
                        last_display_time=parse_display_time(last) if last else None,
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
    return docs
