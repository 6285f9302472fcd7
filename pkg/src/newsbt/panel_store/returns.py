"""Daily close-to-close return panel."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from types import MappingProxyType
from typing import Mapping

import numpy as np

from ..errors import DuplicateKeyError, InvariantError, ParseError

RETURNS_HEADER = ["firm_id", "date", "ret"]


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """Map ``(firm_id, trading_day) -> simple return`` plus its trading calendar.

    The panel is immutable after construction, so concurrent readers are safe.
    """

    returns: Mapping[tuple[str, date], float]
    calendar: tuple[date, ...]
    _day_index: Mapping[date, int] = field(init=False, repr=False)
    _dense: dict = field(init=False, repr=False)

    def __post_init__(self):
        cal = tuple(self.calendar)
        for a, b in zip(cal, cal[1:]):
            if not a < b:
                raise InvariantError(f"calendar not strictly increasing at {a} -> {b}")
        index = {d: i for i, d in enumerate(cal)}
        rets = dict(self.returns)
        for (firm, day), r in rets.items():
            if day not in index:
                raise InvariantError(f"return for {firm} on {day} is outside the calendar")
            if not math.isfinite(r):
                raise InvariantError(f"non-finite return for {firm} on {day}")
        object.__setattr__(self, "calendar", cal)
        object.__setattr__(self, "returns", MappingProxyType(rets))
        object.__setattr__(self, "_day_index", MappingProxyType(index))
        object.__setattr__(self, "_dense", {})

    @classmethod
    def from_records(cls, records, calendar=None):
        """Build from ``(firm_id, date, ret)`` triples, rejecting duplicate keys."""
        rets = {}
        for firm, day, r in records:
            key = (firm, day)
            if key in rets:
                raise DuplicateKeyError(f"duplicate return for {firm} on {day}")
            rets[key] = float(r)
        if calendar is None:
            calendar = sorted({day for _, day in rets})
        return cls(rets, tuple(calendar))

    def __len__(self):
        return len(self.returns)

    def get(self, firm_id, day):
        return self.returns.get((firm_id, day))

    def day_index(self, day):
        """Position of ``day`` in the calendar, or ``None`` if it is not a trading day."""
        return self._day_index.get(day)

    def shift(self, day, steps):
        """Trading day ``steps`` positions after ``day``; ``None`` past the calendar end."""
        i = self._day_index.get(day)
        if i is None:
            return None
        j = i + steps
        if 0 <= j < len(self.calendar):
            return self.calendar[j]
        return None

    def next_day(self, day):
        return self.shift(day, 1)

    def dense(self):
        """``(firm_ids, matrix)`` with ``matrix[f, t]`` the return, NaN where absent.

        Built once and cached.
        """
        if "m" not in self._dense:
            firms = sorted({f for f, _ in self.returns})
            fpos = {f: i for i, f in enumerate(firms)}
            mat = np.full((len(firms), len(self.calendar)), np.nan)
            for (f, d), r in self.returns.items():
                mat[fpos[f], self._day_index[d]] = r
            mat.flags.writeable = False
            self._dense["m"] = (tuple(firms), fpos, mat)
        firms, _, mat = self._dense["m"]
        return firms, mat

    def firm_position(self, firm_id):
        self.dense()
        return self._dense["m"][1].get(firm_id)


def load_returns(path) -> ReturnPanel:
    """Read a ``firm_id,date,ret`` CSV into a :class:`ReturnPanel`."""
    records = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header", line=1, path=path) from None
        if [h.strip() for h in header] != RETURNS_HEADER:
            raise ParseError(f"expected header {','.join(RETURNS_HEADER)}", line=1, path=path)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=line, path=path)
            firm, day_s, ret_s = (c.strip() for c in row)
            if not firm:
                raise ParseError("empty firm_id", line=line, path=path)
            try:
                day = date.fromisoformat(day_s)
            except ValueError:
                raise ParseError(f"bad date {day_s!r}", line=line, path=path) from None
            try:
                ret = float(ret_s)
            except ValueError:
                raise ParseError(f"bad ret {ret_s!r}", line=line, path=path) from None
            if not math.isfinite(ret):
                raise ParseError(f"non-finite ret {ret_s!r}", line=line, path=path)
            if (firm, day) in seen:
                raise DuplicateKeyError(f"{path}:line {line}: duplicate key ({firm}, {day})")
            seen.add((firm, day))
            records.append((firm, day, ret))
    return ReturnPanel.from_records(records)


def write_returns(panel: ReturnPanel, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RETURNS_HEADER)
        for (firm, day), r in sorted(panel.returns.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            w.writerow([firm, day.isoformat(), repr(float(r))])
