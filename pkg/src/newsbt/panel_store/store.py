"""Binary embedding store.

Layout: ``b"CHEM"``, ``u16`` version (1), ``u32`` row count, ``u32`` dimension,
then a little-endian float32 row-major payload. The row index lives in a
JSONL sidecar, one ``{"firm_id", "date", "variant", "row"}`` object per line.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from ..errors import CorruptionError, FormatError, InvariantError, ParseError
from ..variants import Variant

MAGIC = b"CHEM"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


class IndexEntry(NamedTuple):
    firm_id: str
    date: date
    variant: Variant
    row: int


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Document vectors for (firm, trading day, variant) keys.

    ``matrix`` is read-only float32; the store is safe to share across threads.
    """

    matrix: np.ndarray
    index: tuple[IndexEntry, ...]

    def __post_init__(self):
        mat = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if mat.ndim != 2:
            raise InvariantError(f"embedding matrix must be 2-D, got shape {mat.shape}")
        mat.flags.writeable = False
        entries = tuple(
            IndexEntry(e[0], e[1], Variant.parse(e[2]), int(e[3])) for e in self.index
        )
        lookup = {}
        for e in entries:
            if not 0 <= e.row < mat.shape[0]:
                raise InvariantError(f"index entry {e} points outside a matrix of {mat.shape[0]} rows")
            key = (e.firm_id, e.date, e.variant)
            if key in lookup:
                raise InvariantError(f"duplicate index key {key}")
            lookup[key] = e.row
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "index", entries)
        object.__setattr__(self, "_lookup", lookup)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def __len__(self):
        return len(self.index)

    def row_of(self, firm_id, day, variant):
        return self._lookup.get((firm_id, day, Variant.parse(variant)))

    def vector(self, firm_id, day, variant):
        row = self.row_of(firm_id, day, variant)
        return None if row is None else self.matrix[row]

    def variants(self) -> tuple[Variant, ...]:
        present = {e.variant for e in self.index}
        return tuple(v for v in Variant if v in present)

    def keys(self, variant=None):
        """``(firm_id, date)`` keys in index order, optionally for one variant."""
        if variant is None:
            return [(e.firm_id, e.date) for e in self.index]
        v = Variant.parse(variant)
        return [(e.firm_id, e.date) for e in self.index if e.variant is v]

    def date_range(self, variant=None):
        days = [d for _, d in self.keys(variant)]
        return (min(days), max(days)) if days else None

    @classmethod
    def from_vectors(cls, vectors: Mapping[tuple[str, date, Variant], np.ndarray] | Iterable, dimension=None):
        """Pack ``{(firm, day, variant): vector}`` into a store, rows in key order given."""
        items = list(vectors.items()) if isinstance(vectors, Mapping) else list(vectors)
        if not items:
            d = 0 if dimension is None else dimension
            return cls(np.zeros((0, d), dtype=np.float32), ())
        mat = np.stack([np.asarray(v, dtype=np.float32) for _, v in items])
        index = tuple(IndexEntry(k[0], k[1], Variant.parse(k[2]), i) for i, (k, _) in enumerate(items))
        return cls(mat, index)

    def subset(self, keep) -> "EmbeddingStore":
        """Store restricted to index entries for which ``keep(entry)`` is true."""
        kept = [e for e in self.index if keep(e)]
        rows = sorted({e.row for e in kept})
        remap = {r: i for i, r in enumerate(rows)}
        mat = self.matrix[rows] if rows else np.zeros((0, self.dimension), np.float32)
        return EmbeddingStore(mat, tuple(e._replace(row=remap[e.row]) for e in kept))


def index_path_for(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".index.jsonl")


def write_embedding_store(store: EmbeddingStore, path, index_path=None):
    path = Path(path)
    index_path = Path(index_path) if index_path else index_path_for(path)
    n, d = store.matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d))
        fh.write(store.matrix.astype("<f4", copy=False).tobytes(order="C"))
    with open(index_path, "w", encoding="utf-8") as fh:
        for e in store.index:
            fh.write(
                json.dumps(
                    {"firm_id": e.firm_id, "date": e.date.isoformat(), "variant": e.variant.short, "row": e.row}
                )
                + "\n"
            )


def read_embedding_store(path, index_path=None) -> EmbeddingStore:
    path = Path(path)
    index_path = Path(index_path) if index_path else index_path_for(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = n * d * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise CorruptionError(f"{path}: payload has {len(payload)} bytes, header promises {expected}")
    mat = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(np.float32)

    entries = []
    with open(index_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entries.append(
                    IndexEntry(
                        str(rec["firm_id"]),
                        date.fromisoformat(rec["date"]),
                        Variant.parse(rec["variant"]),
                        int(rec["row"]),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(str(exc), line=lineno, path=index_path) from None
    return EmbeddingStore(mat, tuple(entries))
