"""Ingestion, alignment and persistence of news, returns and embeddings."""

from .align import AlignedObservation, Alignment, ObservationArrays, align_next_day_returns, to_arrays
from .news import (
    FirmDayDoc,
    NewsItem,
    TradingCalendar,
    assign_trading_day,
    build_firm_days,
    load_news,
    read_firm_days,
    write_firm_days,
)
from .remote import fetch_embeddings_remote
from .returns import ReturnPanel, load_returns, write_returns
from .store import EmbeddingStore, IndexEntry, index_path_for, read_embedding_store, write_embedding_store

__all__ = [
    "AlignedObservation",
    "Alignment",
    "EmbeddingStore",
    "FirmDayDoc",
    "IndexEntry",
    "NewsItem",
    "ObservationArrays",
    "ReturnPanel",
    "TradingCalendar",
    "align_next_day_returns",
    "assign_trading_day",
    "build_firm_days",
    "fetch_embeddings_remote",
    "index_path_for",
    "load_news",
    "load_returns",
    "read_embedding_store",
    "read_firm_days",
    "to_arrays",
    "write_embedding_store",
    "write_firm_days",
    "write_returns",
]
