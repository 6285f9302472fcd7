"""Token-state pooling into document vectors, and real-time variant choice."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyDocumentError, InsufficientHistoryError, InvariantError, ShapeError
from .variants import DEFAULT_VARIANT, VARIANT_ORDER, Variant


@dataclass(frozen=True, eq=False)
class TokenStates:
    """Hidden states for one text.

    Parameters
    ----------
    layers : array of shape ``(L, n_tokens, d)``
        One matrix per layer, first layer first.
    content_mask : bool array of shape ``(n_tokens,)``, optional
        False for padding and begin/end special positions. Defaults to all
        tokens being content.
    """

    layers: np.ndarray
    content_mask: np.ndarray | None = None

    def __post_init__(self):
        layers = np.asarray(self.layers, dtype=np.float64)
        if layers.ndim != 3 or layers.shape[0] < 1:
            raise ShapeError(f"layers must have shape (L, n_tokens, d), got {layers.shape}")
        n_tokens = layers.shape[1]
        if self.content_mask is None:
            mask = np.ones(n_tokens, dtype=bool)
        else:
            mask = np.asarray(self.content_mask, dtype=bool)
            if mask.shape != (n_tokens,):
                raise ShapeError(f"content_mask shape {mask.shape} does not match {n_tokens} tokens")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "content_mask", mask)

    @property
    def n_layers(self):
        return self.layers.shape[0]

    @property
    def dim(self):
        return self.layers.shape[2]


def document_vector(states: TokenStates, variant) -> np.ndarray:
    """Mean of content-token states under one of the three layer variants.

    ``all_layer_mean`` averages the per-layer content means over layers.
    """
    variant = Variant.parse(variant)
    mask = states.content_mask
    n = int(mask.sum())
    if n == 0:
        raise EmptyDocumentError("no content tokens to average")
    content = states.layers[:, mask, :]
    if variant is Variant.LAST_LAYER:
        out = content[-1].mean(axis=0)
    elif variant is Variant.FIRST_LAYER:
        out = content[0].mean(axis=0)
    else:
        out = content.mean(axis=1).mean(axis=0)
    if not np.all(np.isfinite(out)):
        raise InvariantError("document vector is not finite")
    return out


def document_vectors(states: TokenStates, variants=VARIANT_ORDER) -> dict[Variant, np.ndarray]:
    return {Variant.parse(v): document_vector(states, v) for v in variants}


def truncate_tail(text: str, max_chars: int | None) -> str:
    """Keep the head of ``text`` so the earliest headlines survive."""
    if max_chars is None or len(text) <= max_chars:
        return text
    return text[:max_chars]


def _annual_sharpe(x):
    x = np.asarray(x, dtype=np.float64)
    sd = x.std(ddof=1)
    if not sd > 0:
        return -np.inf if x.mean() <= 0 else np.inf
    return np.sqrt(252.0) * x.mean() / sd


def select_variant(perf_history: Mapping[Variant, Sequence[float]]) -> Variant:
    """Variant whose H-L history has the highest annualized Sharpe ratio.

    Exact ties resolve in the order last_layer, all_layer_mean, first_layer.
    Raises :class:`InsufficientHistoryError` with fewer than two observations;
    callers fall back to :data:`DEFAULT_VARIANT`.
    """
    hist = {Variant.parse(k): np.asarray(v, dtype=np.float64) for k, v in perf_history.items()}
    if not hist:
        raise InsufficientHistoryError("no variant histories supplied")
    lengths = {len(v) for v in hist.values()}
    if len(lengths) != 1:
        raise ShapeError(f"variant histories have different lengths {sorted(lengths)}")
    if lengths.pop() < 2:
        raise InsufficientHistoryError("need at least two days of H-L history")
    best, best_sr = None, -np.inf
    for v in VARIANT_ORDER:
        if v not in hist:
            continue
        sr = _annual_sharpe(hist[v])
        if best is None or sr > best_sr:
            best, best_sr = v, sr
    return best


def select_variant_or_default(perf_history) -> Variant:
    try:
        return select_variant(perf_history)
    except InsufficientHistoryError:
        return DEFAULT_VARIANT
