"""Client for an embedding inference service.

Wire protocol: ``POST {endpoint}/embed`` with ``{"texts": [...], "layers": "all"}``;
the response is ``{"dim": d, "states": [[[float] * d per token] per layer] per text}``
and may carry an optional ``"content_mask"`` list per text.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import httpx
import numpy as np

from ..embed_agg import TokenStates
from ..errors import ProtocolError, RemoteError

log = logging.getLogger(__name__)

RETRY_STATUS = {429, 500, 502, 503, 504}


def _post_with_retry(client, url, payload, attempts, backoff, sleep):
    last = None
    for attempt in range(attempts):
        try:
            resp = client.post(url, json=payload)
            if resp.status_code in RETRY_STATUS:
                raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
            resp.raise_for_status()
            return resp.json()
        except httpx.HTTPStatusError as exc:
            if exc.response.status_code not in RETRY_STATUS:
                raise RemoteError(f"{url}: HTTP {exc.response.status_code}") from exc
            last = exc
        except (httpx.TransportError, ValueError) as exc:
            last = exc
        if attempt + 1 < attempts:
            delay = backoff * (2**attempt)
            log.warning("embed request failed (%s), retrying in %.2fs", last, delay)
            sleep(delay)
    raise RemoteError(f"{url}: giving up after {attempts} attempts: {last}")


def _decode(body, n_texts):
    try:
        dim = int(body["dim"])
        states = body["states"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed response: {exc}") from None
    if dim <= 0:
        raise ProtocolError(f"server reported dim={dim}")
    if len(states) != n_texts:
        raise ProtocolError(f"expected {n_texts} texts in response, got {len(states)}")
    masks = body.get("content_mask") or [None] * n_texts
    out = []
    for text_states, mask in zip(states, masks):
        arr = np.asarray(text_states, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != dim or arr.shape[1] == 0:
            raise ProtocolError(f"token states of shape {arr.shape} do not match dim={dim}")
        out.append(TokenStates(arr, None if mask is None else np.asarray(mask, dtype=bool)))
    return dim, out


def fetch_embeddings_remote(
    endpoint: str,
    texts: Sequence[str],
    layers="all",
    *,
    batch_size: int = 16,
    max_in_flight: int = 4,
    attempts: int = 3,
    backoff: float = 0.5,
    timeout: float = 60.0,
    client: httpx.Client | None = None,
    sleep=time.sleep,
) -> list[TokenStates]:
    """Fetch per-layer token states for ``texts``, preserving input order.

    Requests are batched and up to ``max_in_flight`` run concurrently. Each
    batch is retried with exponential backoff; after ``attempts`` failures a
    :class:`RemoteError` is raised. All texts must come back with the same
    hidden dimension, otherwise :class:`ProtocolError`.
    """
    texts = list(texts)
    if not texts:
        raise ValueError("texts must be non-empty")
    url = endpoint.rstrip("/") + "/embed"
    batches = [texts[i : i + batch_size] for i in range(0, len(texts), batch_size)]
    own = client is None
    client = client or httpx.Client(timeout=timeout)
    try:

        def run(batch):
            body = _post_with_retry(client, url, {"texts": batch, "layers": layers}, attempts, backoff, sleep)
            return _decode(body, len(batch))

        if max_in_flight > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
                results = list(pool.map(run, batches))
        else:
            results = [run(b) for b in batches]
    finally:
        if own:
            client.close()

    dims = {d for d, _ in results}
    if len(dims) != 1:
        raise ProtocolError(f"inconsistent hidden dimensions across texts: {sorted(dims)}")
    return [s for _, batch_states in results for s in batch_states]
