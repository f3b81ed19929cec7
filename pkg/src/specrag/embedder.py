"""Text embedding providers.

Two providers share one contract: every returned vector is float32,
finite, and unit-normalized, and a query embeds identically to a document
with the same text.

* ``hash`` — deterministic feature hashing of unigrams and adjacent-token
  bigrams into signed buckets (FNV-1a 64-bit). Fully offline and
  reproducible; the default for tests and local runs.
* ``remote`` — JSON-over-HTTP embeddings endpoint with batching and
  exponential-backoff retries on transient failures.
"""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import DimMismatch, EmptyInput, InvalidParams, NoTokens, ProviderError

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "TELECOMRAG_EMBED_API_KEY"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# Unicode alphanumeric runs, underscore excluded.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_BACKOFF_BASE_S = 0.5
_BACKOFF_FACTOR = 2.0
_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass
class EmbedderConfig:
    """Provider selection plus per-kind settings."""

    kind: str = "hash"  # "hash" | "remote"
    dim: int = 256  # hash provider only
    base_url: str = ""
    model_name: str = "text-embedding-ada-002"
    api_key_env: str = DEFAULT_API_KEY_ENV
    batch_size: int = 128
    timeout_s: float = 30.0
    max_retries: int = 3
    max_input_chars: int = 32000  # 8x the default chunk size

    def __post_init__(self) -> None:
        if self.kind not in ("hash", "remote"):
            raise InvalidParams(f"unknown embedder kind: {self.kind!r}")
        if self.kind == "hash" and self.dim < 8:
            raise InvalidParams(f"hash embedder dim must be >= 8, got {self.dim}")
        if self.kind == "remote" and not self.base_url:
            raise InvalidParams("remote embedder requires base_url")
        if self.batch_size < 1:
            raise InvalidParams("batch_size must be positive")


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric boundaries."""
    return _TOKEN_RE.findall(text.lower())


def normalize(values: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm; result is float32."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidParams("embedding contains non-finite values")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise InvalidParams("cannot normalize a zero vector")
    return (arr / norm).astype(np.float32)


def hash_embed(text: str, dim: int) -> np.ndarray:
    """Deterministic signed feature hashing of unigrams + adjacent bigrams.

    Each feature hashes with FNV-1a 64; the bucket is ``h mod dim`` and the
    sign is taken from bit 63 of ``h``. Accumulation runs in token order in
    float32 before unit normalization, so identical inputs give bitwise
    identical vectors.
    """
    if dim < 8:
        raise InvalidParams(f"dim must be >= 8, got {dim}")
    tokens = tokenize(text)
    if not tokens:
        raise NoTokens(f"no alphanumeric tokens in {text[:40]!r}")
    acc = np.zeros(dim, dtype=np.float32)
    features = list(tokens)
    features.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    for feature in features:
        h = fnv1a64(feature.encode("utf-8"))
        sign = np.float32(1.0) if (h >> 63) == 0 else np.float32(-1.0)
        acc[h % dim] += sign
    return normalize(acc)


def _prepare_texts(texts: list[str], cfg: EmbedderConfig) -> list[str]:
    if not texts:
        raise EmptyInput("embed_batch requires at least one text")
    prepared = []
    for i, text in enumerate(texts):
        if not text or not text.strip():
            raise EmptyInput(f"text at position {i} is empty")
        if len(text) > cfg.max_input_chars:
            logger.warning(
                "truncating input %d from %d to %d chars", i, len(text), cfg.max_input_chars
            )
            text = text[: cfg.max_input_chars]
        prepared.append(text)
    return prepared


class HashEmbedder:
    """Offline provider backed by :func:`hash_embed`."""

    def __init__(self, cfg: EmbedderConfig):
        self.cfg = cfg
        self.dim = cfg.dim
        self.kind = "hash"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [hash_embed(t, self.dim) for t in _prepare_texts(texts, self.cfg)]

    def embed_query(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


class RemoteEmbedder:
    """JSON-over-HTTP embeddings client.

    POSTs ``{base_url}/embeddings`` with ``{"model", "input": [...]}`` and
    reads ``{"data": [{"index", "embedding"}...]}``, re-ordering rows by
    ``index``. Inputs are split into sub-batches of at most
    ``cfg.batch_size``. HTTP 429/5xx and timeouts are retried with
    exponential backoff (base 500 ms, factor 2) up to ``cfg.max_retries``
    retries. The dimension is taken from the first response and enforced for
    the rest of the run; vectors are re-normalized client-side regardless of
    what the provider claims.
    """

    def __init__(self, cfg: EmbedderConfig, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        self.kind = "remote"
        self.dim: int | None = None
        headers = {}
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=cfg.base_url,
            headers=headers,
            timeout=cfg.timeout_s,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _post_with_retries(self, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt > 0:
                time.sleep(_BACKOFF_BASE_S * _BACKOFF_FACTOR ** (attempt - 1))
            try:
                resp = self._client.post("/embeddings", json=payload)
            except httpx.TimeoutException as exc:
                last_error = exc
                continue
            except httpx.HTTPError as exc:
                raise ProviderError(f"embeddings request failed: {exc}") from exc
            if resp.status_code == 200:
                return resp.json()
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = ProviderError(
                    f"embeddings endpoint returned {resp.status_code}",
                    status=resp.status_code,
                    body_excerpt=resp.text[:200],
                )
                continue
            raise ProviderError(
                f"embeddings endpoint returned {resp.status_code}",
                status=resp.status_code,
                body_excerpt=resp.text[:200],
            )
        if isinstance(last_error, ProviderError):
            raise last_error
        raise ProviderError(f"embeddings request failed after retries: {last_error}")

    def _embed_sub_batch(self, texts: list[str]) -> list[np.ndarray]:
        body = self._post_with_retries({"model": self.cfg.model_name, "input": texts})
        try:
            rows = sorted(body["data"], key=lambda r: r["index"])
            raw = [np.asarray(r["embedding"], dtype=np.float64) for r in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embeddings response: {exc}") from exc
        if len(raw) != len(texts):
            raise ProviderError(
                f"provider returned {len(raw)} embeddings for {len(texts)} inputs"
            )
        vectors = []
        for values in raw:
            if self.dim is None:
                self.dim = int(values.shape[0])
            elif values.shape[0] != self.dim:
                raise DimMismatch(
                    f"provider returned dim {values.shape[0]}, expected {self.dim}"
                )
            vectors.append(normalize(values))
        return vectors

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        prepared = _prepare_texts(texts, self.cfg)
        out: list[np.ndarray] = []
        for i in range(0, len(prepared), self.cfg.batch_size):
            out.extend(self._embed_sub_batch(prepared[i : i + self.cfg.batch_size]))
        return out

    def embed_query(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


Embedder = HashEmbedder | RemoteEmbedder


def build_embedder(cfg: EmbedderConfig, transport: httpx.BaseTransport | None = None) -> Embedder:
    if cfg.kind == "hash":
        return HashEmbedder(cfg)
    return RemoteEmbedder(cfg, transport=transport)


def embed_batch(texts: list[str], cfg: EmbedderConfig) -> list[np.ndarray]:
    """One unit vector per input text, order preserved."""
    return build_embedder(cfg).embed_batch(texts)


def embed_query(text: str, cfg: EmbedderConfig) -> np.ndarray:
    """Embed a query in the same latent space as documents."""
    return build_embedder(cfg).embed_query(text)
