"""Text similarity backends for the What score.

Two providers share one interface: a deterministic lexical cosine and a
client for an external embedding service (CLAP-like). Raw scores are mapped
affinely from the provider's declared range onto [0, 1].
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
import unicodedata
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import Future
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

ENV_ENDPOINT = "FOASCENE_EMBED_URL"
ENV_TIMEOUT = "FOASCENE_EMBED_TIMEOUT"
ENV_BATCH = "FOASCENE_EMBED_BATCH"
ENV_RETRIES = "FOASCENE_EMBED_RETRIES"


class ServiceUnavailable(RuntimeError):
    """The embedding service could not be reached after all retries."""


class ProtocolError(RuntimeError):
    """The embedding service answered with something that breaks the wire contract."""


def normalize_tokens(text: str) -> List[str]:
    """NFC, lowercase, punctuation and symbols replaced by spaces, whitespace split. No stemming."""
    text = unicodedata.normalize("NFC", text).lower()
    cleaned = "".join(" " if unicodedata.category(ch)[0] in "PS" else ch for ch in text)
    return cleaned.split()


def lexical_cosine(a: str, b: str) -> float:
    """Cosine between token-count vectors; 0 when either side has no tokens."""
    ca, cb = Counter(normalize_tokens(a)), Counter(normalize_tokens(b))
    if not ca or not cb:
        return 0.0
    if ca == cb:
        return 1.0
    dot = sum(count * cb[token] for token, count in ca.items())
    norm = np.sqrt(sum(v * v for v in ca.values()) * sum(v * v for v in cb.values()))
    return float(min(1.0, dot / norm))


class SimilarityProvider:
    """Base class: subclasses implement :meth:`raw_similarity`."""

    kind: str = "abstract"
    declared_range: tuple = (0.0, 1.0)

    def raw_similarity(self, a: str, b: str) -> float:
        raise NotImplementedError

    def similarity(self, a: str, b: str) -> float:
        lo, hi = self.declared_range
        raw = self.raw_similarity(a, b)
        return float(np.clip((raw - lo) / (hi - lo), 0.0, 1.0))

    def prefetch(self, texts: Sequence[str]) -> None:
        """Hint that ``texts`` will be compared soon; providers may batch work."""


class LexicalSimilarity(SimilarityProvider):
    kind = "lexical"
    declared_range = (0.0, 1.0)

    def raw_similarity(self, a: str, b: str) -> float:
        return lexical_cosine(a, b)


@dataclass(frozen=True)
class EmbeddingConfig:
    endpoint: str = "http://127.0.0.1:8080/embed"
    timeout_s: float = 10.0
    batch_size: int = 64
    max_retries: int = 3
    backoff_s: float = 0.5

    def with_env(self, environ=None) -> "EmbeddingConfig":
        """Apply environment-variable overrides on top of this config."""
        env = os.environ if environ is None else environ
        updates = {}
        if env.get(ENV_ENDPOINT):
            updates["endpoint"] = env[ENV_ENDPOINT]
        if env.get(ENV_TIMEOUT):
            updates["timeout_s"] = float(env[ENV_TIMEOUT])
        if env.get(ENV_BATCH):
            updates["batch_size"] = int(env[ENV_BATCH])
        if env.get(ENV_RETRIES):
            updates["max_retries"] = int(env[ENV_RETRIES])
        return replace(self, **updates)


class EmbeddingClient:
    """Thread-safe client for ``POST /embed``.

    Vectors are cached by text. Concurrent requests for a text that is
    already in flight wait for that request instead of issuing another one.
    """

    def __init__(self, config: EmbeddingConfig = EmbeddingConfig()):
        if config.batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.config = config
        self._cache: Dict[str, np.ndarray] = {}
        self._inflight: Dict[str, Future] = {}
        self._lock = threading.Lock()
        self.request_count = 0
        self.texts_requested = 0

    def embed_batch(self, texts: Sequence[str]) -> List[np.ndarray]:
        """Unit-norm embeddings for ``texts`` (same order, duplicates allowed)."""
        texts = list(texts)
        if not texts:
            return []
        owned, waiting = [], {}
        with self._lock:
            for text in dict.fromkeys(texts):
                if text in self._cache:
                    continue
                if text in self._inflight:
                    waiting[text] = self._inflight[text]
                else:
                    future = Future()
                    self._inflight[text] = future
                    owned.append(text)
        try:
            for start in range(0, len(owned), self.config.batch_size):
                chunk = owned[start: start + self.config.batch_size]
                vectors = self._request(chunk)
                with self._lock:
                    for text, vector in zip(chunk, vectors):
                        self._cache[text] = vector
                        self._inflight.pop(text).set_result(vector)
        except BaseException as exc:
            with self._lock:
                for text in owned:
                    future = self._inflight.pop(text, None)
                    if future is not None:
                        future.set_exception(exc)
            raise
        for future in waiting.values():
            future.result()
        with self._lock:
            return [self._cache[text] for text in texts]

    def _request(self, texts: List[str]) -> List[np.ndarray]:
        body = json.dumps({"texts": texts}).encode("utf-8")
        cfg = self.config
        context = f"POST {cfg.endpoint} ({len(texts)} texts)"
        last_error = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
            request = urllib.request.Request(
                cfg.endpoint, data=body, method="POST", headers={"Content-Type": "application/json"}
            )
            with self._lock:
                self.request_count += 1
                self.texts_requested += len(texts)
            try:
                with urllib.request.urlopen(request, timeout=cfg.timeout_s) as response:
                    payload = response.read()
            except urllib.error.HTTPError as exc:
                if exc.code < 500:
                    raise ProtocolError(f"{context}: HTTP {exc.code} {exc.reason}") from exc
                last_error = exc
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last_error = exc
            else:
                return self._decode(payload, len(texts), context)
            log.warning("%s failed (attempt %d/%d): %s", context, attempt + 1, cfg.max_retries + 1, last_error)
        raise ServiceUnavailable(f"{context}: giving up after {cfg.max_retries + 1} attempts: {last_error}")

    @staticmethod
    def _decode(payload: bytes, expected: int, context: str) -> List[np.ndarray]:
        try:
            data = json.loads(payload)
        except (ValueError, UnicodeDecodeError) as exc:
            raise ProtocolError(f"{context}: response is not JSON") from exc
        if not isinstance(data, dict) or not isinstance(data.get("embeddings"), list):
            raise ProtocolError(f"{context}: response lacks an 'embeddings' list")
        rows = data["embeddings"]
        if len(rows) != expected:
            raise ProtocolError(f"{context}: expected {expected} embeddings, got {len(rows)}")
        try:
            matrix = np.asarray(rows, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"{context}: embeddings are not a numeric matrix") from exc
        if matrix.ndim != 2 or matrix.shape[1] == 0 or not np.all(np.isfinite(matrix)):
            raise ProtocolError(f"{context}: embeddings must be equal-length finite vectors")
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0):
            raise ProtocolError(f"{context}: zero-length embedding vector")
        return list(matrix / norms[:, None])


class EmbeddingSimilarity(SimilarityProvider):
    """Cosine of service embeddings, raw range [-1, 1]."""

    kind = "embedding_service"
    declared_range = (-1.0, 1.0)

    def __init__(self, client: EmbeddingClient):
        self.client = client

    def prefetch(self, texts: Sequence[str]) -> None:
        self.client.embed_batch([t for t in texts if t])

    def raw_similarity(self, a: str, b: str) -> float:
        va, vb = self.client.embed_batch([a, b])
        return float(np.clip(np.dot(va, vb), -1.0, 1.0))


class FallbackSimilarity(SimilarityProvider):
    """Uses ``primary`` until it raises ServiceUnavailable, then ``fallback`` for good.

    ``fell_back`` records the switch so reports can flag the provider change.
    """

    def __init__(self, primary: SimilarityProvider, fallback: Optional[SimilarityProvider] = None):
        self.primary = primary
        self.fallback = fallback or LexicalSimilarity()
        self.fell_back = False

    @property
    def active(self) -> SimilarityProvider:
        return self.fallback if self.fell_back else self.primary

    @property
    def kind(self) -> str:
        return self.active.kind

    @property
    def declared_range(self) -> tuple:
        return self.active.declared_range

    def _guard(self, fn):
        if not self.fell_back:
            try:
                return fn(self.primary)
            except ServiceUnavailable as exc:
                log.warning("similarity service unavailable, falling back to %s: %s", self.fallback.kind, exc)
                self.fell_back = True
        return fn(self.fallback)

    def prefetch(self, texts: Sequence[str]) -> None:
        self._guard(lambda p: p.prefetch(texts))

    def raw_similarity(self, a: str, b: str) -> float:
        return self._guard(lambda p: p.raw_similarity(a, b))

    def similarity(self, a: str, b: str) -> float:
        return self._guard(lambda p: p.similarity(a, b))


def make_provider(kind: str = "lexical", config: Optional[EmbeddingConfig] = None,
                  fallback: bool = True) -> SimilarityProvider:
    if kind == "lexical":
        return LexicalSimilarity()
    if kind == "embedding_service":
        provider = EmbeddingSimilarity(EmbeddingClient(config or EmbeddingConfig().with_env()))
        return FallbackSimilarity(provider) if fallback else provider
    raise ValueError(f"unknown similarity provider {kind!r}")
