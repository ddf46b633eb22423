"""Embedding providers: a deterministic local one and a remote HTTP one."""
from __future__ import annotations

import hashlib
import logging
import time
from typing import Protocol

import httpx
import numpy as np

from .errors import ProviderError

log = logging.getLogger(__name__)


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]: ...


class HashedBowEmbedder:
    """Seeded hashed bag-of-words embedder; unit-normalized output.

    Each lowercased whitespace token is hashed (with the seed) into one
    of `dim` buckets and counted. Fully deterministic across runs and
    machines, which is what the offline test path needs.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed

    def _bucket(self, token: str) -> int:
        digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little") % self.dim

    def embed(self, text: str) -> np.ndarray:
        tokens = text.lower().split()
        if not tokens:
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float32)
        for token in tokens:
            vec[self._bucket(token)] += 1.0
        # at least one token, so the norm is positive
        return vec / float(np.linalg.norm(vec))

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """Client for an embeddings HTTP endpoint (OpenAI-style request shape).

    Batches at most `batch_size` texts per request and retries transient
    failures with exponential backoff.
    """

    def __init__(self, base_url: str, model: str, dim: int,
                 api_key: str = "", batch_size: int = 64,
                 timeout: float = 120.0, max_retries: int = 3,
                 backoff: float = 1.0):
        if batch_size < 1 or batch_size > 64:
            raise ValueError("batch_size must be in 1..64")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.api_key = api_key
        self.batch_size = batch_size
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def _request(self, texts: list[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model, "input": texts}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = httpx.post(f"{self.base_url}/embeddings", json=payload,
                                  headers=headers, timeout=self.timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    last_error = ProviderError(f"HTTP {resp.status_code}")
                    continue
                resp.raise_for_status()
                data = resp.json()["data"]
                vectors = [np.asarray(item["embedding"], dtype=np.float32)
                           for item in sorted(data, key=lambda d: d["index"])]
                for vec in vectors:
                    if vec.shape != (self.dim,):
                        raise ProviderError(
                            f"provider returned dim {vec.shape}, expected {self.dim}")
                return vectors
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_error = exc
                log.warning("embedding request failed (attempt %d): %s",
                            attempt + 1, exc)
        raise ProviderError(f"embedding request failed: {last_error}")

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        return self._request([text])[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        for t in texts:
            if not t:
                raise ValueError("cannot embed empty text")
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            out.extend(self._request(texts[start:start + self.batch_size]))
        return out
