"""Text embedding providers.

``SyntheticEmbedder`` realizes a declared label-affinity matrix exactly:
the affinity matrix is factored (A = X X^T) and the factor rows are placed
in a seeded orthonormal basis, so ``cos(e_a, e_b) == A[a][b]`` up to
round-off. Labels outside the vocabulary get hash-seeded directions drawn
from the orthogonal complement of that basis.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from .errors import ProviderContractError, TransportError, VocabularyError

log = logging.getLogger(__name__)


class EmbeddingProvider(Protocol):
    dim: int

    def embed_text(self, label: str) -> np.ndarray: ...


def canonical_label(label: str) -> str:
    return " ".join(label.lower().split())


def _label_seed(label: str, seed: int) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def affinity_matrix(affinity: Mapping[str, Mapping[str, float]] | None) -> tuple[list[str], np.ndarray]:
    """Expand a nested ``{a: {b: value}}`` mapping into a dense symmetric matrix.

    Missing off-diagonal entries default to 0 and the diagonal to 1.
    """
    affinity = affinity or {}
    labels: set[str] = set()
    for a, row in affinity.items():
        labels.add(canonical_label(a))
        labels.update(canonical_label(b) for b in row)
    vocab = sorted(labels)
    index = {lab: i for i, lab in enumerate(vocab)}
    n = len(vocab)
    A = np.eye(n)
    seen: dict[tuple[int, int], float] = {}
    for a, row in affinity.items():
        for b, v in row.items():
            i, j = index[canonical_label(a)], index[canonical_label(b)]
            v = float(v)
            if i == j:
                if abs(v - 1.0) > 1e-9:
                    raise ValueError(f"affinity diagonal for {vocab[i]!r} must be 1, got {v}")
                continue
            key = (min(i, j), max(i, j))
            if key in seen and abs(seen[key] - v) > 1e-9:
                raise ValueError(f"asymmetric affinity between {vocab[i]!r} and {vocab[j]!r}")
            seen[key] = v
            A[i, j] = A[j, i] = v
    return vocab, A


def validate_affinity(A: np.ndarray, tol: float = 1e-9) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("affinity matrix must be square")
    if not np.allclose(A, A.T, atol=tol):
        raise ValueError("affinity matrix must be symmetric")
    if not np.allclose(np.diag(A), 1.0, atol=tol):
        raise ValueError("affinity matrix must have unit diagonal")
    if A.size and np.linalg.eigvalsh(A).min() < -tol:
        raise ValueError("affinity matrix must be positive semidefinite")


class SyntheticEmbedder:
    def __init__(
        self,
        affinity: Mapping[str, Mapping[str, float]] | None = None,
        dim: int = 64,
        *,
        strict: bool = False,
        seed: int = 0,
    ):
        self.dim = int(dim)
        self.strict = strict
        self.seed = seed
        self.vocab, A = affinity_matrix(affinity)
        validate_affinity(A)
        n = len(self.vocab)
        if n > self.dim:
            raise ValueError(f"vocabulary of {n} labels cannot be realized in dimension {self.dim}")
        rng = np.random.default_rng(_label_seed("__basis__", seed))
        basis, _ = np.linalg.qr(rng.standard_normal((self.dim, self.dim)))
        self._basis = basis[:, :n]
        self._complement = basis[:, n:]
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        if n:
            w, V = np.linalg.eigh(A)
            X = V * np.sqrt(np.clip(w, 0.0, None))
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            for lab, row in zip(self.vocab, X):
                self._cache[lab] = self._finish(self._basis @ row)

    @staticmethod
    def _finish(v: np.ndarray) -> np.ndarray:
        v = v / np.linalg.norm(v)
        v.setflags(write=False)
        return v

    def embed_text(self, label: str) -> np.ndarray:
        key = canonical_label(label)
        if not key:
            raise ValueError("label must be nonempty")
        vec = self._cache.get(key)
        if vec is not None:
            return vec
        if self.strict:
            raise VocabularyError(f"label {key!r} not in embedder vocabulary")
        rng = np.random.default_rng(_label_seed(key, self.seed))
        if self._complement.shape[1]:
            vec = self._finish(self._complement @ rng.standard_normal(self._complement.shape[1]))
        else:
            vec = self._finish(rng.standard_normal(self.dim))
        with self._lock:
            self._cache.setdefault(key, vec)
        return self._cache[key]


class RemoteEmbedder:
    """Embeds text through an HTTP endpoint: POST ``{"texts": [...]}`` -> ``{"embeddings": [[...]]}``."""

    def __init__(
        self,
        endpoint: str | None = None,
        dim: int = 512,
        *,
        timeout: float = 10.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
        client=None,
    ):
        self.endpoint = endpoint or os.environ.get("EMBED_ENDPOINT")
        if not self.endpoint:
            raise ValueError("no embedding endpoint configured (set EMBED_ENDPOINT)")
        self.dim = int(dim)
        self.max_attempts = max(1, int(max_attempts))
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._cache: dict[str, np.ndarray] = {}

    def embed_texts(self, labels: Sequence[str]) -> list[np.ndarray]:
        keys = [canonical_label(lab) for lab in labels]
        missing = [k for k in dict.fromkeys(keys) if k not in self._cache]
        if missing:
            payload = None
            last_exc: Exception | None = None
            for attempt in range(1, self.max_attempts + 1):
                try:
                    resp = self._client.post(self.endpoint, json={"texts": missing})
                    resp.raise_for_status()
                    payload = resp.json()
                    break
                except (httpx.HTTPError, ValueError) as exc:
                    last_exc = exc
                    log.warning("embedding request failed (attempt %d/%d): %s", attempt, self.max_attempts, exc)
                    if attempt < self.max_attempts and self.backoff:
                        time.sleep(self.backoff * attempt)
            if payload is None:
                raise TransportError(f"embedding endpoint {self.endpoint} failed: {last_exc}", self.max_attempts)
            vectors = payload.get("embeddings") if isinstance(payload, dict) else None
            if not isinstance(vectors, list) or len(vectors) != len(missing):
                raise ProviderContractError("embedding response must hold one vector per text")
            for key, raw in zip(missing, vectors):
                v = np.asarray(raw, dtype=np.float64)
                if v.shape != (self.dim,):
                    raise ProviderContractError(f"embedding for {key!r} has shape {v.shape}, expected ({self.dim},)")
                n = np.linalg.norm(v)
                if not np.isfinite(n) or n == 0:
                    raise ProviderContractError(f"embedding for {key!r} is zero or non-finite")
                self._cache[key] = v / n
        return [self._cache[k] for k in keys]

    def embed_text(self, label: str) -> np.ndarray:
        if not canonical_label(label):
            raise ValueError("label must be nonempty")
        return self.embed_texts([label])[0]
