"""Model backends: SQL generation and text embedding.

Generation and embedding each come in three interchangeable flavors: a remote
HTTP service, a deterministic mock, and an offline cache (replay file for
generation, vector store file for embeddings). Everything here is safe to call
from worker threads up to the configured parallelism.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import sqlite3
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import requests

from .dataset import is_null_marker
from .prompt import PromptBundle
from .retrieval import EmbeddingVector, VectorStoreFormatError, load_vector_store


class BackendError(RuntimeError):
    pass


class BackendTimeoutError(BackendError):
    pass


class RateLimitedError(BackendError):
    pass


class MalformedResponseError(BackendError):
    pass


class CacheMissError(BackendError):
    """Replay/mock backend has no recorded output for this input."""


class MissingVectorError(BackendError):
    """File-backed embedding provider has no vector for a text."""


@dataclass(frozen=True)
class DecodingConfig:
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_p is not None and not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with full jitter for 429s and timeouts."""

    max_attempts: int = 5
    base_delay: float = 1.0
    factor: float = 2.0


@dataclass(frozen=True)
class ModelConfig:
    model_id: str
    # http(s)://... | replay:<cache file> | mock:<script file>
    endpoint: str
    decoding: DecodingConfig = DecodingConfig()
    # ensemble emission rank; 1 is highest
    priority: int = 1
    response_path: str = "choices.0.message.content"
    token_env: str = "LLM_API_TOKEN"
    timeout_s: float = 60.0


@dataclass(frozen=True)
class GenerationResult:
    question_id: str
    model_id: str
    raw_output: str
    extracted: str | None
    latency_ms: float
    from_cache: bool


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    model_id: str
    # http_service | vector_file | mock
    source: str
    dims: int
    # URL for http_service, store path for vector_file, unused for mock
    location: str | None = None

    def __post_init__(self) -> None:
        if self.source not in ("http_service", "vector_file", "mock"):
            raise ValueError(f"unknown embedding source {self.source!r}")
        if self.dims < 1:
            raise ValueError("dims must be >= 1")
        if self.source in ("http_service", "vector_file") and not self.location:
            raise ValueError(f"{self.source} provider needs a location")


def prompt_cache_key(prompt_text: str) -> str:
    """Replay caches key on the full prompt text, so any template or schema
    change invalidates stale entries instead of silently reusing them."""
    return hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# --- SQL extraction -------------------------------------------------------

_FENCE_TAG = re.compile(r"[A-Za-z0-9_+-]*\s*")


def _strip_fences(text: str) -> str:
    if text.startswith("```") and text.endswith("```") and len(text) >= 6:
        inner = text[3:-3]
        first, sep, rest = inner.partition("\n")
        if sep and _FENCE_TAG.fullmatch(first):
            inner = rest
        return inner.strip()
    return text


def _first_top_level_semicolon(text: str) -> int | None:
    i = 0
    length = len(text)
    while i < length:
        ch = text[i]
        if ch == ";":
            return i
        if ch == "'" or ch == '"' or ch == "`":
            quote = ch
            i += 1
            while i < length:
                if text[i] == quote:
                    # doubled quote = escaped
                    if i + 1 < length and text[i + 1] == quote:
                        i += 2
                        continue
                    break
                i += 1
        elif ch == "[":
            while i < length and text[i] != "]":
                i += 1
        elif ch == "-" and text[i : i + 2] == "--":
            while i < length and text[i] != "\n":
                i += 1
        elif ch == "/" and text[i : i + 2] == "/*":
            end = text.find("*/", i + 2)
            i = length if end == -1 else end + 1
        i += 1
    return None


_SYNTAX_REJECT = ("syntax error", "incomplete input", "unrecognized token")


def _syntax_plausible(sql: str) -> bool:
    """True if SQLite's parser gets past `sql` without a syntax-class error.

    Runs against a throwaway in-memory connection with a deny-all authorizer,
    so nothing can execute or touch the filesystem; semantic failures like
    missing tables count as plausible because parsing succeeded.
    """
    conn = sqlite3.connect(":memory:")
    try:
        conn.set_authorizer(lambda *args: sqlite3.SQLITE_DENY)
        try:
            conn.execute(sql)
        except (sqlite3.Warning, sqlite3.ProgrammingError):
            return False
        except sqlite3.Error as exc:
            msg = str(exc).lower()
            return not any(mark in msg for mark in _SYNTAX_REJECT)
        return True
    finally:
        conn.close()


def _prune_trailing_prose(text: str) -> str:
    lines = text.split("\n")
    for keep in range(len(lines), 0, -1):
        candidate = "\n".join(lines[:keep]).rstrip()
        if candidate and _syntax_plausible(candidate):
            return candidate
    return text


def extract_sql(raw_output: str) -> str | None:
    """Pull a single SQL statement (or the unanswerable marker) out of raw
    model output.

    Steps: trim, strip one fence pair, null-marker check, cut at the first
    top-level semicolon; without a semicolon, drop trailing lines that the
    SQL parser rejects outright (models like to append prose). Returns None
    for the null marker or an empty remainder; never raises.
    """
    text = _strip_fences(raw_output.strip())
    if not text or is_null_marker(text):
        return None
    cut = _first_top_level_semicolon(text)
    if cut is not None:
        text = text[:cut]
    elif "\n" in text and not _syntax_plausible(text):
        text = _prune_trailing_prose(text)
    text = text.strip()
    if text.endswith(";"):
        text = text[:-1].rstrip()
    if not text or is_null_marker(text):
        return None
    return text


# --- generation backends --------------------------------------------------


def _walk_response_path(doc: object, path: str) -> object:
    node = doc
    for token in path.split("."):
        if isinstance(node, list):
            try:
                node = node[int(token)]
            except (ValueError, IndexError) as exc:
                raise MalformedResponseError(f"bad response path at {token!r}") from exc
        elif isinstance(node, dict):
            if token not in node:
                raise MalformedResponseError(f"response missing field {token!r}")
            node = node[token]
        else:
            raise MalformedResponseError(f"cannot descend into {type(node).__name__}")
    return node


class HttpGenerationBackend:
    """POSTs a single-message chat payload and retries 429/timeout with
    exponentially growing, fully jittered sleeps."""

    def __init__(
        self,
        config: ModelConfig,
        retry: RetryPolicy = RetryPolicy(),
        rng: random.Random | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self.retry = retry
        self._rng = rng or random.Random()
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _payload(self, prompt_text: str) -> dict:
        payload: dict = {
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": prompt_text}],
        }
        dec = self.config.decoding
        if dec.temperature is not None:
            payload["temperature"] = dec.temperature
        if dec.top_p is not None:
            payload["top_p"] = dec.top_p
        if dec.max_tokens is not None:
            payload["max_tokens"] = dec.max_tokens
        return payload

    def complete(self, prompt_text: str, question_id: str) -> tuple[str, bool]:
        last_error: BackendError | None = None
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                response = requests.post(
                    self.config.endpoint,
                    json=self._payload(prompt_text),
                    headers=self._headers(),
                    timeout=self.config.timeout_s,
                )
            except requests.Timeout:
                last_error = BackendTimeoutError(
                    f"{self.config.model_id}: timed out after {self.config.timeout_s}s"
                )
            except requests.RequestException as exc:
                raise MalformedResponseError(f"{self.config.model_id}: {exc}") from exc
            else:
                if response.status_code == 429:
                    last_error = RateLimitedError(f"{self.config.model_id}: HTTP 429")
                elif 200 <= response.status_code < 300:
                    try:
                        doc = response.json()
                    except ValueError as exc:
                        raise MalformedResponseError(
                            f"{self.config.model_id}: response is not JSON"
                        ) from exc
                    text = _walk_response_path(doc, self.config.response_path)
                    if not isinstance(text, str):
                        raise MalformedResponseError(
                            f"{self.config.model_id}: response text field is "
                            f"{type(text).__name__}, not str"
                        )
                    return text, False
                else:
                    raise MalformedResponseError(
                        f"{self.config.model_id}: HTTP {response.status_code}"
                    )
            if attempt < self.retry.max_attempts:
                ceiling = self.retry.base_delay * self.retry.factor ** (attempt - 1)
                self._sleep(self._rng.uniform(0.0, ceiling))
        assert last_error is not None
        raise last_error


class ReplayBackend:
    """Serves recorded outputs from a JSON file keyed by prompt hash."""

    def __init__(self, config: ModelConfig, cache_path: str | Path) -> None:
        self.config = config
        self._path = Path(cache_path)
        self._lock = threading.Lock()
        self._cache: dict[str, str] | None = None

    def _load(self) -> dict[str, str]:
        with self._lock:
            if self._cache is None:
                try:
                    doc = json.loads(self._path.read_text(encoding="utf-8"))
                except (OSError, ValueError) as exc:
                    raise MalformedResponseError(
                        f"replay cache {self._path}: {exc}"
                    ) from exc
                if not isinstance(doc, dict) or not all(
                    isinstance(v, str) for v in doc.values()
                ):
                    raise MalformedResponseError(
                        f"replay cache {self._path} must map hash -> output string"
                    )
                self._cache = doc
            return self._cache

    def complete(self, prompt_text: str, question_id: str) -> tuple[str, bool]:
        key = prompt_cache_key(prompt_text)
        cache = self._load()
        if key not in cache:
            raise CacheMissError(
                f"{self.config.model_id}: no replay entry for {question_id} "
                f"(prompt hash {key[:12]}...)"
            )
        return cache[key], True


class MockBackend:
    """Deterministic scripted outputs, keyed by question id.

    The script is either a mapping (optionally with a "*" fallback) or a
    callable (question_id, prompt_text) -> output.
    """

    def __init__(
        self,
        config: ModelConfig,
        script: Mapping[str, str] | Callable[[str, str], str],
    ) -> None:
        self.config = config
        self._script = script

    @classmethod
    def from_file(cls, config: ModelConfig, path: str | Path) -> "MockBackend":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict) or not all(isinstance(v, str) for v in doc.values()):
            raise MalformedResponseError(f"mock script {path} must map id -> output")
        return cls(config, doc)

    def complete(self, prompt_text: str, question_id: str) -> tuple[str, bool]:
        if callable(self._script):
            return self._script(question_id, prompt_text), False
        if question_id in self._script:
            return self._script[question_id], False
        if "*" in self._script:
            return self._script["*"], False
        raise CacheMissError(f"{self.config.model_id}: no scripted output for {question_id}")


def build_generation_backend(
    config: ModelConfig,
    retry: RetryPolicy = RetryPolicy(),
    rng: random.Random | None = None,
):
    if config.endpoint.startswith("replay:"):
        return ReplayBackend(config, config.endpoint[len("replay:") :])
    if config.endpoint.startswith("mock:"):
        return MockBackend.from_file(config, config.endpoint[len("mock:") :])
    if config.endpoint.startswith(("http://", "https://")):
        return HttpGenerationBackend(config, retry=retry, rng=rng)
    raise ValueError(f"unrecognized endpoint {config.endpoint!r}")


def generate(prompt: PromptBundle, config: ModelConfig, backend=None) -> GenerationResult:
    """Run one prompt through a backend and extract the SQL answer."""
    if backend is None:
        backend = build_generation_backend(config)
    start = time.perf_counter()
    raw_output, from_cache = backend.complete(prompt.text, prompt.question_id)
    latency_ms = (time.perf_counter() - start) * 1000.0
    return GenerationResult(
        question_id=prompt.question_id,
        model_id=config.model_id,
        raw_output=raw_output,
        extracted=extract_sql(raw_output),
        latency_ms=latency_ms,
        from_cache=from_cache,
    )


# --- embedding providers --------------------------------------------------


class FileVectorProvider:
    """Serves vectors recorded in a store file keyed by exact text hash."""

    def __init__(self, config: EmbeddingProviderConfig) -> None:
        self.config = config
        self.model_id = config.model_id
        self._lock = threading.Lock()
        self._entries: dict[str, EmbeddingVector] | None = None

    def _load(self) -> dict[str, EmbeddingVector]:
        with self._lock:
            if self._entries is None:
                store = load_vector_store(self.config.location)
                if store.model_id != self.config.model_id:
                    raise VectorStoreFormatError(
                        f"store {self.config.location} is for {store.model_id!r}, "
                        f"provider wants {self.config.model_id!r}"
                    )
                if store.dims != self.config.dims:
                    raise VectorStoreFormatError(
                        f"store dims {store.dims} != configured {self.config.dims}"
                    )
                self._entries = store.entries
            return self._entries

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        entries = self._load()
        out = []
        for text in texts:
            key = text_hash(text)
            if key not in entries:
                raise MissingVectorError(
                    f"{self.model_id}: no stored vector for text {text[:40]!r}"
                )
            out.append(entries[key])
        return out


class MockEmbeddingProvider:
    """Deterministic pseudo-vectors derived from sha256(model_id | text)."""

    def __init__(self, config: EmbeddingProviderConfig) -> None:
        self.config = config
        self.model_id = config.model_id

    def _vector(self, text: str) -> EmbeddingVector:
        digest = hashlib.sha256(f"{self.model_id}|{text}".encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        values = tuple(rng.uniform(-1.0, 1.0) for _ in range(self.config.dims))
        return EmbeddingVector(self.model_id, self.config.dims, values)

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self._vector(t) for t in texts]


class HttpEmbeddingProvider:
    """Client for the embedding sidecar: POST {"model","texts"} -> {"vectors"}."""

    def __init__(self, config: EmbeddingProviderConfig) -> None:
        self.config = config
        self.model_id = config.model_id
        self.timeout_s = 60.0

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        try:
            response = requests.post(
                self.config.location,
                json={"model": self.model_id, "texts": list(texts)},
                timeout=self.timeout_s,
            )
        except requests.Timeout as exc:
            raise BackendTimeoutError(f"{self.model_id}: embed timed out") from exc
        except requests.RequestException as exc:
            raise MalformedResponseError(f"{self.model_id}: {exc}") from exc
        if not (200 <= response.status_code < 300):
            raise MalformedResponseError(
                f"{self.model_id}: embed HTTP {response.status_code}"
            )
        try:
            doc = response.json()
        except ValueError as exc:
            raise MalformedResponseError(f"{self.model_id}: embed response not JSON") from exc
        vectors = doc.get("vectors") if isinstance(doc, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise MalformedResponseError(
                f"{self.model_id}: expected {len(texts)} vectors, "
                f"got {len(vectors) if isinstance(vectors, list) else 'none'}"
            )
        out = []
        for row in vectors:
            if not isinstance(row, list) or len(row) != self.config.dims:
                raise MalformedResponseError(
                    f"{self.model_id}: vector dims != configured {self.config.dims}"
                )
            out.append(
                EmbeddingVector(
                    self.model_id, self.config.dims, tuple(float(x) for x in row)
                )
            )
        return out


def build_embedding_provider(config: EmbeddingProviderConfig):
    if config.source == "vector_file":
        return FileVectorProvider(config)
    if config.source == "mock":
        return MockEmbeddingProvider(config)
    return HttpEmbeddingProvider(config)
