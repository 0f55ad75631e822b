"""Image/text embedding gateway (CLIP-style joint space).

The gateway normalizes every vector it hands out, so downstream similarity
is a plain dot product. Backends only need to return raw vectors.
"""

from __future__ import annotations

import base64
import hashlib
import io
import logging
import threading
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
import requests
from PIL import Image

from .errors import ConfigError, TransportError

logger = logging.getLogger(__name__)

CLIP_DIM = 512
DEFAULT_TEMPLATES = ("a photo of a {}", "a photo of the {}")


@dataclass(frozen=True)
class TextQuery:
    raw: str
    templated: tuple[str, ...]

    def __post_init__(self):
        if not self.raw.strip():
            raise ValueError("query text is empty")
        if not self.templated:
            raise ValueError("query needs at least one templated expansion")

    @classmethod
    def build(cls, raw: str, templates: Sequence[str] = DEFAULT_TEMPLATES) -> "TextQuery":
        raw = raw.strip()
        return cls(raw, tuple(t.format(raw) for t in templates))

    @classmethod
    def plain(cls, raw: str) -> "TextQuery":
        """The bare text with no prompt template."""
        return cls.build(raw, ("{}",))


def content_hash(pixels: np.ndarray) -> str:
    arr = np.ascontiguousarray(pixels)
    h = hashlib.sha256()
    h.update(f"{arr.dtype.str}{arr.shape}".encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def encode_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def l2_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two embeddings (cosine similarity for unit vectors)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def similarities(embeds: np.ndarray, text: np.ndarray) -> np.ndarray:
    """Similarity of each row of ``embeds`` with ``text``.

    Row-by-row dot products, so identical rows always get identical scores
    (a blocked matrix-vector product does not guarantee that).
    """
    return np.array([float(np.dot(row, text)) for row in embeds])


class EmbeddingBackend(Protocol):
    backend_id: str

    def embed_image(self, pixels: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


class MockEmbeddingBackend:
    """Deterministic stand-in: each distinct input maps to a fixed random vector.

    The vector is drawn from a generator seeded by a hash of the input bytes,
    so identical pixels (or strings) always embed identically.
    """

    def __init__(self, dim: int = CLIP_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.backend_id = f"mock-{dim}-{seed}"
        self.calls = 0
        self._lock = threading.Lock()

    def _vector(self, kind: bytes, payload: bytes) -> np.ndarray:
        with self._lock:
            self.calls += 1
        digest = hashlib.sha256(kind + self.seed.to_bytes(8, "little") + payload).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:16], "little"))
        return rng.standard_normal(self.dim)

    def embed_image(self, pixels):
        arr = np.ascontiguousarray(pixels, dtype=np.uint8)
        return self._vector(b"img", f"{arr.shape}".encode() + arr.tobytes())

    def embed_text(self, text):
        return self._vector(b"txt", text.encode("utf-8"))


class HttpEmbeddingBackend:
    """Remote embedding service.

    Each request is a JSON POST of ``{"image": <base64 PNG>}`` or
    ``{"text": <str>}``; the response body is a JSON float array (a
    ``{"embedding": [...]}`` wrapper is also accepted).
    """

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 2, backoff: float = 0.5):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.backend_id = f"http:{url}"
        self._session = requests.Session()

    def _post(self, payload: dict) -> np.ndarray:
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.post(self.url, json=payload, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise requests.HTTPError(f"server error {resp.status_code}")
                resp.raise_for_status()
                body = resp.json()
                if isinstance(body, dict):
                    body = body.get("embedding")
                return np.asarray(body, dtype=np.float64)
            except (requests.RequestException, ValueError) as exc:
                last_exc = exc
                logger.warning("embedding request failed (attempt %d): %s", attempt + 1, exc)
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        raise TransportError(f"embedding backend {self.url} failed: {last_exc}")

    def embed_image(self, pixels):
        return self._post({"image": base64.b64encode(encode_png(pixels)).decode("ascii")})

    def embed_text(self, text):
        return self._post({"text": text})


class EmbeddingGateway:
    """Normalizing, caching front end over an embedding backend.

    Args:
        backend: object implementing ``embed_image``/``embed_text``.
        dim: expected embedding dimension; a backend returning anything
            else is a configuration error.
        cache: keep normalized vectors keyed by (backend id, content hash).
        cache_size: least-recently-used entries beyond this are evicted.
        max_workers: thread pool size for batched encodes.
    """

    def __init__(self, backend: EmbeddingBackend, dim: int = CLIP_DIM, cache: bool = True, cache_size: int = 50_000, max_workers: int = 8):
        self.backend = backend
        self.dim = dim
        self.use_cache = cache
        self.max_workers = max_workers
        self.cache_size = cache_size
        self._cache: OrderedDict[tuple[str, str], np.ndarray] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def _finish(self, raw) -> np.ndarray:
        v = np.asarray(raw, dtype=np.float64).ravel()
        if v.shape[0] != self.dim:
            raise ConfigError(f"backend returned dimension {v.shape[0]}, expected {self.dim}")
        v = l2_normalize(v)
        v.flags.writeable = False
        return v

    def _cached(self, key: tuple[str, str], compute) -> np.ndarray:
        if self.use_cache:
            with self._lock:
                hit = self._cache.get(key)
                if hit is not None:
                    self._cache.move_to_end(key)
                    self.hits += 1
                    return hit
                self.misses += 1
        v = self._finish(compute())
        if self.use_cache:
            with self._lock:
                self._cache[key] = v
                while len(self._cache) > self.cache_size:
                    self._cache.popitem(last=False)
        return v

    def encode_image(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected an H x W x 3 RGB image, got shape {pixels.shape}")
        key = (self.backend.backend_id, "img:" + content_hash(pixels))
        return self._cached(key, lambda: self.backend.embed_image(pixels))

    def encode_images(self, images: Sequence[np.ndarray]) -> np.ndarray:
        """Encode several images; rows of the result follow input order."""
        if not images:
            return np.empty((0, self.dim))
        if self.max_workers <= 1 or len(images) == 1:
            return np.stack([self.encode_image(im) for im in images])
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            return np.stack(list(pool.map(self.encode_image, images)))

    def encode_text(self, query: TextQuery | str) -> np.ndarray:
        if isinstance(query, str):
            query = TextQuery.plain(query)
        vecs = [
            self._cached((self.backend.backend_id, "txt:" + t), lambda t=t: self.backend.embed_text(t))
            for t in query.templated
        ]
        if len(vecs) == 1:
            return vecs[0]
        v = l2_normalize(np.mean(vecs, axis=0))
        v.flags.writeable = False
        return v

    def similarity(self, a: np.ndarray, b: np.ndarray) -> float:
        return similarity(a, b)

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()
