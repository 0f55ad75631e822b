"""Visual question answering against a chat-style vision-language model.

Three pieces live here: prompt rendering from editable template files,
score parsing from free-text answers, and a gateway that sends requests,
retries, limits concurrency and writes an audit log.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
import requests

from .embedding import content_hash, encode_png
from .errors import BackendError, ImageTooLargeError, ScoreParseError, TransportError

logger = logging.getLogger(__name__)

PLAIN = "plain"
GRID = "grid"
SECTION_FILES = {
    "task": "task.txt",
    "context": "context.txt",
    "consideration": "consideration.txt",
    "output_reasoning": "output_reasoning.txt",
    "output_simple": "output_simple.txt",
}
SECTION_TITLES = {"task": "Task", "context": "Context", "consideration": "Consideration", "output": "Output"}


def load_templates(prompt_dir: str | Path | None = None) -> dict[str, str]:
    """Read the section templates, from ``prompt_dir`` if given, else the bundled defaults.

    A custom directory may override any subset of the files.
    """
    out = {}
    bundled = resources.files("cvad") / "prompts"
    for key, name in SECTION_FILES.items():
        custom = Path(prompt_dir) / name if prompt_dir else None
        if custom is not None and custom.is_file():
            out[key] = custom.read_text(encoding="utf-8").strip()
        else:
            out[key] = (bundled / name).read_text(encoding="utf-8").strip()
    return out


@dataclass(frozen=True)
class PromptText:
    variant: str
    sections: dict[str, str]
    rendered: str


def build_prompt(
    query: str,
    variant: str = PLAIN,
    reasoning: bool = True,
    consideration: bool = True,
    templates: dict[str, str] | None = None,
) -> PromptText:
    """Render the VQA prompt for ``query``.

    The grid variant adds a context section, placed right after the task,
    explaining the time order of the 2x2 grid cells.
    """
    query = query.strip()
    if not query:
        raise ValueError("query text is empty")
    if variant not in (PLAIN, GRID):
        raise ValueError(f"unknown prompt variant {variant!r}")
    tpl = templates or load_templates()
    fill = lambda s: s.replace("{query}", query)  # noqa: E731

    sections = {"task": fill(tpl["task"])}
    if variant == GRID:
        sections["context"] = fill(tpl["context"])
    if consideration:
        sections["consideration"] = fill(tpl["consideration"])
    sections["output"] = fill(tpl["output_reasoning" if reasoning else "output_simple"])

    rendered = "\n\n".join(f"[{SECTION_TITLES[k]}]\n{v}" for k, v in sections.items())
    return PromptText(variant, sections, rendered)


_NUM = r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?!%|\.?\d)"
_NUMBER = re.compile(r"(?<![\w.])" + _NUM)
_LABELED = re.compile(r"score\s*(?:is|of)?\s*[:=]?\s*(" + _NUM + ")", re.I)


def _in_range(token: str) -> float | None:
    try:
        v = float(token)
    except ValueError:
        return None
    return v if 0.0 <= v <= 1.0 else None


def parse_score(text: str) -> float:
    """Extract a score in [0, 1] from a model answer.

    An explicitly labelled value ("Score: 0.8") wins; otherwise the first
    numeric token in [0, 1] is used. Out-of-range numbers and percentages
    are skipped.

    Raises:
        ScoreParseError: when no usable number is present.
    """
    for m in _LABELED.finditer(text):
        v = _in_range(m.group(1))
        if v is not None:
            return v
    for m in _NUMBER.finditer(text):
        v = _in_range(m.group(0))
        if v is not None:
            return min(max(v, 0.0), 1.0)
    raise ScoreParseError(f"no score in [0, 1] found in response: {text[:200]!r}")


def parse_reason(text: str) -> str:
    m = re.search(r"reason\s*[:\-]\s*(.+)", text, re.I | re.S)
    return (m.group(1) if m else text).strip()


@dataclass(frozen=True)
class VqaResult:
    score: float
    reason: str
    raw_response: str
    fallback_used: bool = False
    attempts: int = 1


class LvlmBackend(Protocol):
    backend_id: str

    def complete(self, image: np.ndarray, prompt: str) -> str: ...


class MockLvlmBackend:
    """Deterministic fake model for tests and dry runs.

    By default the answer is a pseudo-random score (one decimal) seeded by
    a hash of the image bytes and the prompt. ``responder`` replaces that
    with any ``(image, prompt) -> str`` function.
    """

    def __init__(self, responder: Callable[[np.ndarray, str], str] | None = None, seed: int = 0, delay: float = 0.0):
        self.responder = responder
        self.seed = seed
        self.delay = delay
        self.backend_id = f"mock-lvlm-{seed}"
        self.calls = 0
        self.in_flight = 0
        self.peak_in_flight = 0
        self._lock = threading.Lock()

    def _default(self, image: np.ndarray, prompt: str) -> str:
        h = hashlib.sha256(f"{self.seed}|{content_hash(image)}|{prompt}".encode()).digest()
        score = h[0] % 11 / 10
        return f"Score: {score:.1f}\nReason: mock answer {h[1:4].hex()}."

    def complete(self, image, prompt):
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            if self.delay:
                time.sleep(self.delay)
            return (self.responder or self._default)(image, prompt)
        finally:
            with self._lock:
                self.in_flight -= 1


class OpenAIChatBackend:
    """OpenAI-compatible ``/chat/completions`` client (vLLM, llama.cpp server, ...).

    One request carries one inline base64 PNG plus the prompt text, sent with
    temperature 0.
    """

    def __init__(self, base_url: str, model: str, api_key: str | None = None, timeout: float = 120.0, max_tokens: int = 256):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_tokens = max_tokens
        self.backend_id = f"openai:{self.base_url}:{model}"
        self._session = requests.Session()

    def build_request(self, image: np.ndarray, prompt: str) -> dict:
        data_url = "data:image/png;base64," + base64.b64encode(encode_png(image)).decode("ascii")
        return {
            "model": self.model,
            "temperature": 0,
            "max_tokens": self.max_tokens,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "image_url", "image_url": {"url": data_url}},
                        {"type": "text", "text": prompt},
                    ],
                }
            ],
        }

    def complete(self, image, prompt):
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._session.post(
                f"{self.base_url}/chat/completions",
                json=self.build_request(image, prompt),
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"LVLM backend unreachable: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"LVLM backend returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"LVLM backend rejected request: HTTP {resp.status_code} {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat completion response: {resp.text[:200]}") from exc
        if isinstance(content, list):  # some servers return content parts
            content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
        return content or ""


@dataclass
class VqaGateway:
    """Sends (image, prompt) pairs to an LVLM backend and parses the scores.

    ``retries`` bounds both kinds of retry: fresh requests after an
    unparsable answer (ending in ``fallback_score``) and after transport
    failures (ending in ``TransportError``). At most ``max_in_flight``
    backend calls run at once across all threads.
    """

    backend: LvlmBackend
    retries: int = 2
    fallback_score: float = 0.0
    max_in_flight: int = 3
    audit_path: str | Path | None = None
    max_image_side: int | None = None
    retry_delay: float = 0.0
    calls: int = field(default=0, init=False)

    def __post_init__(self):
        if not 0.0 <= self.fallback_score <= 1.0:
            raise ValueError("fallback score must lie in [0, 1]")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        self._slots = threading.BoundedSemaphore(self.max_in_flight)
        self._lock = threading.Lock()
        if self.audit_path is not None:
            Path(self.audit_path).parent.mkdir(parents=True, exist_ok=True)

    def _audit(self, record: dict) -> None:
        if self.audit_path is None:
            return
        line = json.dumps(record, ensure_ascii=False)
        with self._lock, open(self.audit_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def _call(self, image: np.ndarray, prompt: str) -> str:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with self._slots:
                    with self._lock:
                        self.calls += 1
                    return self.backend.complete(image, prompt)
            except TransportError as exc:
                last = exc
                logger.warning("VQA transport failure (attempt %d/%d): %s", attempt + 1, self.retries + 1, exc)
                if self.retry_delay and attempt < self.retries:
                    time.sleep(self.retry_delay * (2**attempt))
        raise TransportError(f"VQA backend failed after {self.retries + 1} attempts: {last}")

    def ask(self, image: np.ndarray, prompt: PromptText | str, tag: str = "") -> VqaResult:
        image = np.asarray(image, dtype=np.uint8)
        if self.max_image_side and max(image.shape[:2]) > self.max_image_side:
            raise ImageTooLargeError(f"image {image.shape[1]}x{image.shape[0]} exceeds backend limit {self.max_image_side}px")
        text = prompt.rendered if isinstance(prompt, PromptText) else prompt
        variant = prompt.variant if isinstance(prompt, PromptText) else None
        img_hash = content_hash(image)

        response = ""
        for attempt in range(1, self.retries + 2):
            response = self._call(image, text)
            try:
                score = parse_score(response)
            except ScoreParseError:
                logger.warning("unparsable VQA answer (attempt %d): %r", attempt, response[:120])
                self._audit(dict(tag=tag, image=img_hash, variant=variant, attempt=attempt, response=response, score=None))
                continue
            result = VqaResult(score, parse_reason(response), response, False, attempt)
            self._audit(dict(tag=tag, image=img_hash, variant=variant, attempt=attempt, response=response, score=score))
            return result

        logger.warning("falling back to score %.2f after %d unparsable answers", self.fallback_score, self.retries + 1)
        self._audit(dict(tag=tag, image=img_hash, variant=variant, attempt=self.retries + 1, response=response, score=self.fallback_score, fallback=True))
        return VqaResult(self.fallback_score, "", response, True, self.retries + 1)
