"""Client for chat-completions-compatible multimodal endpoints.

The transport is deliberately dumb: it turns a :class:`ChatRequest` into the
widely deployed chat-completions JSON payload, sends it with bounded
concurrency and retries, and hands back raw completion text. Task wrappers on
top of it (segment summarization, schema extraction, background merging,
emotion classification) own the prompts and the structured-output parsing.

A family of deterministic mock backends stands in for a live endpoint in
tests and offline runs: a canned lookup table keyed by prompt hash, a
constant-answer mock, and a gold-echoing mock that reads the frame key out of
the request's image URI.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import httpx

from .context import NarrativeBackground, SchemaExtraction, SegmentSummary
from .errors import (
    EmptyCompletion,
    EndpointUnreachable,
    MalformedCompletion,
    TimeoutExceeded,
)

__all__ = [
    "ModelEndpointConfig",
    "ChatRequest",
    "Attachment",
    "SchemaExtraction",
    "ModelClient",
    "MockBackend",
    "ConstantBackend",
    "GoldEchoBackend",
    "FlakyBackend",
    "summarize_segment",
    "extract_schema",
    "merge_background",
    "classify_emotion",
    "model_merger",
]

API_KEY_ENV = "EMOVIEW_API_KEY"
BASE_URL_ENV = "EMOVIEW_BASE_URL"

IMAGE_PLACEHOLDER = "<image>"
AUDIO_PLACEHOLDER = "<audio>"


@dataclass(frozen=True)
class ModelEndpointConfig:
    base_url: str = ""
    model_name: str = "local-model"
    api_key: str = ""
    timeout_seconds: float = 60.0
    max_retries: int = 3
    max_parallel_requests: int = 4
    temperature: float = 0.0
    attachment_mode: str = "uri"  # "uri" | "base64"
    backoff_seconds: float = 0.5

    @classmethod
    def from_env(cls, **overrides) -> "ModelEndpointConfig":
        values = {
            "base_url": os.environ.get(BASE_URL_ENV, ""),
            "api_key": os.environ.get(API_KEY_ENV, ""),
        }
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class Attachment:
    kind: str  # "image" | "audio"
    uri: str


@dataclass(frozen=True)
class ChatRequest:
    """Ordered chat turns plus media attachments.

    Placeholders in the text (``<image>`` / ``<audio>``) must agree in count
    with the attachment list, per kind; attachments are consumed in placement
    order.
    """

    messages: tuple[dict, ...]
    attachments: tuple[Attachment, ...] = ()

    def __post_init__(self):
        text = "\n".join(m["content"] for m in self.messages)
        for kind, placeholder in (("image", IMAGE_PLACEHOLDER), ("audio", AUDIO_PLACEHOLDER)):
            want = text.count(placeholder)
            have = sum(1 for a in self.attachments if a.kind == kind)
            if want != have:
                raise ValueError(
                    f"{kind} placeholder count {want} != attachment count {have}"
                )

    @classmethod
    def user(cls, text: str, attachments: tuple[Attachment, ...] = ()) -> "ChatRequest":
        return cls(messages=({"role": "user", "content": text},), attachments=attachments)

    def with_followup(self, role: str, content: str) -> "ChatRequest":
        # Follow-up turns carry no placeholders, so attachments stay balanced.
        return ChatRequest(
            messages=self.messages + ({"role": role, "content": content},),
            attachments=self.attachments,
        )


def _content_parts(text: str, attachments: list[Attachment], mode: str) -> list[dict]:
    """Interleave text runs with attachment parts in placement order."""
    pattern = re.compile(f"({re.escape(IMAGE_PLACEHOLDER)}|{re.escape(AUDIO_PLACEHOLDER)})")
    parts: list[dict] = []
    images = [a for a in attachments if a.kind == "image"]
    audios = [a for a in attachments if a.kind == "audio"]
    for piece in pattern.split(text):
        if piece == IMAGE_PLACEHOLDER:
            parts.append(_media_part("image_url", images.pop(0), mode))
        elif piece == AUDIO_PLACEHOLDER:
            parts.append(_media_part("audio_url", audios.pop(0), mode))
        elif piece:
            parts.append({"type": "text", "text": piece})
    return parts


def _media_part(part_type: str, attachment: Attachment, mode: str) -> dict:
    key = part_type.split("_")[0] + "_url"
    if mode == "base64":
        data = base64.b64encode(Path(attachment.uri).read_bytes()).decode("ascii")
        suffix = Path(attachment.uri).suffix.lstrip(".") or "bin"
        prefix = "image" if attachment.kind == "image" else "audio"
        url = f"data:{prefix}/{suffix};base64,{data}"
    else:
        url = attachment.uri
    return {"type": part_type, key: {"url": url}}


def wire_payload(request: ChatRequest, config: ModelEndpointConfig) -> dict:
    """Chat-completions JSON body for a request under the given config."""
    attachments = list(request.attachments)
    messages = []
    for i, msg in enumerate(request.messages):
        if i == 0:
            messages.append(
                {
                    "role": msg["role"],
                    "content": _content_parts(msg["content"], attachments, config.attachment_mode),
                }
            )
        else:
            messages.append({"role": msg["role"], "content": [{"type": "text", "text": msg["content"]}]})
    return {
        "model": config.model_name,
        "temperature": config.temperature,
        "messages": messages,
    }


def prompt_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class TransportError(Exception):
    """Internal: a retryable transport-level failure."""

    def __init__(self, detail: str, timeout: bool = False):
        self.timeout = timeout
        super().__init__(detail)


# --- backends --------------------------------------------------------------------


class HttpBackend:
    """POSTs to ``{base_url}/chat/completions`` and extracts the first choice."""

    def __init__(self, config: ModelEndpointConfig):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout_seconds)

    def complete(self, payload: dict) -> str:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = self._client.post(url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise TransportError(str(exc), timeout=True)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc))
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise EndpointUnreachable(f"HTTP {resp.status_code}: {resp.text[:200]}", attempts=1)
        data = resp.json()
        return data["choices"][0]["message"]["content"]

    def close(self) -> None:
        self._client.close()


class MockBackend:
    """Deterministic lookup-table endpoint with a concurrency probe.

    Completions resolve, in order: exact prompt-hash table, first substring
    rule matching the request text, then the default. Identical request bytes
    always map to the identical completion.
    """

    def __init__(self, canned: dict[str, str] | None = None, default: str | None = None,
                 latency_seconds: float = 0.0):
        self.canned = dict(canned or {})
        self.rules: list[tuple[str, str]] = []
        self.default = default
        self.latency_seconds = latency_seconds
        self.calls: list[str] = []
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0

    def add_canned(self, payload: dict, completion: str) -> None:
        self.canned[prompt_hash(payload)] = completion

    def add_rule(self, substring: str, completion: str) -> None:
        self.rules.append((substring, completion))

    @staticmethod
    def _request_text(payload: dict) -> str:
        chunks = []
        for msg in payload.get("messages", ()):
            for part in msg.get("content", ()):
                if part.get("type") == "text":
                    chunks.append(part["text"])
                else:
                    url = next(v["url"] for k, v in part.items() if k.endswith("_url") and isinstance(v, dict))
                    chunks.append(url)
        return "\n".join(chunks)

    def complete(self, payload: dict) -> str:
        with self._lock:
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
        try:
            if self.latency_seconds:
                time.sleep(self.latency_seconds)
            key = prompt_hash(payload)
            with self._lock:
                self.calls.append(key)
            if key in self.canned:
                return self.canned[key]
            text = self._request_text(payload)
            for substring, completion in self.rules:
                if substring in text:
                    return completion
            if self.default is not None:
                return self.default
            raise TransportError(f"no canned completion for prompt {key[:12]}")
        finally:
            with self._lock:
                self._in_flight -= 1


class ConstantBackend:
    """Always answers the same emotion label."""

    def __init__(self, label: str):
        self.completion = json.dumps({"emotion": str(label)})

    def complete(self, payload: dict) -> str:
        return self.completion


class GoldEchoBackend:
    """Oracle endpoint: answers the gold label of the frame it is shown.

    The frame key is recovered from the last image URI in the request
    (``.../<clip_id>_<t>.<ext>``); text-only requests fall back to matching a
    ``[frame <clip>:<t>]`` marker in the text if present.
    """

    def __init__(self, gold: dict[tuple[str, int], str]):
        self.gold = {(c, int(t)): str(label) for (c, t), label in gold.items()}

    def complete(self, payload: dict) -> str:
        key = self._frame_key(payload)
        if key is None or key not in self.gold:
            raise TransportError(f"gold-echo mock cannot identify frame (got {key})")
        return json.dumps({"emotion": self.gold[key]})

    @staticmethod
    def _frame_key(payload: dict) -> tuple[str, int] | None:
        last_image = None
        texts = []
        for msg in payload.get("messages", ()):
            for part in msg.get("content", ()):
                if part.get("type") == "image_url":
                    last_image = part["image_url"]["url"]
                elif part.get("type") == "text":
                    texts.append(part["text"])
        if last_image is not None:
            stem = last_image.rsplit("/", 1)[-1].rsplit(".", 1)[0]
            if "_" in stem:
                clip_id, t = stem.rsplit("_", 1)
                if t.isdigit():
                    return clip_id, int(t)
        marker = re.search(r"\[frame ([^:\]]+):(\d+)\]", "\n".join(texts))
        if marker:
            return marker.group(1), int(marker.group(2))
        return None


class FlakyBackend:
    """Fails the first N calls with a transport error, then delegates."""

    def __init__(self, inner, fail_times: int, timeout: bool = False):
        self.inner = inner
        self.fail_times = fail_times
        self.timeout = timeout
        self.failures = 0

    def complete(self, payload: dict) -> str:
        if self.failures < self.fail_times:
            self.failures += 1
            raise TransportError("injected failure", timeout=self.timeout)
        return self.inner.complete(payload)


# --- client -----------------------------------------------------------------------


class ModelClient:
    """Retry/backoff/concurrency wrapper around a backend.

    Shareable across threads; a semaphore caps in-flight requests at
    ``max_parallel_requests``. Every request appends a JSON-lines log entry
    with the prompt hash, latency, and retry count.
    """

    def __init__(self, config: ModelEndpointConfig, backend=None, log_path: str | Path | None = None):
        self.config = config
        self.backend = backend if backend is not None else HttpBackend(config)
        self.log_path = Path(log_path) if log_path else None
        self.log_entries: list[dict] = []
        self._gate = threading.Semaphore(config.max_parallel_requests)
        self._log_lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        payload = wire_payload(request, self.config)
        key = prompt_hash(payload)
        attempts = 1 + self.config.max_retries
        last_error: TransportError | None = None
        start = time.monotonic()
        with self._gate:
            for attempt in range(attempts):
                if attempt > 0:
                    time.sleep(self.config.backoff_seconds * (2 ** (attempt - 1)))
                try:
                    text = self.backend.complete(payload)
                    self._log(key, start, retries=attempt, status="ok")
                    return text
                except TransportError as exc:
                    last_error = exc
        self._log(key, start, retries=attempts - 1, status="timeout" if last_error.timeout else "unreachable")
        if last_error.timeout:
            raise TimeoutExceeded(self.config.timeout_seconds, attempts)
        raise EndpointUnreachable(str(last_error), attempts)

    def _log(self, key: str, start: float, retries: int, status: str) -> None:
        entry = {
            "prompt_hash": key,
            "latency_ms": round((time.monotonic() - start) * 1000, 3),
            "retries": retries,
            "status": status,
        }
        with self._log_lock:
            self.log_entries.append(entry)
            if self.log_path:
                with open(self.log_path, "a") as f:
                    f.write(json.dumps(entry) + "\n")


# --- task templates -----------------------------------------------------------------


def _template(name: str) -> str:
    return resources.files("emoview.templates").joinpath(name).read_text()


REPAIR_INSTRUCTION = (
    "The previous reply was not the requested strict JSON object. "
    "Return only the strict JSON object, with all required keys."
)

_SCHEMA_KEYS = ("premise", "entities", "conflict", "tone", "turning_points")


def summarize_request(media_uri: str, start: int, end: int) -> ChatRequest:
    text = _template("summarize_segment.txt").format(start=start, end=end)
    return ChatRequest.user(text, attachments=(Attachment("audio", media_uri),))


def summarize_segment(
    client: ModelClient, media_uri: str, start: int, end: int, segment_seconds: int = 20
) -> SegmentSummary:
    """Summarize one completed fixed-length segment via the endpoint."""
    if end - start != segment_seconds or start % segment_seconds != 0:
        raise ValueError(
            f"only completed {segment_seconds}s segments are summarized, got [{start}, {end})"
        )
    completion = client.complete(summarize_request(media_uri, start, end)).strip()
    if not completion:
        raise EmptyCompletion()
    return SegmentSummary.create(start // segment_seconds + 1, completion)


def _structured_completion(client: ModelClient, request: ChatRequest) -> dict:
    """Strict-JSON completion with a single repair retry."""
    raw = client.complete(request)
    for attempt in range(2):
        try:
            data = json.loads(raw.strip())
            if not isinstance(data, dict):
                raise ValueError("not a JSON object")
            missing = [k for k in _SCHEMA_KEYS if k not in data]
            if missing:
                raise ValueError(f"missing keys: {missing}")
            return data
        except (json.JSONDecodeError, ValueError) as exc:
            if attempt == 1:
                raise MalformedCompletion(str(exc))
            repair = request.with_followup("assistant", raw).with_followup("user", REPAIR_INSTRUCTION)
            raw = client.complete(repair)
    raise AssertionError("unreachable")


def extract_request(summary_text: str) -> ChatRequest:
    return ChatRequest.user(_template("extract_schema.txt").format(summary=summary_text))


def extract_schema(client: ModelClient, summary: SegmentSummary) -> SchemaExtraction:
    """Pull the structured narrative fields out of one segment summary."""
    if not summary.text.strip():
        raise ValueError("summary text is empty")
    data = _structured_completion(client, extract_request(summary.text))
    return SchemaExtraction(
        premise=str(data["premise"]),
        entities=tuple(str(e) for e in data["entities"]),
        conflict=str(data["conflict"]),
        tone=str(data["tone"]),
        turning_points=tuple(str(p) for p in data["turning_points"]),
    )


def merge_request(prev: NarrativeBackground, extraction: SchemaExtraction) -> ChatRequest:
    text = _template("merge_background.txt").format(
        background=prev.rendered_text(),
        extraction=json.dumps(extraction.to_dict(), sort_keys=True),
        budget=prev.word_budget,
    )
    return ChatRequest.user(text)


def merge_background(
    client: ModelClient, prev: NarrativeBackground, extraction: SchemaExtraction
) -> SchemaExtraction:
    """Model-backed background merge; the deterministic fold enforces budgets."""
    data = _structured_completion(client, merge_request(prev, extraction))
    return SchemaExtraction(
        premise=str(data["premise"]),
        entities=tuple(str(e) for e in data["entities"]),
        conflict=str(data["conflict"]),
        tone=str(data["tone"]),
        turning_points=tuple(str(p) for p in data["turning_points"]),
    )


def model_merger(client: ModelClient):
    """Adapt the model-backed merge to the fold operator's merger hook."""

    def merger(prev: NarrativeBackground, extraction: SchemaExtraction) -> SchemaExtraction:
        return merge_background(client, prev, extraction)

    return merger


def classify_emotion(client: ModelClient, request: ChatRequest) -> str:
    """Raw completion for an emotion prompt; parsing stays in the prompt layer."""
    return client.complete(request)
