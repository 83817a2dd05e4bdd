"""Chat-completion gateway with a disk cache and a deterministic replay mode.

Every prompting stage goes through :class:`Gateway`, which keys responses by
(prompt, temperature, n_samples, backend id) and stores them one file per
request. With :class:`ReplayBackend` the cache directory is the only source
of completions, which makes the whole pipeline a pure function of its inputs
and seeds — that is what the offline test suite runs against.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import requests


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    pass


class ReplayMissError(GatewayError):
    def __init__(self, key: str):
        super().__init__(f"replay cache has no entry for request key {key}")
        self.key = key


@dataclass
class ChatRequest:
    prompt: str
    temperature: float = 0.6
    max_tokens: int = 8192
    n_samples: int = 1
    request_tag: str = ""

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt is empty")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature out of [0, 2]")


@dataclass
class ChatResponse:
    completions: list[str]
    backend_id: str
    cached: bool


def request_key(prompt: str, temperature: float, n_samples: int, backend_id: str) -> str:
    payload = "\x1f".join([prompt, repr(float(temperature)), str(n_samples), backend_id])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CompletionCache:
    """Content-addressed completions on disk, one JSON file per request key."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> Optional[list[str]]:
        path = self._path(key)
        if not path.exists():
            return None
        entry = json.loads(path.read_text(encoding="utf-8"))
        return list(entry["completions"])

    def put(self, key: str, completions: list[str], meta: Optional[dict] = None) -> None:
        entry = {"key": key, "completions": list(completions)}
        if meta:
            entry.update(meta)
        tmp = self._path(key).with_suffix(".tmp")
        tmp.write_text(json.dumps(entry, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, self._path(key))


class ReplayBackend:
    """Backend that never generates: every request must already be cached."""

    def __init__(self, backend_id: str = "replay"):
        self.backend_id = backend_id

    def complete(self, req: ChatRequest, key: str) -> list[str]:
        raise ReplayMissError(key)


class LiveBackend:
    """De-facto chat-completion HTTP endpoint. Credential comes from the
    environment only; the wire format is treated as opaque by callers."""

    def __init__(
        self,
        endpoint_url: str,
        model: str,
        api_key_env: str = "CODEMILL_API_KEY",
        timeout_seconds: float = 120.0,
        retries: int = 3,
        backoff_seconds: float = 0.5,
    ):
        self.endpoint_url = endpoint_url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout_seconds = timeout_seconds
        self.retries = retries
        self.backoff_seconds = backoff_seconds
        self.backend_id = f"live:{model}"

    def complete(self, req: ChatRequest, key: str) -> list[str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "n": req.n_samples,
        }
        last_error: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * (2 ** (attempt - 1)))
            try:
                resp = requests.post(
                    self.endpoint_url, json=body, headers=headers,
                    timeout=self.timeout_seconds,
                )
                resp.raise_for_status()
                choices = resp.json()["choices"]
                return [choice["message"]["content"] for choice in choices]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
        raise TransportError(
            f"backend {self.backend_id} failed after {self.retries + 1} attempts: {last_error}"
        )


class Gateway:
    """Cache-first completion interface shared by all pipeline stages."""

    def __init__(self, backend, cache_dir: str | Path, max_in_flight: int = 4):
        self.backend = backend
        self.cache = CompletionCache(cache_dir)
        self._gate = threading.Semaphore(max_in_flight)

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = request_key(req.prompt, req.temperature, req.n_samples, self.backend.backend_id)
        cached = self.cache.get(key)
        if cached is not None:
            if len(cached) != req.n_samples:
                raise GatewayError(
                    f"cache entry {key} has {len(cached)} completions, "
                    f"request wants {req.n_samples}"
                )
            return ChatResponse(completions=cached, backend_id=self.backend.backend_id, cached=True)
        with self._gate:
            completions = self.backend.complete(req, key)
        if len(completions) != req.n_samples:
            raise GatewayError(
                f"backend returned {len(completions)} completions for n_samples={req.n_samples}"
            )
        self.cache.put(
            key,
            completions,
            meta={
                "backend_id": self.backend.backend_id,
                "temperature": req.temperature,
                "n_samples": req.n_samples,
                "request_tag": req.request_tag,
                "prompt_sha256": hashlib.sha256(req.prompt.encode("utf-8")).hexdigest(),
            },
        )
        return ChatResponse(completions=completions, backend_id=self.backend.backend_id, cached=False)


def seed_cache(
    cache_dir: str | Path,
    prompt: str,
    completions: list[str],
    temperature: float = 0.6,
    backend_id: str = "replay",
    request_tag: str = "",
) -> str:
    """Pre-store completions for a request; returns the cache key.

    This is how replay directories are built: compute the same key the
    gateway will compute, then drop the canned completions under it.
    """
    key = request_key(prompt, temperature, len(completions), backend_id)
    CompletionCache(cache_dir).put(
        key,
        completions,
        meta={
            "backend_id": backend_id,
            "temperature": temperature,
            "n_samples": len(completions),
            "request_tag": request_tag,
        },
    )
    return key


@dataclass
class CodeBlock:
    language: str
    code: str
    closed: bool = True


def extract_code_blocks(text: str) -> list[CodeBlock]:
    """Pull fenced code blocks out of a completion, in order of appearance.

    An opening fence that is never closed still yields a block (running to
    the end of the text) with ``closed=False``.
    """
    blocks: list[CodeBlock] = []
    language = ""
    buffer: list[str] = []
    in_block = False
    for line in text.splitlines():
        stripped = line.strip()
        if not in_block and stripped.startswith("```"):
            in_block = True
            language = stripped[3:].strip()
            buffer = []
        elif in_block and stripped.startswith("```"):
            blocks.append(CodeBlock(language=language, code="\n".join(buffer), closed=True))
            in_block = False
        elif in_block:
            buffer.append(line)
    if in_block:
        blocks.append(CodeBlock(language=language, code="\n".join(buffer), closed=False))
    return blocks
