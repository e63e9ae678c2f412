"""Provider-agnostic VLM clients.

Every backend implements ``send(image, prompt, state)``; multi-turn flows
thread a :class:`Conversation` through repeated sends. The scripted client
answers from a fixed per-image script, which makes whole annotation runs
deterministic, and the HTTP client adapts any OpenAI-compatible chat endpoint
configured through environment variables.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence


class VlmClientError(Exception):
    pass


@dataclass
class Conversation:
    """Turns exchanged so far, oldest first, as (role, text)."""

    turns: list[tuple[str, str]] = field(default_factory=list)

    def add(self, role: str, text: str) -> None:
        self.turns.append((role, text))


class VlmClient(Protocol):
    model_name: str
    supports_multi_turn: bool
    concurrency_safe: bool

    def send(self, image, prompt: str, state: Optional[Conversation] = None) -> str: ...


class ScriptedVlmClient:
    """Deterministic client answering from a per-image response script.

    ``script`` maps an image key (the image reference as a string) to the
    ordered responses for that image; each send consumes the next one. A
    ``default`` sequence serves images missing from the script. Cursors are
    tracked per image so concurrent annotation of different memes stays
    reproducible.
    """

    def __init__(self, script: Mapping[str, Sequence[str]],
                 default: Optional[Sequence[str]] = None,
                 model_name: str = "scripted"):
        self.model_name = model_name
        self.supports_multi_turn = True
        self.concurrency_safe = True
        self._script = {k: list(v) for k, v in script.items()}
        self._default = list(default) if default is not None else None
        self._cursors: dict[str, int] = {}
        self._lock = threading.Lock()
        self.calls: list[tuple[str, str]] = []

    def send(self, image, prompt: str, state: Optional[Conversation] = None) -> str:
        key = str(image)
        with self._lock:
            self.calls.append((key, prompt))
            responses = self._script.get(key, self._default)
            if responses is None:
                raise VlmClientError(f"no scripted responses for image {key!r}")
            cursor = self._cursors.get(key, 0)
            if cursor >= len(responses):
                raise VlmClientError(f"script for image {key!r} exhausted")
            self._cursors[key] = cursor + 1
            response = responses[cursor]
        if state is not None:
            state.add("user", prompt)
            state.add("assistant", response)
        return response


class OpenAiCompatClient:
    """Chat-completions adapter for hosted VLMs.

    Reads endpoint, key, and model from ``MEMEKIT_VLM_ENDPOINT``,
    ``MEMEKIT_VLM_API_KEY``, and ``MEMEKIT_VLM_MODEL`` unless given
    explicitly. Images are file paths, inlined as base64 data URLs.
    """

    def __init__(self, endpoint: Optional[str] = None, api_key: Optional[str] = None,
                 model_name: Optional[str] = None, timeout: float = 120.0):
        self.endpoint = endpoint or os.environ.get("MEMEKIT_VLM_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("MEMEKIT_VLM_API_KEY", "")
        self.model_name = model_name or os.environ.get("MEMEKIT_VLM_MODEL", "")
        self.timeout = timeout
        self.supports_multi_turn = True
        self.concurrency_safe = True
        if not self.endpoint or not self.model_name:
            raise VlmClientError(
                "set MEMEKIT_VLM_ENDPOINT and MEMEKIT_VLM_MODEL (or pass them "
                "explicitly) to use the hosted VLM client"
            )

    def _image_payload(self, image) -> dict:
        import base64
        from pathlib import Path

        data = Path(image).read_bytes()
        encoded = base64.b64encode(data).decode("ascii")
        suffix = Path(image).suffix.lstrip(".") or "png"
        return {
            "type": "image_url",
            "image_url": {"url": f"data:image/{suffix};base64,{encoded}"},
        }

    def send(self, image, prompt: str, state: Optional[Conversation] = None) -> str:
        import urllib.request

        messages = []
        if state is not None:
            for role, text in state.turns:
                messages.append({"role": role, "content": text})
        content: list = [{"type": "text", "text": prompt}]
        if image is not None and not messages:
            content.insert(0, self._image_payload(image))
        messages.append({"role": "user", "content": content})
        body = json.dumps({"model": self.model_name, "messages": messages}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint,
            data=body,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {self.api_key}",
            },
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except OSError as exc:
            raise VlmClientError(f"VLM transport error: {exc}") from exc
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise VlmClientError(f"unexpected VLM response shape: {payload}") from exc
        if state is not None:
            state.add("user", prompt)
            state.add("assistant", text)
        return text
