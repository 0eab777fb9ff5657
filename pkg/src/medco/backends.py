"""Chat-completion and embedding providers.

Two interchangeable chat providers: an HTTP client speaking the common
chat-completions / embeddings wire shapes, and a deterministic scripted
provider for offline tests.  No role logic lives here; given identical
(system, history) both providers look the same to the dialogue layer.
"""

from __future__ import annotations

import hashlib
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BackendError, MissingFixtureError

History = Sequence[tuple[str, str]]  # (speaker, text); speaker "assistant" is self


@dataclass(frozen=True)
class BackendProfile:
    name: str
    endpoint: str = ""
    model_id: str = ""
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    api_key_ref: str = "MEDCO_API_KEY"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 <= self.max_retries <= 5:
            raise ValueError("max_retries must be in 0..5")


@dataclass
class ChatExchange:
    system: str
    history: list
    reply: str
    usage: dict = field(default_factory=dict)
    latency: float = 0.0


def content_key(system: str, history: History) -> str:
    """Content-hash fixture key: digest of the system plus the last message."""
    last = history[-1][1] if history else ""
    digest = hashlib.sha256(f"{system}\x00{last}".encode("utf-8")).hexdigest()
    return digest[:16]


class ScriptedBackend:
    """Deterministic provider backed by registered fixtures.

    Lookup order for a call with session tag, role (= profile name), and
    system prompt:
      1. exact key ``(tag, role, turn)`` where turn counts prior calls with
         the same (tag, role, system);
      2. content-hash key (see :func:`content_key`);
      3. a queued sequence registered for ``(tag, role)``;
      4. a default script callable for the role;
      5. error naming the key.
    """

    def __init__(self):
        self._exact: dict[tuple, str] = {}
        self._hashed: dict[str, str] = {}
        self._queues: dict[tuple, list[str]] = {}
        self._defaults: dict[str, Callable] = {}
        self._counters: dict[tuple, int] = {}
        self.calls = 0

    def register(self, key, reply: str) -> None:
        """Register an exact (tag, role, turn) tuple or a content-hash string."""
        if isinstance(key, tuple):
            self._exact[key] = reply
        else:
            self._hashed[key] = reply

    def register_sequence(self, tag: str, role: str, replies: Sequence[str]) -> None:
        self._queues.setdefault((tag, role), []).extend(replies)

    def default_script(self, role: str, fn: Callable) -> None:
        """fn(tag, system, history, turn) -> reply, used when no fixture matches."""
        self._defaults[role] = fn

    def chat(self, profile: BackendProfile, system: str, history: History,
             tag: str = "") -> str:
        self.calls += 1
        role = profile.name
        counter_key = (tag, role, hashlib.sha256(system.encode("utf-8")).hexdigest()[:8])
        turn = self._counters.get(counter_key, 0)
        self._counters[counter_key] = turn + 1

        exact = (tag, role, turn)
        if exact in self._exact:
            return self._exact[exact]
        hashed = content_key(system, history)
        if hashed in self._hashed:
            return self._hashed[hashed]
        queue = self._queues.get((tag, role))
        if queue:
            return queue.pop(0)
        if role in self._defaults:
            return self._defaults[role](tag, system, history, turn)
        raise MissingFixtureError(
            f"missing fixture for key {exact} (content key {hashed})"
        )


class HashingEmbedder:
    """Seeded token-hash bag embedder; deterministic and offline.

    Tokens are lowercased word runs plus individual CJK characters; each
    token is hashed into a signed bucket and the bag is unit-normalized.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def _tokens(self, text: str) -> list[str]:
        tokens = []
        word = []
        for ch in text.lower():
            if ch.isascii() and (ch.isalnum() or ch == "_"):
                word.append(ch)
                continue
            if word:
                tokens.append("".join(word))
                word = []
            if not ch.isspace() and not ch.isascii():
                tokens.append(ch)
        if word:
            tokens.append("".join(word))
        return tokens

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            vec = np.zeros(self.dim, dtype=np.float64)
            for token in self._tokens(text):
                digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
                bucket = int.from_bytes(digest[:4], "big") % self.dim
                sign = 1.0 if digest[4] % 2 == 0 else -1.0
                vec[bucket] += sign
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                vec[0] = 1.0
                norm = 1.0
            out.append(vec / norm)
        return out


class OpenAICompatBackend:
    """Wire-protocol client for chat-completions / embeddings endpoints.

    Transient failures (network errors, 429, 5xx) are retried with
    exponential backoff up to the profile's max_retries.  A process-wide
    semaphore bounds in-flight requests.
    """

    def __init__(self, max_in_flight: int = 8, transport=None, sleep=time.sleep):
        self._semaphore = threading.BoundedSemaphore(max_in_flight)
        self._transport = transport  # injectable for tests
        self._sleep = sleep
        self.exchanges: list[ChatExchange] = []

    def _client(self, profile: BackendProfile):
        import httpx

        api_key = os.environ.get(profile.api_key_ref, "")
        if not api_key:
            raise BackendError(
                f"api key environment variable {profile.api_key_ref!r} is not set"
            )
        headers = {"Authorization": f"Bearer {api_key}"}
        kwargs = {"timeout": profile.timeout, "headers": headers}
        if self._transport is not None:
            kwargs["transport"] = self._transport
        return httpx.Client(base_url=profile.endpoint, **kwargs)

    def _post_with_retries(self, profile: BackendProfile, path: str, payload: dict):
        import httpx

        last_error = None
        for attempt in range(profile.max_retries + 1):
            if attempt:
                self._sleep(min(2 ** (attempt - 1), 30) * (0.5 + random.random() / 2))
            try:
                with self._semaphore, self._client(profile) as client:
                    response = client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last_error = BackendError(f"transport failure: {exc}")
                continue
            if response.status_code == 401:
                raise BackendError("authentication failure", payload=response.text)
            if response.status_code == 429 or response.status_code >= 500:
                last_error = BackendError(
                    f"transient provider error {response.status_code}",
                    payload=response.text,
                )
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"provider error {response.status_code}", payload=response.text
                )
            try:
                return response.json()
            except ValueError:
                raise BackendError("malformed provider response", payload=response.text)
        raise BackendError(f"exhausted retries: {last_error}")

    def chat(self, profile: BackendProfile, system: str, history: History,
             tag: str = "") -> str:
        messages = [{"role": "system", "content": system}]
        for speaker, text in history:
            role = "assistant" if speaker == "assistant" else "user"
            messages.append({"role": role, "content": text})
        payload = {
            "model": profile.model_id,
            "messages": messages,
            "temperature": profile.temperature,
        }
        start = time.monotonic()
        data = self._post_with_retries(profile, "/chat/completions", payload)
        try:
            reply = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("malformed chat payload", payload=data)
        if not reply:
            raise BackendError("empty reply from provider", payload=data)
        self.exchanges.append(
            ChatExchange(
                system=system,
                history=list(history),
                reply=reply,
                usage=data.get("usage", {}),
                latency=time.monotonic() - start,
            )
        )
        return reply

    def embed(self, profile: BackendProfile, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be nonempty")
        payload = {"model": profile.model_id, "input": list(texts)}
        data = self._post_with_retries(profile, "/embeddings", payload)
        try:
            rows = sorted(data["data"], key=lambda d: d["index"])
            vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except (KeyError, TypeError):
            raise BackendError("malformed embeddings payload", payload=data)
        if len(vectors) != len(texts):
            raise BackendError("embedding count mismatch", payload=data)
        return [v / (np.linalg.norm(v) or 1.0) for v in vectors]


class Backends:
    """Role-to-provider routing used by the dialogue and metric layers."""

    def __init__(self, profiles: dict[str, BackendProfile], provider,
                 embedder, providers: Optional[dict[str, object]] = None):
        self.profiles = profiles
        self._provider = provider
        self._providers = providers or {}
        self.embedder = embedder

    def profile(self, role: str) -> BackendProfile:
        if role not in self.profiles:
            raise BackendError(f"no backend profile configured for role {role!r}")
        return self.profiles[role]

    def chat(self, role: str, system: str, history: History, tag: str = "") -> str:
        provider = self._providers.get(role, self._provider)
        return provider.chat(self.profile(role), system, history, tag=tag)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be nonempty")
        return self.embedder.embed(texts)
