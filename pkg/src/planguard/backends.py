"""Agent backends: chat plumbing, a scripted test double, and an HTTP client.

Every planner, executor, and judge agent talks through the same tiny
interface: ``complete(agent, messages) -> reply text`` with per-call
accounting.  :class:`ScriptedBackend` replays canned replies keyed by
(agent role, call ordinal) and is bit-identical across runs, which is
what makes orchestration traces reproducible.  :class:`HttpBackend`
speaks the de-facto standard chat-completions API.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence, runtime_checkable

import requests

__all__ = [
    "SYSTEM", "USER", "ASSISTANT", "API_KEY_ENV",
    "ChatTurn", "CallRecord", "Accounting",
    "BackendError", "ScriptExhausted",
    "AgentBackend", "ScriptedBackend", "HttpBackend",
    "bundled_script_path",
]

SYSTEM = "system"
USER = "user"
ASSISTANT = "assistant"
_ROLES = (SYSTEM, USER, ASSISTANT)

API_KEY_ENV = "SAFER_API_KEY"


def bundled_script_path(name: str) -> Path:
    """Path of a scripted-session file shipped with the package."""
    from importlib import resources

    ref = resources.files("planguard").joinpath(f"data/scripts/{name}.json")
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled script named {name!r}")
    return Path(str(ref))


class BackendError(RuntimeError):
    """A backend could not produce a reply."""


class ScriptExhausted(BackendError):
    """A strict scripted backend ran out of replies for a role."""


@dataclass(frozen=True)
class ChatTurn:
    """One message in a chat prompt."""

    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"turn role must be one of {_ROLES}, got {self.role!r}")
        if not self.content:
            raise ValueError("turn content must be non-empty")


@dataclass(frozen=True)
class CallRecord:
    """Accounting for a single backend call."""

    agent: str
    latency: float          # wall seconds
    tokens_in: int
    tokens_out: int
    cost: float = 0.0

    def __post_init__(self) -> None:
        if self.latency < 0 or self.tokens_in < 0 or self.tokens_out < 0 or self.cost < 0:
            raise ValueError("accounting values must be non-negative")


@dataclass(frozen=True)
class Accounting:
    """Aggregated call accounting."""

    calls: int = 0
    latency: float = 0.0
    tokens_in: int = 0
    tokens_out: int = 0
    cost: float = 0.0

    @classmethod
    def total(cls, records: Sequence[CallRecord]) -> "Accounting":
        return cls(
            calls=len(records),
            latency=sum(r.latency for r in records),
            tokens_in=sum(r.tokens_in for r in records),
            tokens_out=sum(r.tokens_out for r in records),
            cost=sum(r.cost for r in records),
        )

    def document(self) -> dict:
        return {
            "calls": self.calls,
            "latency": self.latency,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "cost": self.cost,
        }


@runtime_checkable
class AgentBackend(Protocol):
    """The call surface agents are given."""

    calls: list[CallRecord]

    def complete(self, agent: str, messages: Sequence[ChatTurn]) -> str:
        """Return the reply text for one prompt from the named agent role."""
        ...

    def accounting(self) -> Accounting:
        ...


def _estimate_tokens(text: str) -> int:
    """Deterministic whitespace-token estimate for backends without usage data."""
    return len(text.split())


def _check_messages(messages: Sequence[ChatTurn]) -> None:
    if not messages:
        raise ValueError("prompt must contain at least one turn")
    for turn in messages:
        if not isinstance(turn, ChatTurn):
            raise TypeError(f"prompt turns must be ChatTurn, got {type(turn).__name__}")


class ScriptedBackend:
    """Replays canned replies: role -> ordered reply list.

    The n-th call for a role returns the n-th reply.  In strict mode
    (the default) exhausting a role's list raises
    :class:`ScriptExhausted`; otherwise exhausted roles return "".
    Latency is always 0 and token counts are whitespace estimates, so
    accounting — like the replies — is bit-identical across replays.
    """

    def __init__(self, script: Mapping[str, Sequence[str]], strict: bool = True) -> None:
        self.script: dict[str, list[str]] = {
            role: list(replies) for role, replies in script.items()
        }
        for role, replies in self.script.items():
            for i, reply in enumerate(replies):
                if not isinstance(reply, str):
                    raise ValueError(f"script[{role!r}][{i}] must be a string")
        self.strict = strict
        self.calls: list[CallRecord] = []
        self._ordinal: dict[str, int] = {}

    @classmethod
    def from_file(cls, path: str | Path, strict: bool = True) -> "ScriptedBackend":
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        if not isinstance(doc, dict) or not isinstance(doc.get("replies"), dict):
            raise ValueError(f"script file {path} must be an object with a 'replies' mapping")
        return cls(doc["replies"], strict=bool(doc.get("strict", strict)))

    @classmethod
    def bundled(cls, name: str, strict: bool = True) -> "ScriptedBackend":
        """Load a script shipped with the package, e.g. 'golden_two_round'."""
        return cls.from_file(bundled_script_path(name), strict=strict)

    def remaining(self, agent: str) -> int:
        return max(0, len(self.script.get(agent, ())) - self._ordinal.get(agent, 0))

    def complete(self, agent: str, messages: Sequence[ChatTurn]) -> str:
        _check_messages(messages)
        ordinal = self._ordinal.get(agent, 0)
        self._ordinal[agent] = ordinal + 1
        replies = self.script.get(agent, [])
        if ordinal >= len(replies):
            if self.strict:
                raise ScriptExhausted(
                    f"script exhausted for role {agent!r} at call {ordinal} "
                    f"({len(replies)} replies available)"
                )
            reply = ""
        else:
            reply = replies[ordinal]
        self.calls.append(CallRecord(
            agent=agent,
            latency=0.0,
            tokens_in=sum(_estimate_tokens(t.content) for t in messages),
            tokens_out=_estimate_tokens(reply),
        ))
        return reply

    def accounting(self) -> Accounting:
        return Accounting.total(self.calls)


class HttpBackend:
    """Chat-completions client with retry/backoff.

    Temperature is pinned to 0 for reproducibility.  Retries (3
    attempts, exponential backoff starting at 1 s) apply to transport
    errors and HTTP 429 only; other HTTP errors fail immediately.  The
    API key comes from the ``SAFER_API_KEY`` environment variable
    unless given explicitly.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        price_in: float = 0.0,     # currency units per 1k prompt tokens
        price_out: float = 0.0,    # currency units per 1k completion tokens
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.price_in = price_in
        self.price_out = price_out
        self.session = session or requests.Session()
        self._sleep = sleep
        self.calls: list[CallRecord] = []

    def complete(self, agent: str, messages: Sequence[ChatTurn]) -> str:
        _check_messages(messages)
        payload = {
            "model": self.model,
            "messages": [{"role": t.role, "content": t.content} for t in messages],
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"

        start = time.monotonic()
        response = None
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = self.session.post(url, json=payload, headers=headers,
                                             timeout=self.timeout)
            except requests.RequestException as e:
                last_error = e
                response = None
                continue
            if response.status_code == 429:
                last_error = BackendError(f"rate limited (429) by {url}")
                response = None
                continue
            break
        if response is None:
            raise BackendError(
                f"backend unreachable after {self.max_attempts} attempts: {last_error}"
            ) from last_error
        if response.status_code != 200:
            raise BackendError(f"backend returned HTTP {response.status_code}: {response.text[:200]}")

        try:
            doc = response.json()
            reply = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(f"malformed chat-completions response: {e}") from e
        usage = doc.get("usage") or {}
        tokens_in = int(usage.get("prompt_tokens",
                                  sum(_estimate_tokens(t.content) for t in messages)))
        tokens_out = int(usage.get("completion_tokens", _estimate_tokens(reply)))
        self.calls.append(CallRecord(
            agent=agent,
            latency=time.monotonic() - start,
            tokens_in=tokens_in,
            tokens_out=tokens_out,
            cost=(tokens_in * self.price_in + tokens_out * self.price_out) / 1000.0,
        ))
        return reply

    def accounting(self) -> Accounting:
        return Accounting.total(self.calls)
