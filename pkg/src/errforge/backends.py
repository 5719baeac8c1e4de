"""Completion backends, pricing, and the per-call usage ledger.

Two backend kinds share one interface: an OpenAI-compatible chat
endpoint (system + user messages, usage block in the response) and a
deterministic scripted backend for offline runs and tests. Reasoning
tokens are billed at the output rate. Percentiles over per-cell
aggregates use the nearest-rank rule.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx


class BackendError(Exception):
    """Base class for backend failures."""


class TransportError(BackendError):
    """Network-level failure; retryable and never counted as a GA attempt."""


class AuthError(BackendError):
    """Bad or missing credentials; fatal for the run."""


class ScriptError(BackendError):
    """Scripted backend misuse: no matching entry or exhausted cursor."""


class PricingError(KeyError):
    """Backend id missing from the pricing table."""


@dataclass(frozen=True)
class CallUsage:
    input_tokens: int
    output_tokens: int
    reasoning_tokens: int = 0
    latency_s: float = 0.0

    def __post_init__(self) -> None:
        for name in ("input_tokens", "output_tokens", "reasoning_tokens"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not math.isfinite(self.latency_s) or self.latency_s < 0:
            raise ValueError("latency_s must be finite and >= 0")

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens + self.reasoning_tokens


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    user_messages: tuple[str, ...]
    backend_id: str
    temperature: float | None = None
    top_p: float | None = None

    def __post_init__(self) -> None:
        if not self.user_messages:
            raise ValueError("request needs at least one user message")

    def rendered(self) -> str:
        """Full request text, used for scripted matching and prompt tests."""
        return "\n".join((self.system_prompt, *self.user_messages))


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: CallUsage
    backend_id: str


class PricingTable:
    """Per-backend USD-per-million-token rates."""

    def __init__(self, rates: dict[str, dict[str, float]]):
        for backend_id, r in rates.items():
            if r["input_usd_per_1m"] < 0 or r["output_usd_per_1m"] < 0:
                raise ValueError(f"negative rate for {backend_id}")
        self._rates = rates

    def rate(self, backend_id: str) -> tuple[float, float]:
        try:
            r = self._rates[backend_id]
        except KeyError:
            raise PricingError(f"no pricing for backend {backend_id!r}") from None
        return r["input_usd_per_1m"], r["output_usd_per_1m"]

    @classmethod
    def load(cls, path: str | Path) -> "PricingTable":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    @classmethod
    def default(cls) -> "PricingTable":
        data = resources.files("errforge.data").joinpath("pricing.json")
        with resources.as_file(data) as path:
            return cls.load(path)


def cost_of(usage: CallUsage, backend_id: str, pricing: PricingTable) -> float:
    """Dollar cost of one call; reasoning tokens billed at the output rate."""
    in_rate, out_rate = pricing.rate(backend_id)
    return (
        usage.input_tokens * in_rate / 1e6
        + (usage.output_tokens + usage.reasoning_tokens) * out_rate / 1e6
    )


@dataclass(frozen=True)
class CellUsageTotal:
    """Per-cell aggregate over all GA and EA calls."""

    input_tokens: int = 0
    output_tokens: int = 0
    reasoning_tokens: int = 0
    usd: float = 0.0
    latency_s: float = 0.0

    @property
    def tokens(self) -> int:
        return self.input_tokens + self.output_tokens + self.reasoning_tokens

    def add(self, usage: CallUsage, usd: float) -> "CellUsageTotal":
        return CellUsageTotal(
            input_tokens=self.input_tokens + usage.input_tokens,
            output_tokens=self.output_tokens + usage.output_tokens,
            reasoning_tokens=self.reasoning_tokens + usage.reasoning_tokens,
            usd=self.usd + usd,
            latency_s=self.latency_s + usage.latency_s,
        )


def nearest_rank(values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not values:
        raise ValueError("nearest_rank over empty input")
    ordered = sorted(values)
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return ordered[rank - 1]


LEDGER_FIELDS = ("tokens", "usd", "latency")


def ledger_percentiles(
    totals: Sequence[CellUsageTotal], fieldname: str
) -> dict[str, float]:
    """Median and p95 of one cost field over per-cell totals."""
    if fieldname not in LEDGER_FIELDS:
        raise ValueError(f"unknown field {fieldname!r}; expected one of {LEDGER_FIELDS}")
    if not totals:
        raise ValueError("ledger_percentiles over empty input")
    getter = {
        "tokens": lambda t: float(t.tokens),
        "usd": lambda t: t.usd,
        "latency": lambda t: t.latency_s,
    }[fieldname]
    values = [getter(t) for t in totals]
    return {"median": nearest_rank(values, 50), "p95": nearest_rank(values, 95)}


@dataclass(frozen=True)
class LedgerEntry:
    cell_id: str
    agent: str  # "ga" or "ea"
    backend_id: str
    usage: CallUsage
    usd: float


class UsageLedger:
    """Append-only per-call usage log; appends are serialized."""

    def __init__(self) -> None:
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def record(self, entry: LedgerEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def entries(self, cell_id: str | None = None) -> list[LedgerEntry]:
        with self._lock:
            snapshot = list(self._entries)
        if cell_id is None:
            return snapshot
        return [e for e in snapshot if e.cell_id == cell_id]

    def cell_total(self, cell_id: str) -> CellUsageTotal:
        total = CellUsageTotal()
        for e in self.entries(cell_id):
            total = total.add(e.usage, e.usd)
        return total


class Backend(Protocol):
    backend_id: str

    def complete(self, req: CompletionRequest) -> CompletionResult: ...


class ScriptedBackend:
    """Deterministic replay backend for offline runs and tests.

    ``script`` maps a key to an ordered list of canned (text, usage)
    responses; each key keeps its own cursor. By default a request is
    matched to the first key (in script order) that occurs as a
    substring of the rendered request text; a custom ``key_fn`` may
    extract the key from the text instead. Exhausting a key's list is
    an error, never a silent repetition.
    """

    def __init__(
        self,
        script: dict[str, list[tuple[str, CallUsage]]],
        backend_id: str = "scripted",
        key_fn: Callable[[str], str | None] | None = None,
    ):
        self.backend_id = backend_id
        self._script = {k: list(v) for k, v in script.items()}
        self._cursors: dict[str, int] = {k: 0 for k in self._script}
        self._key_fn = key_fn
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | Path, backend_id: str = "scripted") -> "ScriptedBackend":
        """Load a script file: {key: [{"text": ..., "usage": {...}}, ...]}."""
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        script = {
            key: [
                (entry["text"], CallUsage(**entry.get("usage", {"input_tokens": 0, "output_tokens": 0})))
                for entry in entries
            ]
            for key, entries in raw.items()
        }
        return cls(script, backend_id=backend_id)

    def _match_key(self, text: str) -> str:
        if self._key_fn is not None:
            key = self._key_fn(text)
            if key is None or key not in self._script:
                raise ScriptError(f"key_fn produced no scripted key (got {key!r})")
            return key
        for key in self._script:
            if key in text:
                return key
        raise ScriptError("no script key matches the request text")

    def complete(self, req: CompletionRequest) -> CompletionResult:
        key = self._match_key(req.rendered())
        with self._lock:
            cursor = self._cursors[key]
            entries = self._script[key]
            if cursor >= len(entries):
                raise ScriptError(f"script exhausted for key {key!r} after {cursor} replies")
            self._cursors[key] = cursor + 1
        text, usage = entries[cursor]
        return CompletionResult(text=text, usage=usage, backend_id=self.backend_id)


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class OpenAIBackend:
    """Chat-completion client for any OpenAI-compatible endpoint.

    Transport retries here are network-level plumbing and are never
    counted as loop attempts.
    """

    def __init__(
        self,
        model: str,
        backend_id: str | None = None,
        base_url: str | None = None,
        api_key: str | None = None,
        temperature: float | None = None,
        top_p: float | None = None,
        timeout_s: float = 120.0,
        max_transport_retries: int = 2,
        client: httpx.Client | None = None,
    ):
        self.model = model
        self.backend_id = backend_id or model
        self.base_url = (base_url or os.environ.get("OPENAI_BASE_URL") or "https://api.openai.com/v1").rstrip("/")
        self.api_key = api_key or os.environ.get("OPENAI_API_KEY")
        self.temperature = temperature
        self.top_p = top_p
        self.max_transport_retries = max_transport_retries
        self._client = client or httpx.Client(timeout=timeout_s)

    def complete(self, req: CompletionRequest) -> CompletionResult:
        if not self.api_key:
            raise AuthError("no API key configured (set OPENAI_API_KEY)")
        payload: dict = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                *({"role": "user", "content": m} for m in req.user_messages),
            ],
        }
        temperature = req.temperature if req.temperature is not None else self.temperature
        if temperature is not None:
            payload["temperature"] = temperature
        top_p = req.top_p if req.top_p is not None else self.top_p
        if top_p is not None:
            payload["top_p"] = top_p

        last_exc: Exception | None = None
        for _ in range(self.max_transport_retries + 1):
            started = time.monotonic()
            try:
                resp = self._client.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                )
            except httpx.HTTPError as exc:
                last_exc = TransportError(str(exc))
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"auth failure: HTTP {resp.status_code}")
            if resp.status_code in _RETRYABLE_STATUS:
                last_exc = TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            latency = time.monotonic() - started
            return self._parse(resp.json(), latency)
        raise last_exc or TransportError("transport retries exhausted")

    def _parse(self, body: dict, latency_s: float) -> CompletionResult:
        try:
            text = body["choices"][0]["message"]["content"] or ""
            usage = body.get("usage", {})
            details = usage.get("completion_tokens_details") or {}
            call_usage = CallUsage(
                input_tokens=int(usage.get("prompt_tokens", 0)),
                output_tokens=int(usage.get("completion_tokens", 0)),
                reasoning_tokens=int(details.get("reasoning_tokens", 0) or 0),
                latency_s=latency_s,
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc
        return CompletionResult(text=text, usage=call_usage, backend_id=self.backend_id)
