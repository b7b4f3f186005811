"""Client for an OpenAI-compatible chat endpoint backing the external-llm policy.

The default build never opens a socket: tests inject a fake transport, and
NETWORK_CALLS counts real requests so a suite can assert it stayed at zero.
Live mode reads the API key from the LLM_API_KEY environment variable; the
key is never taken from configuration files or the command line.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Optional

from .core import (
    Domain,
    PolicyUnavailableError,
    SmoothmasError,
    StateVec,
    _require,
)
from .policy import PolicyInput

NETWORK_CALLS = 0
_COUNTER_LOCK = threading.Lock()

_NUMBER_RE = re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")

Transport = Callable[[str, dict, dict, float], dict]
Sleeper = Callable[[float], None]


class TransportError(SmoothmasError):
    """Request did not produce a usable HTTP response."""

    def __init__(self, msg: str, status: Optional[int] = None):
        super().__init__(msg)
        self.status = status


class ReplyParseError(SmoothmasError):
    """The model reply did not contain the expected numbers."""


def network_call_count() -> int:
    with _COUNTER_LOCK:
        return NETWORK_CALLS


def reset_network_call_count() -> None:
    global NETWORK_CALLS
    with _COUNTER_LOCK:
        NETWORK_CALLS = 0


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str
    model: str
    timeout_s: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    max_concurrency: int = 4
    strict_parse: bool = False

    def __post_init__(self):
        _require(bool(self.base_url), "base_url must be non-empty")
        _require(bool(self.model), "model must be non-empty")
        _require(self.timeout_s > 0.0, "timeout_s must be > 0")
        _require(self.max_retries >= 0, "max_retries must be >= 0")
        _require(self.temperature >= 0.0, "temperature must be >= 0")
        _require(self.max_concurrency >= 1, "max_concurrency must be >= 1")


def build_prompt(policy_input: PolicyInput, domain: Domain) -> str:
    """Deterministic instruction text for one state-update query."""
    d = policy_input.dimension
    _require(domain.dimension == d, "vector dimension does not match domain")

    def fmt(vec: StateVec) -> str:
        return ", ".join(f"{x:g}" for x in vec)

    lines = [
        "You are one agent in a distributed consensus task.",
        f"Your current value: {fmt(policy_input.own_state)}",
    ]
    if policy_input.neighbor_states:
        lines.append("Your neighbors report:")
        for agent, vec in policy_input.neighbor_states:
            lines.append(f"  agent {agent}: {fmt(vec)}")
    else:
        lines.append("You have no neighbor reports this round.")
    bounds = ", ".join(
        f"[{lo:g}, {hi:g}]" for lo, hi in zip(domain.low, domain.high)
    )
    lines.append(f"Each component must lie in {bounds}.")
    lines.append(
        "Move your value toward agreement with your neighbors."
    )
    if d == 1:
        lines.append("Reply with a single decimal number and nothing else.")
    elif d == 3:
        lines.append(
            'Reply with three comma-separated decimal numbers in "x,y,z" '
            "format and nothing else."
        )
    else:
        lines.append(
            f"Reply with {d} comma-separated decimal numbers and nothing else."
        )
    return "\n".join(lines)


def parse_reply(text: str, dimension: int, strict: bool = False) -> StateVec:
    """Extract dimension numbers from a model reply.

    Lenient mode takes the first numeric tokens wherever they appear; strict
    mode requires the whole reply to be exactly the comma-separated numbers.
    """
    _require(dimension >= 1, "dimension must be >= 1")
    if strict:
        parts = [p.strip() for p in text.strip().split(",")]
        if len(parts) != dimension or not all(
            _NUMBER_RE.fullmatch(p) for p in parts
        ):
            raise ReplyParseError(
                f"strict parse expected exactly {dimension} comma-separated "
                f"numbers, got {text!r}"
            )
        return tuple(float(p) for p in parts)
    found = _NUMBER_RE.findall(text)
    if len(found) < dimension:
        raise ReplyParseError(
            f"expected {dimension} numbers in reply, found {len(found)}: {text!r}"
        )
    return tuple(float(tok) for tok in found[:dimension])


def _urllib_transport(url: str, body: dict, headers: dict, timeout: float) -> dict:
    global NETWORK_CALLS
    with _COUNTER_LOCK:
        NETWORK_CALLS += 1
    data = json.dumps(body).encode("utf-8")
    request = urllib.request.Request(url, data=data, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            payload = resp.read()
    except urllib.error.HTTPError as exc:
        raise TransportError(f"HTTP {exc.code} from {url}", status=exc.code) from exc
    except urllib.error.URLError as exc:
        raise TransportError(f"request to {url} failed: {exc.reason}") from exc
    try:
        return json.loads(payload)
    except ValueError as exc:
        raise TransportError(f"non-JSON response from {url}") from exc


class LlmGateway:
    """Thread-safe chat-completion client with retry and concurrency cap.

    Implements the DecisionGateway protocol the external-llm policy expects.
    Pass a transport callable to stay offline; the default transport performs
    real HTTP and needs LLM_API_KEY in the environment.
    """

    def __init__(
        self,
        config: GatewayConfig,
        transport: Optional[Transport] = None,
        sleeper: Sleeper = time.sleep,
    ):
        self.config = config
        self._live = transport is None
        self._transport = transport if transport is not None else _urllib_transport
        self._sleep = sleeper
        self._slots = threading.BoundedSemaphore(config.max_concurrency)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self._live:
            key = os.environ.get("LLM_API_KEY")
            if not key:
                raise PolicyUnavailableError(
                    "live llm mode needs the LLM_API_KEY environment variable"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _extract_content(self, response: dict) -> str:
        try:
            content = response["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ReplyParseError(f"malformed response shape: {response!r}") from exc
        if not isinstance(content, str):
            raise ReplyParseError(f"reply content is not text: {content!r}")
        return content

    def query_numeric(
        self,
        prompt: str,
        dimension: int = 1,
        domain: Optional[Domain] = None,
    ) -> StateVec:
        """One chat request, parsed to numbers, with retry on failure.

        Retries transport errors (rate limits included) and unparseable
        replies with exponential backoff; after max_retries extra attempts
        the last failure is wrapped in PolicyUnavailableError.
        """
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
        }
        headers = self._headers()
        attempts = cfg.max_retries + 1
        last_error: Optional[Exception] = None
        for attempt in range(attempts):
            if attempt > 0:
                self._sleep(0.5 * 2.0 ** (attempt - 1))
            try:
                with self._slots:
                    response = self._transport(url, body, headers, cfg.timeout_s)
                content = self._extract_content(response)
                vec = parse_reply(content, dimension, strict=cfg.strict_parse)
                return domain.clamp(vec) if domain is not None else vec
            except (TransportError, ReplyParseError) as exc:
                last_error = exc
        raise PolicyUnavailableError(
            f"llm endpoint failed after {attempts} attempts: {last_error}"
        )

    def query_decision(self, policy_input: PolicyInput, domain: Domain) -> StateVec:
        prompt = build_prompt(policy_input, domain)
        return self.query_numeric(prompt, dimension=domain.dimension, domain=domain)
