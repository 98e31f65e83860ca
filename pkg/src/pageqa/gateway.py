"""Gateway to external generation and embedding endpoints.

Every consumer in this package talks to one of two implementations of the
same contract: `HttpGateway` performs real HTTP round trips with bounded
retries, and `MockGateway` replays scripted replies keyed by
(role, sha256(prompt)) with zero network activity, making every pipeline
stage fully deterministic under test.

Structured roles (answer generation and QA decomposition) must return
JSON that validates against the role schema; anything else is a parse
error, never silently coerced.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Protocol, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Role = str
ROLES = ("question_gen", "answer_gen", "decomposer", "qa_assistant", "persona_expand")
STRUCTURED_ROLES = ("answer_gen", "decomposer")

RETRYABLE_STATUSES = (429, 500, 502, 503, 504)


class GatewayError(RuntimeError):
    """Endpoint unreachable or persistently failing; carries attempt count."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class ReplyParseError(ValueError):
    """A structured reply failed schema validation; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass
class GenRequest:
    role: Role
    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    structured: bool = False

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in STRUCTURED_ROLES:
            self.structured = True


@dataclass
class RetryPolicy:
    max_retries: int = 3
    base_backoff: float = 0.5


@dataclass
class GatewayConfig:
    endpoint: str = ""
    auth_env: str = ""
    timeout: float = 30.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    mock_mode: bool = False
    mock_script: Optional[str] = None

    def __post_init__(self) -> None:
        if self.mock_mode and not self.mock_script:
            raise ValueError("mock_mode requires mock_script")


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Structured-reply schemas
# ---------------------------------------------------------------------------


def validate_structured(role: Role, payload: Any, raw: str) -> dict[str, Any]:
    if not isinstance(payload, dict):
        raise ReplyParseError(f"{role}: reply is not a JSON object", raw)
    if role == "answer_gen":
        if not isinstance(payload.get("answerable"), bool):
            raise ReplyParseError("answer_gen: missing boolean 'answerable'", raw)
        if payload["answerable"]:
            if not isinstance(payload.get("answer"), str):
                raise ReplyParseError("answer_gen: missing string 'answer'", raw)
            if not isinstance(payload.get("page"), int):
                raise ReplyParseError("answer_gen: missing integer 'page'", raw)
        return payload
    if role == "decomposer":
        turns = payload.get("turns")
        if not isinstance(turns, list):
            raise ReplyParseError("decomposer: missing list 'turns'", raw)
        for turn in turns:
            if not isinstance(turn, dict) or not isinstance(
                turn.get("question"), str
            ) or not isinstance(turn.get("answer"), str):
                raise ReplyParseError("decomposer: malformed turn", raw)
            if "page" in turn and turn["page"] is not None and not isinstance(
                turn["page"], int
            ):
                raise ReplyParseError("decomposer: non-integer turn page", raw)
        return payload
    raise ReplyParseError(f"role {role} has no structured schema", raw)


class Gateway(Protocol):
    def generate(self, req: GenRequest) -> Any: ...

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


# ---------------------------------------------------------------------------
# Live HTTP gateway
# ---------------------------------------------------------------------------

# transport(url, payload, headers, timeout) -> (status_code, body_text)
Transport = Callable[[str, dict[str, Any], dict[str, str], float], tuple[int, str]]


def _httpx_transport(
    url: str, payload: dict[str, Any], headers: dict[str, str], timeout: float
) -> tuple[int, str]:
    import httpx

    resp = httpx.post(url, json=payload, headers=headers, timeout=timeout)
    return resp.status_code, resp.text


class HttpGateway:
    """POSTs {role, prompt, params} and retries transient failures with
    non-decreasing exponential backoff."""

    def __init__(
        self,
        config: GatewayConfig,
        transport: Transport = _httpx_transport,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if config.mock_mode:
            raise ValueError("HttpGateway cannot run in mock mode")
        self.config = config
        self.transport = transport
        self.sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if self.config.auth_env:
            token = os.environ.get(self.config.auth_env, "")
            if token:
                headers["authorization"] = f"Bearer {token}"
        return headers

    def _post(self, path: str, payload: dict[str, Any]) -> str:
        url = self.config.endpoint.rstrip("/") + path
        attempts = 0
        last_error = "no attempt made"
        for attempt in range(self.config.retry.max_retries + 1):
            attempts = attempt + 1
            try:
                status, body = self.transport(
                    url, payload, self._headers(), self.config.timeout
                )
            except Exception as exc:  # network-level failure
                last_error = f"transport error: {exc}"
                status = None
            else:
                if status == 200:
                    return body
                last_error = f"HTTP {status}"
                if status not in RETRYABLE_STATUSES:
                    break
            if attempt < self.config.retry.max_retries:
                self.sleep(self.config.retry.base_backoff * (2**attempt))
        raise GatewayError(f"{url}: {last_error} after {attempts} attempts", attempts)

    def generate(self, req: GenRequest) -> Any:
        body = self._post(
            "/generate",
            {
                "role": req.role,
                "prompt": req.prompt,
                "params": {
                    "max_tokens": req.max_tokens,
                    "temperature": req.temperature,
                },
            },
        )
        reply = json.loads(body)
        text = reply.get("text", "")
        if not req.structured:
            return text
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ReplyParseError(f"{req.role}: reply is not JSON: {exc}", text)
        return validate_structured(req.role, payload, text)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("no texts to embed")
        body = self._post("/embed", {"texts": list(texts)})
        vectors = json.loads(body)["vectors"]
        return [_renormalize(np.asarray(v, dtype=np.float64)) for v in vectors]


def _renormalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise ValueError("embedding endpoint returned a zero vector")
    return vec / norm


# ---------------------------------------------------------------------------
# Deterministic mock
# ---------------------------------------------------------------------------


class MockGateway:
    """Scripted gateway: replies come from a table keyed by
    (role, prompt_hash), with '*' as a per-role fallback key.

    Scripts are JSONL records {role, prompt_hash, reply}; replies may be
    strings or, for structured roles, JSON objects. Mock mode performs no
    network activity whatsoever. All prompts are recorded for test
    assertions.
    """

    def __init__(self, records: Iterable[dict[str, Any]], embed_dim: int = 64):
        self.table: dict[tuple[str, str], Any] = {}
        for rec in records:
            self.table[(rec["role"], rec["prompt_hash"])] = rec["reply"]
        self.embed_dim = embed_dim
        self.calls: list[GenRequest] = []

    @classmethod
    def from_script(cls, path: str, embed_dim: int = 64) -> "MockGateway":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return cls(records, embed_dim)

    def generate(self, req: GenRequest) -> Any:
        self.calls.append(req)
        key = (req.role, prompt_hash(req.prompt))
        if key not in self.table:
            key = (req.role, "*")
        if key not in self.table:
            raise GatewayError(f"mock has no reply for role {req.role}", attempts=1)
        reply = self.table[key]
        if not req.structured:
            return reply if isinstance(reply, str) else json.dumps(reply)
        raw = reply if isinstance(reply, str) else json.dumps(reply)
        payload = reply
        if isinstance(reply, str):
            try:
                payload = json.loads(reply)
            except json.JSONDecodeError as exc:
                raise ReplyParseError(f"{req.role}: reply is not JSON: {exc}", reply)
        return validate_structured(req.role, payload, raw)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("no texts to embed")
        out = []
        for text in texts:
            digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "big"))
            out.append(_renormalize(rng.standard_normal(self.embed_dim)))
        return out


def make_gateway(config: GatewayConfig) -> Gateway:
    if config.mock_mode:
        return MockGateway.from_script(config.mock_script)
    return HttpGateway(config)
