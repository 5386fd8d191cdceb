"""Model clients behind a single ``complete(request) -> text`` interface.

Every request has a content hash (text plus image bytes), which keys the
on-disk response cache. Wrapping any client in :class:`CachedClient` makes a
run replayable; :class:`ReplayClient` serves only from the cache and never
reaches a backend.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import os
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Protocol

import httpx

from ..errors import BackendError, VerdictParseError
from ..storage import atomic_write_text, file_digest

logger = logging.getLogger(__name__)


def text_part(text: str) -> dict:
    return {"type": "text", "text": text}


def image_part(path: str) -> dict:
    return {"type": "image", "image": str(path)}


@dataclass(frozen=True)
class ChatRequest:
    """A system prompt plus ordered messages; ``task`` names the synthesis role."""

    system: str
    messages: tuple[dict, ...]
    task: str = "generic"
    attempt: int = 0

    def canonical(self) -> dict:
        def part(p):
            if p.get("type") == "image":
                return {"type": "image", "sha256": _image_digest(p["image"])}
            return p

        doc: dict[str, Any] = {
            "task": self.task,
            "system": self.system,
            "messages": [{"role": m["role"], "content": [part(p) for p in m["content"]]} for m in self.messages],
        }
        if self.attempt:
            doc["attempt"] = self.attempt
        return doc

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def texts(self) -> str:
        return "\n".join(p["text"] for m in self.messages for p in m["content"] if p.get("type") == "text")


_digest_lock = threading.Lock()
_digests: dict[tuple[str, int], str] = {}


def _image_digest(path: str) -> str:
    try:
        key = (path, os.stat(path).st_mtime_ns)
    except OSError as exc:
        raise BackendError(f"request image missing: {path}") from exc
    with _digest_lock:
        if key not in _digests:
            _digests[key] = file_digest(path)
        return _digests[key]


class ModelClient(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


# ---------------------------------------------------------------------------
# deterministic mock


def _unit(digest: str, salt: str) -> float:
    h = hashlib.sha256((digest + salt).encode()).digest()
    return int.from_bytes(h[:8], "big") / 2**64


class MockClient:
    """Offline stand-in for a real model.

    ``replies`` maps a task name to a fixed reply string or to a callable
    taking the request. Tasks without an entry get a plausible tagged reply
    that is a pure function of the request, so mock runs are reproducible.
    Every request is appended to ``calls`` for inspection.
    """

    def __init__(self, replies: Optional[Mapping[str, Any]] = None, incorrect_rate: float = 0.1,
                 redundant_rate: float = 0.05, high_privacy_rate: float = 0.05):
        self.replies = dict(replies or {})
        self.incorrect_rate = incorrect_rate
        self.redundant_rate = redundant_rate
        self.high_privacy_rate = high_privacy_rate
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls.append(request)
        r = self.replies.get(request.task)
        if callable(r):
            return r(request)
        if r is not None:
            return r
        return self._default(request)

    def _default(self, req: ChatRequest) -> str:
        d = req.digest()
        code = _field(req.texts(), "Action code") or "the recorded action"
        if req.task == "reflect":
            u = _unit(d, "verdict")
            if u < self.incorrect_rate:
                return ("<verdict>incorrect</verdict>\n<rationale>The screen after the action does not "
                        "move the task forward; the target looks wrong.</rationale>")
            if u < self.incorrect_rate + self.redundant_rate:
                return ("<verdict>redundant</verdict>\n<rationale>The action repeats an effect that was "
                        "already in place.</rationale>")
            return (f"<verdict>correct</verdict>\n<state_change>After {code} the screen shows the expected "
                    "update.</state_change>")
        if req.task == "generate":
            return (f"<observation>The window shows the controls relevant to the current subgoal.</observation>\n"
                    f"<thought>The previous steps went as planned, so the next move is {code}.</thought>\n"
                    f"<action>Perform {code} to continue the task.</action>")
        if req.task == "summarize":
            goal = _field(req.texts(), "Original instruction") or "the task"
            s = [1 + int(_unit(d, k) * 10) for k in ("a", "e", "d")]
            return (f"<refined_instruction>{goal} (made precise)</refined_instruction>\n"
                    f"<score_alignment>{s[0]}</score_alignment>\n<score_efficiency>{s[1]}</score_efficiency>\n"
                    f"<score_difficulty>{s[2]}</score_difficulty>")
        if req.task == "privacy":
            u = _unit(d, "privacy")
            level = "High" if u < self.high_privacy_rate else ("Low" if u < 0.3 else "None")
            return f"<privacy_sensitivity>{level}</privacy_sensitivity>"
        return "OK"


def _field(text: str, name: str) -> Optional[str]:
    for line in text.splitlines():
        if line.startswith(name + ":"):
            return line[len(name) + 1:].strip()
    return None


# ---------------------------------------------------------------------------
# cache


class CachedClient:
    """Content-addressed response cache in front of ``inner``.

    With ``inner=None`` every miss is a :class:`BackendError`, which is the
    replay mode used to make annotation runs bit-reproducible.
    """

    def __init__(self, inner: Optional[ModelClient], directory):
        self.inner = inner
        self.dir = Path(directory)
        self.hits = 0
        self.misses = 0

    def path_for(self, request: ChatRequest) -> Path:
        d = request.digest()
        return self.dir / d[:2] / f"{d}.json"

    def complete(self, request: ChatRequest) -> str:
        path = self.path_for(request)
        if path.exists():
            self.hits += 1
            return json.loads(path.read_text(encoding="utf-8"))["response"]
        self.misses += 1
        if self.inner is None:
            raise BackendError(f"replay cache miss for request {path.stem[:12]}")
        response = self.inner.complete(request)
        atomic_write_text(path, json.dumps({"task": request.task, "response": response},
                                           sort_keys=True, ensure_ascii=False) + "\n")
        return response


class ReplayClient(CachedClient):
    def __init__(self, directory):
        super().__init__(None, directory)


# ---------------------------------------------------------------------------
# remote backend


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # mock | http | replay
    endpoint: str = ""
    model: str = ""
    token_env: str = "CUAKIT_API_TOKEN"
    max_in_flight: int = 4
    retries: int = 3
    backoff: float = 0.5
    timeout: float = 60.0
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("mock", "http", "replay"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.retries < 1 or self.max_in_flight < 1:
            raise ValueError("retries and max_in_flight must be at least 1")


def _data_url(path: str) -> str:
    mime = mimetypes.guess_type(path)[0] or "image/png"
    with open(path, "rb") as fh:
        return f"data:{mime};base64," + base64.b64encode(fh.read()).decode("ascii")


class HTTPClient:
    """OpenAI-style chat completions endpoint. The token comes from ``cfg.token_env``."""

    def __init__(self, cfg: BackendConfig, transport: Optional[httpx.BaseTransport] = None):
        if not cfg.endpoint:
            raise ValueError("http backend needs an endpoint")
        self.cfg = cfg
        headers = {}
        token = os.environ.get(cfg.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(timeout=cfg.timeout, headers=headers, transport=transport)
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)

    def payload(self, req: ChatRequest) -> dict:
        def part(p):
            if p.get("type") == "image":
                return {"type": "image_url", "image_url": {"url": _data_url(p["image"])}}
            return {"type": "text", "text": p["text"]}

        msgs = [{"role": "system", "content": req.system}]
        msgs += [{"role": m["role"], "content": [part(p) for p in m["content"]]} for m in req.messages]
        return {"model": self.cfg.model, "messages": msgs, "temperature": 0}

    def complete(self, request: ChatRequest) -> str:
        with self._slots:
            try:
                r = self._http.post(self.cfg.endpoint, json=self.payload(request))
            except httpx.HTTPError as exc:
                raise BackendError(f"request failed: {exc}") from None
        if r.status_code != 200:
            raise BackendError(f"backend returned HTTP {r.status_code}")
        try:
            return r.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise BackendError("backend reply has no message content") from None

    def close(self):
        self._http.close()


def make_client(cfg: BackendConfig, mock: Optional[MockClient] = None) -> ModelClient:
    if cfg.kind == "replay":
        if not cfg.cache_dir:
            raise ValueError("replay backend needs a cache directory")
        return ReplayClient(cfg.cache_dir)
    inner: ModelClient = (mock or MockClient()) if cfg.kind == "mock" else HTTPClient(cfg)
    return CachedClient(inner, cfg.cache_dir) if cfg.cache_dir else inner


# ---------------------------------------------------------------------------
# retries


@dataclass
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.5
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)


def complete_parsed(client: ModelClient, request: ChatRequest, parse: Callable[[str], Any],
                    policy: Optional[RetryPolicy] = None):
    """Send ``request`` and parse the reply, retrying backend and parse failures.

    Attempt ``n`` is sent with ``attempt=n`` so a cached malformed reply is
    not served again. The last error is re-raised once attempts run out.
    """
    policy = policy or RetryPolicy()
    last: Optional[Exception] = None
    for n in range(policy.attempts):
        if n:
            policy.sleep(policy.backoff * 2 ** (n - 1))
        try:
            return parse(client.complete(replace(request, attempt=n)))
        except (BackendError, VerdictParseError) as exc:
            logger.info("%s attempt %d failed: %s", request.task, n + 1, exc)
            last = exc
    assert last is not None
    raise last
