"""Client side of the ``nrp-scorer/1`` wire protocol.

Adapters speak UTF-8 JSON, one object per line, LF-terminated:

  adapter -> client   {"protocol": "nrp-scorer/1", "name": <str>,
                       "max_connections": <int, optional>}   (first line)
  client  -> adapter  {"id": <str>, "query": <str>, "text": <str>}
  adapter -> client   {"id": <str>, "score": <finite number>}
                      or {"id": <str>, "error": <str>}

The client closes the adapter's input to end a session.  The HTTP variant
POSTs a JSON array of request objects and receives a JSON array of response
objects, with the same handshake served at ``GET /handshake``.
"""

from __future__ import annotations

import contextlib
import json
import math
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Sequence

import requests

PROTOCOL_NAME = "nrp-scorer/1"


class ScorerProtocolError(RuntimeError):
    """Base class for adapter protocol failures; aborts the evaluation."""


class HandshakeError(ScorerProtocolError):
    """The adapter did not present a valid nrp-scorer/1 handshake."""


class ScorerTimeoutError(ScorerProtocolError):
    """The adapter did not answer within the configured timeout."""


class MissingItemError(ScorerProtocolError):
    """The adapter ended the batch without scoring every item."""


class NonFiniteScoreError(ScorerProtocolError):
    """The adapter returned NaN or an infinite score."""


class ScorerItemError(ScorerProtocolError):
    """The adapter reported an error for a specific item."""


class _OutputClosed(ScorerProtocolError):
    """Internal: the adapter reached EOF on its output stream."""


@dataclass(frozen=True)
class Handshake:
    name: str
    max_connections: int | None


def parse_handshake(obj) -> Handshake:
    if not isinstance(obj, dict):
        raise HandshakeError(f"handshake must be a JSON object, got {obj!r}")
    if obj.get("protocol") != PROTOCOL_NAME:
        raise HandshakeError(
            f"adapter speaks {obj.get('protocol')!r}, expected {PROTOCOL_NAME!r}"
        )
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise HandshakeError("handshake is missing a non-empty 'name'")
    max_connections = obj.get("max_connections")
    if max_connections is not None:
        if not isinstance(max_connections, int) or max_connections < 1:
            raise HandshakeError(
                f"invalid max_connections {max_connections!r} in handshake"
            )
    return Handshake(name=name, max_connections=max_connections)


def _match_responses(
    raw_responses: list, pending: dict[str, int], scores: list
) -> None:
    """Fill ``scores`` slots from response objects, enforcing the contract."""
    for obj in raw_responses:
        if not isinstance(obj, dict):
            raise ScorerProtocolError(f"response is not a JSON object: {obj!r}")
        if "id" not in obj:
            raise ScorerProtocolError(
                f"adapter reported an error: {obj.get('error', obj)!r}"
            )
        item_id = obj["id"]
        if item_id not in pending:
            raise ScorerProtocolError(
                f"adapter answered unknown or already-answered item {item_id!r}"
            )
        if "error" in obj:
            raise ScorerItemError(f"scorer failed on item {item_id}: {obj['error']}")
        score = obj.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ScorerProtocolError(
                f"missing or non-numeric score for item {item_id!r}"
            )
        if not math.isfinite(score):
            raise NonFiniteScoreError(
                f"non-finite score {score!r} for item {item_id}"
            )
        scores[pending.pop(item_id)] = float(score)


def _require_complete(pending: dict[str, int]) -> None:
    if pending:
        missing = sorted(pending)[0]
        raise MissingItemError(f"scorer omitted item {missing}")


class ProcessSession:
    """One line-delimited protocol session over a child process."""

    def __init__(self, command: str, timeout: float = 60.0):
        self.timeout = timeout
        argv = shlex.split(command)
        if not argv:
            raise ValueError("empty scorer command")
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise ScorerProtocolError(f"cannot start scorer {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        try:
            first = self._next_json(time.monotonic() + timeout)
        except ScorerTimeoutError:
            self.close()
            raise
        except ScorerProtocolError as exc:
            self.close()
            raise HandshakeError(f"no handshake from {command!r}: {exc}") from exc
        try:
            self.handshake = parse_handshake(first)
        except HandshakeError:
            self.close()
            raise

    def _read_loop(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _next_json(self, deadline: float):
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise ScorerTimeoutError("timed out waiting for the scorer adapter")
        try:
            line = self._lines.get(timeout=remaining)
        except queue.Empty:
            raise ScorerTimeoutError(
                f"scorer adapter sent nothing for {self.timeout:.1f}s"
            ) from None
        if line is None:
            raise _OutputClosed("scorer adapter closed its output")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScorerProtocolError(
                f"invalid JSON from scorer adapter: {line!r} ({exc})"
            ) from None

    def score_batch(
        self, query: str, items: Sequence[tuple[str, str]]
    ) -> list[tuple[str, float]]:
        pending = {item_id: i for i, (item_id, _) in enumerate(items)}
        if len(pending) != len(items):
            raise ValueError("duplicate item ids in scorer batch")
        scores: list = [None] * len(items)
        payload = "".join(
            json.dumps({"id": item_id, "query": query, "text": text}) + "\n"
            for item_id, text in items
        )
        # write from a helper thread so a slow adapter cannot deadlock us on
        # a full pipe while we wait for its responses
        writer = threading.Thread(
            target=self._write_payload, args=(payload,), daemon=True
        )
        writer.start()
        deadline = time.monotonic() + self.timeout
        try:
            while pending:
                try:
                    obj = self._next_json(deadline)
                except _OutputClosed:
                    _require_complete(pending)  # raises naming the first omission
                    raise
                except ScorerTimeoutError as exc:
                    raise ScorerTimeoutError(
                        f"{exc}; still waiting for {sorted(pending)[:5]}"
                    ) from None
                _match_responses([obj], pending, scores)
        except ScorerProtocolError:
            # a session that failed mid-batch is not reusable
            self.close()
            raise
        writer.join()
        _require_complete(pending)
        return [(item_id, scores[i]) for i, (item_id, _) in enumerate(items)]

    def _write_payload(self, payload: str) -> None:
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError):
            pass  # surfaced as a missing/closed-output error on the read side

    def close(self) -> None:
        with contextlib.suppress(OSError, ValueError):
            if self._proc.stdin:
                self._proc.stdin.close()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class HttpSession:
    """Batch scoring against an HTTP adapter; one POST per batch."""

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self._http = requests.Session()
        try:
            reply = self._http.get(f"{self.url}/handshake", timeout=timeout)
            reply.raise_for_status()
            body = reply.json()
        except requests.Timeout as exc:
            raise ScorerTimeoutError(f"handshake timed out for {url}") from exc
        except (requests.RequestException, ValueError) as exc:
            raise HandshakeError(f"handshake failed for {url}: {exc}") from exc
        self.handshake = parse_handshake(body)

    def score_batch(
        self, query: str, items: Sequence[tuple[str, str]]
    ) -> list[tuple[str, float]]:
        pending = {item_id: i for i, (item_id, _) in enumerate(items)}
        if len(pending) != len(items):
            raise ValueError("duplicate item ids in scorer batch")
        scores: list = [None] * len(items)
        payload = [
            {"id": item_id, "query": query, "text": text} for item_id, text in items
        ]
        try:
            reply = self._http.post(self.url, json=payload, timeout=self.timeout)
            reply.raise_for_status()
            body = reply.json()
        except requests.Timeout as exc:
            raise ScorerTimeoutError(f"scorer request timed out for {self.url}") from exc
        except (requests.RequestException, ValueError) as exc:
            raise ScorerProtocolError(f"scorer request failed: {exc}") from exc
        if not isinstance(body, list):
            raise ScorerProtocolError(f"expected a JSON array, got {body!r}")
        _match_responses(body, pending, scores)
        _require_complete(pending)
        return [(item_id, scores[i]) for i, (item_id, _) in enumerate(items)]

    def close(self) -> None:
        self._http.close()


def open_session(spec: str, timeout: float = 60.0):
    """Open one scorer session for a ``cmd:`` or ``http(s):`` spec."""
    if spec.startswith("cmd:"):
        return ProcessSession(spec[len("cmd:"):], timeout=timeout)
    if spec.startswith(("http:", "https:")):
        return HttpSession(spec, timeout=timeout)
    raise ValueError(f"not an external scorer spec: {spec!r}")


class SessionPool:
    """Bounded pool of adapter sessions shared by evaluation workers.

    The bound is the smaller of the caller's limit and the adapter's
    advertised ``max_connections``; sessions are created lazily.
    """

    def __init__(self, spec: str, timeout: float = 60.0, limit: int | None = None):
        self._spec = spec
        self._timeout = timeout
        self._limit = limit
        self._idle: queue.Queue = queue.Queue()
        self._created = 0
        self._lock = threading.Lock()
        self._create_lock = threading.Lock()
        self._all: list = []
        self.adapter_name: str | None = None

    @contextlib.contextmanager
    def acquire(self):
        session = self._take()
        try:
            yield session
        except BaseException:
            with self._lock:
                self._created -= 1
                if session in self._all:
                    self._all.remove(session)
            session.close()
            raise
        else:
            self._idle.put(session)

    def _take(self):
        try:
            return self._idle.get_nowait()
        except queue.Empty:
            pass
        # creation is serialized so the first handshake can tighten the
        # connection limit before concurrent callers overshoot it
        with self._create_lock:
            try:
                return self._idle.get_nowait()
            except queue.Empty:
                pass
            with self._lock:
                can_create = self._limit is None or self._created < self._limit
                if can_create:
                    self._created += 1
            if can_create:
                try:
                    session = open_session(self._spec, timeout=self._timeout)
                except BaseException:
                    with self._lock:
                        self._created -= 1
                    raise
                with self._lock:
                    self._all.append(session)
                    self.adapter_name = session.handshake.name
                    advertised = session.handshake.max_connections
                    if advertised is not None and (
                        self._limit is None or advertised < self._limit
                    ):
                        self._limit = advertised
                return session
        return self._idle.get()

    def close(self) -> None:
        with self._lock:
            sessions, self._all = self._all, []
            self._created = 0
        for session in sessions:
            session.close()
