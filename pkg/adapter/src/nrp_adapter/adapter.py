"""Serve the ``nrp-scorer/1`` protocol over standard input/output.

The adapter answers one JSON response line per JSON request line, echoing
the request id.  Two modes:

  echo   deterministic stand-in score, no model loaded: the number of
         distinct tokens shared by query and text over 1 + text length
  model  pointwise cross-encoder relevance (monoT5-style "true"-token
         probability), batched up to ``batch_size``

A malformed request line yields an ``{"error": ...}`` response without an
id and the session continues.
"""

from __future__ import annotations

import argparse
import json
import queue
import re
import sys
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

PROTOCOL_NAME = "nrp-scorer/1"

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def echo_score(query: str, text: str) -> float:
    overlap = len(set(tokenize(query)) & set(tokenize(text)))
    return overlap / (1.0 + len(tokenize(text)))


@dataclass(frozen=True)
class AdapterConfig:
    model_id: str = "castorini/monot5-base-msmarco"
    device: str = "cpu"
    batch_size: int = 16
    mode: str = "model"

    def __post_init__(self):
        if self.mode not in ("model", "echo"):
            raise ValueError(f"mode must be 'model' or 'echo', got {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def name(self) -> str:
        return "echo" if self.mode == "echo" else self.model_id


BatchScorer = Callable[[Sequence[tuple[str, str]]], Sequence[float]]


def echo_batch_scorer(pairs: Sequence[tuple[str, str]]) -> list[float]:
    return [echo_score(query, text) for query, text in pairs]


def build_scorer(config: AdapterConfig) -> BatchScorer:
    if config.mode == "echo":
        return echo_batch_scorer
    from .model import CrossEncoderScorer

    return CrossEncoderScorer(config.model_id, config.device)


def _validate(request) -> tuple[dict | None, dict | None]:
    """Split a parsed request into (ok, error_response)."""
    if not isinstance(request, dict) or "id" not in request:
        return None, {"error": "request without an id"}
    query = request.get("query")
    text = request.get("text")
    if not isinstance(query, str) or not isinstance(text, str):
        return None, {
            "id": request["id"],
            "error": "request needs string 'query' and 'text'",
        }
    return request, None


def serve(
    config: AdapterConfig,
    stdin=None,
    stdout=None,
    scorer: BatchScorer | None = None,
) -> None:
    """Run one protocol session until the input stream closes."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    scorer = scorer if scorer is not None else build_scorer(config)

    write_lock = threading.Lock()

    def emit(obj) -> None:
        with write_lock:
            stdout.write(json.dumps(obj) + "\n")
            stdout.flush()

    emit({"protocol": PROTOCOL_NAME, "name": config.name, "max_connections": 1})

    # a reader thread feeds a queue so consecutive pending requests can be
    # scored as one model batch while staying responsive when idle
    lines: queue.Queue = queue.Queue()
    _EOF = object()

    def read_loop() -> None:
        for line in stdin:
            lines.put(line)
        lines.put(_EOF)

    reader = threading.Thread(target=read_loop, daemon=True)
    reader.start()

    done = False
    while not done:
        batch: list[dict] = []
        item = lines.get()
        while True:
            if item is _EOF:
                done = True
                break
            line = item.strip()
            if line:
                try:
                    request = json.loads(line)
                except json.JSONDecodeError as exc:
                    emit({"error": f"invalid JSON request: {exc}"})
                else:
                    ok, failure = _validate(request)
                    if failure is not None:
                        emit(failure)
                    else:
                        batch.append(ok)
            if len(batch) >= config.batch_size:
                break
            try:
                item = lines.get_nowait()
            except queue.Empty:
                break
        if batch:
            scores = scorer([(r["query"], r["text"]) for r in batch])
            for request, score in zip(batch, scores):
                emit({"id": request["id"], "score": float(score)})
    reader.join()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nrp-adapter",
        description="Reference nrp-scorer/1 adapter (cross-encoder or echo mode).",
    )
    parser.add_argument("--model", default=AdapterConfig.model_id,
                        help="cross-encoder model identifier")
    parser.add_argument("--echo", action="store_true",
                        help="deterministic echo mode; loads no model")
    parser.add_argument("--batch-size", type=int, default=AdapterConfig.batch_size)
    parser.add_argument("--device", default=AdapterConfig.device)
    args = parser.parse_args(argv)
    config = AdapterConfig(
        model_id=args.model,
        device=args.device,
        batch_size=args.batch_size,
        mode="echo" if args.echo else "model",
    )
    serve(config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
