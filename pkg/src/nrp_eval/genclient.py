"""Answer generation against any OpenAI-compatible chat completions endpoint.

Every (query, sample) completion is persisted to ``answers.jsonl`` the
moment it arrives, so an interrupted run resumes by skipping pairs already
on disk.  Bearer auth comes from the ``NRP_API_KEY`` environment variable.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import requests

from .answers import GeneratedAnswer, answer_to_json, load_answers
from .corpus import Query

logger = logging.getLogger(__name__)

API_KEY_ENV = "NRP_API_KEY"

PROMPT_TEMPLATES = {
    "none": "{query}",
    "short_qa": "Q: {query} A:",
    "long_qa": "Question: {query} Answer:",
    "multimedqa": (
        "You are a helpful medical knowledge assistant. Provide useful, "
        "complete, and scientifically grounded answers to common consumer "
        "search queries about health. Question: {query} Complete Answer:"
    ),
}


def render_prompt(template_id: str, query_text: str) -> str:
    """Instantiate a prompt template with the query text unmodified."""
    try:
        template = PROMPT_TEMPLATES[template_id]
    except KeyError:
        raise ValueError(
            f"unknown prompt template {template_id!r}; "
            f"expected one of {sorted(PROMPT_TEMPLATES)}"
        ) from None
    return template.replace("{query}", query_text)


@dataclass(frozen=True)
class GenParams:
    """Sampling parameters; the defaults are fixed across all models."""

    max_new_tokens: int = 512
    temperature: float = 0.75
    top_k: int = 50
    top_p: float = 0.95
    repetition_penalty: float = 1.2
    n_samples: int = 10

    def __post_init__(self):
        for name in ("max_new_tokens", "temperature", "top_k", "top_p",
                     "repetition_penalty", "n_samples"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


# request-body keys that may be dropped when an endpoint rejects them
_OPTIONAL_BODY_KEYS = ("top_k", "top_p", "repetition_penalty", "temperature", "max_tokens")


class _AnswerSink:
    """Serialized JSONL writer; one line per completed sample."""

    def __init__(self, path: Path):
        self._fh = open(path, "a", encoding="utf-8")
        self._lock = threading.Lock()
        self.written = 0

    def write(self, answer: GeneratedAnswer) -> None:
        line = answer_to_json(answer) + "\n"
        with self._lock:
            self._fh.write(line)
            self._fh.flush()
            self.written += 1

    def close(self) -> None:
        self._fh.close()


def _request_body(model_name: str, prompt: str, params: GenParams,
                  dropped: set[str]) -> dict:
    body = {
        "model": model_name,
        "messages": [{"role": "user", "content": prompt}],
        "max_tokens": params.max_new_tokens,
        "temperature": params.temperature,
        "top_k": params.top_k,
        "top_p": params.top_p,
        "repetition_penalty": params.repetition_penalty,
    }
    for key in dropped:
        body.pop(key, None)
    return body


def generate_answers(
    endpoint: str,
    model_name: str,
    queries: Sequence[Query],
    template_id: str,
    params: GenParams | None = None,
    out_path: str | Path = "answers.jsonl",
    *,
    api_key: str | None = None,
    max_attempts: int = 3,
    backoff_base: float = 1.0,
    concurrency: int = 1,
    timeout: float = 120.0,
    session: requests.Session | None = None,
) -> int:
    """Request ``n_samples`` completions per query and persist each one.

    Pairs already present in ``out_path`` are skipped.  A parameter the
    endpoint rejects (HTTP 400 naming it) is dropped for the rest of the
    run with a one-time warning.  Transport failures are retried
    ``max_attempts`` times with exponential backoff, then logged to the
    ``<out_path>.failed.jsonl`` sidecar and skipped.

    Returns the number of new lines written.
    """
    params = params or GenParams()
    render_prompt(template_id, "")  # validate the template id up front
    out_path = Path(out_path)
    prompt_id = template_id

    done: set[tuple[str, str, str, int]] = set()
    if out_path.exists():
        for answer in load_answers(out_path):
            done.add((answer.query_id, answer.model, answer.prompt_id, answer.sample))

    tasks = [
        (query, sample)
        for query in queries
        for sample in range(params.n_samples)
        if (query.id, model_name, prompt_id, sample) not in done
    ]
    if not tasks:
        return 0

    http = session or requests.Session()
    key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
    headers = {"Authorization": f"Bearer {key}"} if key else {}
    dropped: set[str] = set()
    drop_lock = threading.Lock()
    sink = _AnswerSink(out_path)
    failure_lock = threading.Lock()
    failure_path = out_path.with_name(out_path.name + ".failed.jsonl")

    def record_failure(query: Query, sample: int, error: str) -> None:
        logger.error("giving up on (%s, sample %d): %s", query.id, sample, error)
        with failure_lock:
            with open(failure_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "query_id": query.id,
                    "model": model_name,
                    "prompt_id": prompt_id,
                    "sample": sample,
                    "error": error,
                }) + "\n")

    def drop_param(response_text: str) -> bool:
        for name in _OPTIONAL_BODY_KEYS:
            if name not in dropped and name in response_text:
                with drop_lock:
                    if name in dropped:
                        return True
                    dropped.add(name)
                logger.warning(
                    "endpoint rejects %r; omitting it for the rest of the run", name
                )
                return True
        return False

    def fetch(query: Query, sample: int) -> None:
        prompt = render_prompt(template_id, query.text)
        attempt = 0
        while True:
            body = _request_body(model_name, prompt, params, dropped)
            try:
                response = http.post(endpoint, json=body, headers=headers, timeout=timeout)
                if response.status_code == 400 and drop_param(response.text):
                    continue  # retry immediately without the rejected parameter
                response.raise_for_status()
                payload = response.json()
                content = payload["choices"][0]["message"]["content"]
                text = (content or "").strip()
            except (requests.RequestException, KeyError, IndexError, TypeError, ValueError) as exc:
                attempt += 1
                if attempt >= max_attempts:
                    record_failure(query, sample, str(exc))
                    return
                time.sleep(backoff_base * 2 ** (attempt - 1))
                continue
            sink.write(GeneratedAnswer(query.id, model_name, prompt_id, sample, text))
            return

    try:
        if concurrency > 1:
            with ThreadPoolExecutor(max_workers=concurrency) as executor:
                list(executor.map(lambda t: fetch(*t), tasks))
        else:
            for query, sample in tasks:
                fetch(query, sample)
    finally:
        sink.close()
        if session is None:
            http.close()
    return sink.written
