"""Generated answers and their JSONL persistence.

``answers.jsonl`` carries one object per line with the fields ``query_id``,
``model``, ``prompt_id``, ``sample`` and ``text``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .corpus import CorpusError
from .scorers import ANSWER_ID_PREFIX


@dataclass(frozen=True)
class GeneratedAnswer:
    query_id: str
    model: str
    prompt_id: str
    sample: int
    text: str

    def item_id(self) -> str:
        return answer_item_id(self.model, self.query_id, self.sample)


def answer_item_id(model: str, query_id: str, sample: int) -> str:
    """Pool item id of an injected answer: ``ANSWER::<model>::<query>::<sample>``."""
    return f"{ANSWER_ID_PREFIX}{model}::{query_id}::{sample}"


def answer_to_json(answer: GeneratedAnswer) -> str:
    return json.dumps(
        {
            "query_id": answer.query_id,
            "model": answer.model,
            "prompt_id": answer.prompt_id,
            "sample": answer.sample,
            "text": answer.text,
        },
        ensure_ascii=False,
    )


def parse_answers(lines: Iterable[str]) -> list[GeneratedAnswer]:
    answers = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"answers line {lineno}: invalid JSON ({exc})") from None
        try:
            answers.append(
                GeneratedAnswer(
                    query_id=str(obj["query_id"]),
                    model=str(obj["model"]),
                    prompt_id=str(obj["prompt_id"]),
                    sample=int(obj["sample"]),
                    text=str(obj["text"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"answers line {lineno}: {exc}") from None
    return answers


def load_answers(path: str) -> list[GeneratedAnswer]:
    with open(path, encoding="utf-8") as fh:
        return parse_answers(fh)


def save_answers(answers: Iterable[GeneratedAnswer], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for answer in answers:
            fh.write(answer_to_json(answer) + "\n")
