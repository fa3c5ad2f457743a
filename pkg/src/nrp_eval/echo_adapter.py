"""Built-in echo adapter: a deterministic ``nrp-scorer/1`` reference peer.

Scores are a pure function of the request (distinct shared tokens over
1 + text length), so sessions are reproducible bit-for-bit.  Run with
``python -m nrp_eval.echo_adapter``.
"""

from __future__ import annotations

import json
import sys

from .protocol import PROTOCOL_NAME
from .scorers import echo_score


def serve(stdin=None, stdout=None, name: str = "echo") -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(obj) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    emit({"protocol": PROTOCOL_NAME, "name": name})
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            emit({"error": f"invalid JSON request: {exc}"})
            continue
        if not isinstance(request, dict) or "id" not in request:
            emit({"error": f"request without an id: {line.strip()!r}"})
            continue
        item_id = request["id"]
        query = request.get("query")
        text = request.get("text")
        if not isinstance(query, str) or not isinstance(text, str):
            emit({"id": item_id, "error": "request needs string 'query' and 'text'"})
            continue
        emit({"id": item_id, "score": echo_score(query, text)})


def main() -> None:
    serve()


if __name__ == "__main__":
    main()
