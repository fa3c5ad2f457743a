"""Rule-based visible-text extraction from HTML bytes.

Script, style and comment content is removed, remaining tags are stripped,
character references are decoded, and whitespace runs collapse to single
spaces.  Malformed markup degrades to best-effort tag stripping; invalid
byte sequences are replaced.
"""

from __future__ import annotations

import re
from html.parser import HTMLParser

_INVISIBLE = {"script", "style"}
_WHITESPACE = re.compile(r"\s+")


class _VisibleText(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.chunks: list[str] = []
        self._hidden = 0

    def handle_starttag(self, tag, attrs):
        if tag in _INVISIBLE:
            self._hidden += 1

    def handle_endtag(self, tag):
        if tag in _INVISIBLE and self._hidden:
            self._hidden -= 1

    def handle_data(self, data):
        if not self._hidden:
            self.chunks.append(data)


def extract_text(html: bytes | str) -> str:
    """Return the visible plain text of an HTML fragment or page."""
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    parser = _VisibleText()
    try:
        parser.feed(html)
        parser.close()
    except Exception:
        # html.parser almost never raises; keep whatever was collected
        pass
    return _WHITESPACE.sub(" ", " ".join(parser.chunks)).strip()
