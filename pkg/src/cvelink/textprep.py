"""Minimal text cleaning applied to every string before embedding.

The pipeline lowercases, removes URLs and bracketed citation markers,
drops characters outside a small allow-list, and collapses whitespace.
It deliberately stops there: no stemming, no stop-word removal, no
other lossy rewriting, because transformer encoders get signal from
function words and inflection.

The pass list is applied repeatedly until the text stops changing, so
``normalize`` is idempotent even when one removal exposes new matches
(deleting a stray symbol inside ``w@ww.example.com`` leaves a token the
URL rule must then take out).
"""

from __future__ import annotations

import re

# A URL token starts at a whitespace boundary with a scheme ("https://",
# "ftp://", ...) or a "www." prefix and runs to the next whitespace.
URL_PATTERN = re.compile(
    r"(?:(?<=\s)|^)(?:[a-z][a-z0-9+.\-]*://|www\.)\S+", re.IGNORECASE
)

# Bracketed citation markers: at least one digit, digits/commas/spaces only.
CITATION_PATTERN = re.compile(r"\[\s*\d[\d,\s]*\]")

# Punctuation that survives cleaning, besides letters, digits, whitespace.
ALLOWED_PUNCTUATION = frozenset(".,;:!?'\"-()/")

_WHITESPACE = re.compile(r"\s+")


def _clean_pass(text: str) -> str:
    text = text.lower()
    text = URL_PATTERN.sub(" ", text)
    text = CITATION_PATTERN.sub(" ", text)
    text = "".join(
        ch for ch in text
        if ch.isalnum() or ch in ALLOWED_PUNCTUATION or ch.isspace()
    )
    return _WHITESPACE.sub(" ", text).strip()


def normalize(raw: str) -> str:
    """Return the cleaned form of ``raw``.

    Guarantees on the result: it is lowercase, contains no substring
    matching ``URL_PATTERN`` or ``CITATION_PATTERN``, contains only
    letters, digits, single spaces, and ``ALLOWED_PUNCTUATION``, and
    feeding it back through ``normalize`` returns it unchanged.
    Alphanumeric words that contain no disallowed characters and are
    not part of a URL or citation are preserved in order.
    """
    text = raw
    while True:
        cleaned = _clean_pass(text)
        if cleaned == text:
            return cleaned
        text = cleaned
