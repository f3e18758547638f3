"""Tweet text cleaning."""

from __future__ import annotations

import re
from dataclasses import dataclass

URL_RE = re.compile(r"https?://\S+|\bt\.co/\S*|\bwww\.\S+", re.IGNORECASE)
MENTION_RE = re.compile(r"@\w+")
HASHTAG_RE = re.compile(r"#\w+")
# leading retweet marker, possibly repeated and wrapped in non-letters ("RT: RT @x")
LEADING_RT_RE = re.compile(r"^(?:[\W\d_]*RT(?![^\W\d_]))+")
DIGIT_RE = re.compile(r"\d+")
APOSTROPHE_RE = re.compile(r"['’`]")
NON_LETTER_RE = re.compile(r"[\W\d_]+")
SPACE_RE = re.compile(r"\s+")
# terminator run followed by whitespace or end, so "t.co" and "3.5" stay intact
SENTENCE_END_RE = re.compile(r"[.!?]+(?=\s|$)")
HAS_LETTER_RE = re.compile(r"[^\W\d_]")


@dataclass(frozen=True, slots=True)
class CleanedText:
    raw: str
    cleaned: str
    tokens: tuple[str, ...]
    sentences: tuple[tuple[str, ...], ...]


def _clean_string(text: str) -> str:
    text = URL_RE.sub(" ", text)
    text = MENTION_RE.sub(" ", text)
    text = HASHTAG_RE.sub(" ", text)
    text = LEADING_RT_RE.sub(" ", text)
    text = DIGIT_RE.sub("", text)
    text = APOSTROPHE_RE.sub("", text)
    text = NON_LETTER_RE.sub(" ", text)
    if text.strip() and not text.replace(" ", "").isalpha():
        # rare numerics such as "½" match \w without being letters
        text = "".join(c if c.isalpha() else " " for c in text)
    text = SPACE_RE.sub(" ", text).strip()
    # digit/apostrophe deletion can glue a fresh leading "RT" together
    return LEADING_RT_RE.sub("", text).strip()


def split_sentences(raw: str) -> list[str]:
    """Raw-text sentence segments that contain at least one letter."""
    return [seg for seg in SENTENCE_END_RE.split(raw) if HAS_LETTER_RE.search(seg)]


def clean(text: str) -> CleanedText:
    """Strip URLs, mentions, hashtags, a leading RT, digits and symbols.

    Case is preserved. Sentences are segmented on the raw text first and then
    cleaned one by one, so each entry of ``sentences`` is the token list of one
    raw sentence (possibly empty, e.g. a sentence that was only a URL).
    """
    cleaned = _clean_string(text)
    sentences = tuple(tuple(_clean_string(seg).split()) for seg in split_sentences(text))
    return CleanedText(text, cleaned, tuple(cleaned.split()), sentences)


def passthrough(text: str) -> CleanedText:
    """Tokenization without cleaning, used when preprocessing is switched off."""
    sentences = tuple(tuple(seg.split()) for seg in split_sentences(text))
    return CleanedText(text, text, tuple(text.split()), sentences)
