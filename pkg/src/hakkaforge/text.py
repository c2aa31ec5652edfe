"""Text conventions shared by every pipeline stage.

All stages normalize text to NFC before touching it, so equality and
character counts are stable no matter which source a string came from.
"""

import unicodedata

# Commas become fixed-length pauses during synthesis.
PAUSE_MARKS = frozenset({",", "，"})

# Marks that end a sentence.  They carry no pause of their own.
SENTENCE_MARKS = frozenset({"。", "？", "！", "."})

PUNCTUATION = PAUSE_MARKS | SENTENCE_MARKS

# Canonical pause glyph used when joining segment texts.
PAUSE_GLYPH = "，"


def normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def is_pause_mark(ch: str) -> bool:
    return ch in PAUSE_MARKS


def is_sentence_mark(ch: str) -> bool:
    return ch in SENTENCE_MARKS


def is_punctuation(ch: str) -> bool:
    if ch in PUNCTUATION:
        return True
    return unicodedata.category(ch).startswith("P")


def char_tokens(text: str) -> list[str]:
    """Characters of `text` excluding whitespace, in order.

    This is the tokenization used for character language models:
    punctuation is kept (a comma is a real event in a transcript),
    whitespace never is.
    """
    return [ch for ch in normalize(text) if not ch.isspace()]


def countable_chars(text: str) -> int:
    """Number of content characters: punctuation and whitespace excluded."""
    n = 0
    for ch in normalize(text):
        if ch.isspace() or is_punctuation(ch):
            continue
        n += 1
    return n
