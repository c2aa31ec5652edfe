"""Grapheme-to-phoneme conversion via a pronunciation lexicon.

Text is segmented greedily: at each position the longest surface form
present in the lexicon for the requested dialect wins.  Heteronyms are
resolved by picking the most frequent pronunciation of the matched
surface; ties keep lexicon load order.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

from .model import Dialect, ForgeError, PipelineConfig
from .phonemes import PhonemeSequence, Syllable, unknown_syllable
from .text import is_pause_mark, is_sentence_mark, normalize


class LexiconError(ForgeError):
    pass


class G2PError(ForgeError):
    pass


class UnknownCharacterError(G2PError):
    def __init__(self, char: str, offset: int, dialect: Dialect):
        self.char = char
        self.offset = offset
        self.dialect = dialect
        super().__init__(
            f"no lexicon entry covers {char!r} at offset {offset} for dialect {dialect.value}"
        )


class ToneError(G2PError):
    def __init__(self, syllable: Syllable, dialect: Dialect, inventory):
        self.syllable = syllable
        self.dialect = dialect
        super().__init__(
            f"syllable {syllable.label!r} has tone {syllable.tone} outside the "
            f"{dialect.value} inventory {sorted(inventory)}"
        )


@dataclass(frozen=True)
class LexiconEntry:
    surface: str
    dialect: Dialect
    pronunciation: tuple[Syllable, ...]
    frequency: int

    def __post_init__(self):
        object.__setattr__(self, "surface", normalize(self.surface))
        object.__setattr__(self, "pronunciation", tuple(self.pronunciation))
        if not self.surface:
            raise ValueError("lexicon surface must be non-empty")
        if len(self.pronunciation) != len(self.surface):
            raise ValueError(
                f"entry {self.surface!r}: {len(self.surface)} character(s) but "
                f"{len(self.pronunciation)} syllable(s); one syllable per character required"
            )
        if not isinstance(self.frequency, int) or self.frequency < 0:
            raise ValueError(f"entry {self.surface!r}: frequency must be a non-negative integer")


@dataclass
class Lexicon:
    _entries: dict = field(default_factory=dict)  # (dialect, surface) -> list[LexiconEntry]
    _max_surface: dict = field(default_factory=dict)  # dialect -> longest surface length

    def add(self, entry: LexiconEntry):
        key = (entry.dialect, entry.surface)
        self._entries.setdefault(key, []).append(entry)
        prev = self._max_surface.get(entry.dialect, 0)
        self._max_surface[entry.dialect] = max(prev, len(entry.surface))

    def lookup(self, dialect: Dialect, surface: str) -> list[LexiconEntry]:
        return list(self._entries.get((dialect, surface), ()))

    def best(self, dialect: Dialect, surface: str) -> LexiconEntry | None:
        """Most frequent pronunciation of a surface; load order breaks ties."""
        entries = self._entries.get((dialect, surface))
        if not entries:
            return None
        return max(entries, key=lambda e: e.frequency)  # max keeps the first of equals

    def max_surface_len(self, dialect: Dialect) -> int:
        return self._max_surface.get(dialect, 0)

    def __len__(self) -> int:
        return sum(len(v) for v in self._entries.values())

    def __iter__(self):
        for entries in self._entries.values():
            yield from entries

    def surfaces(self, dialect: Dialect) -> set[str]:
        return {s for (d, s) in self._entries if d is dialect}


def _parse_pronunciation(spec: str, line_no: int, path) -> tuple[Syllable, ...]:
    syllables = []
    for label in spec.split():
        try:
            syllables.append(Syllable.parse(label))
        except ValueError as exc:
            raise LexiconError(f"{path}:{line_no}: {exc}") from None
    return tuple(syllables)


def load_lexicon(path: str | os.PathLike) -> Lexicon:
    """Load a TSV lexicon: surface, dialect, pronunciation, frequency.

    The pronunciation column holds space-separated syllable labels, one
    per character of the surface.  Lines starting with '#' and blank
    lines are skipped.
    """
    path = os.fspath(path)
    lexicon = Lexicon()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise LexiconError(f"{path}:{line_no}: expected 4 tab-separated fields, got {len(parts)}")
            surface, dialect_label, pron_spec, freq_spec = parts
            try:
                dialect = Dialect.parse(dialect_label.strip())
            except ValueError as exc:
                raise LexiconError(f"{path}:{line_no}: {exc}") from None
            pronunciation = _parse_pronunciation(pron_spec.strip(), line_no, path)
            try:
                frequency = int(freq_spec.strip())
            except ValueError:
                raise LexiconError(f"{path}:{line_no}: bad frequency {freq_spec.strip()!r}") from None
            try:
                entry = LexiconEntry(surface.strip(), dialect, pronunciation, frequency)
            except ValueError as exc:
                raise LexiconError(f"{path}:{line_no}: {exc}") from None
            lexicon.add(entry)
    return lexicon


class TokenKind(enum.Enum):
    WORD = "word"
    PAUSE = "pause"
    BREAK = "break"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    offset: int


def segment_text(
    text: str,
    dialect: Dialect,
    lexicon: Lexicon,
    strict: bool = True,
) -> list[Token]:
    """Split text into lexicon surfaces and punctuation tokens.

    Greedy longest match: at each position try the longest candidate the
    lexicon could possibly hold for this dialect and shrink.  Whitespace
    is skipped.  A character nothing covers raises in strict mode and
    becomes an UNKNOWN token otherwise.
    """
    text = normalize(text)
    tokens: list[Token] = []
    longest = lexicon.max_surface_len(dialect)
    pos = 0
    while pos < len(text):
        ch = text[pos]
        if ch.isspace():
            pos += 1
            continue
        if is_pause_mark(ch):
            tokens.append(Token(TokenKind.PAUSE, ch, pos))
            pos += 1
            continue
        if is_sentence_mark(ch):
            tokens.append(Token(TokenKind.BREAK, ch, pos))
            pos += 1
            continue
        matched = False
        for length in range(min(longest, len(text) - pos), 0, -1):
            candidate = text[pos : pos + length]
            if lexicon.lookup(dialect, candidate):
                tokens.append(Token(TokenKind.WORD, candidate, pos))
                pos += length
                matched = True
                break
        if not matched:
            if strict:
                raise UnknownCharacterError(ch, pos, dialect)
            tokens.append(Token(TokenKind.UNKNOWN, ch, pos))
            pos += 1
    return tokens


def g2p_convert(
    text: str,
    dialect: Dialect,
    lexicon: Lexicon,
    config: PipelineConfig | None = None,
    strict: bool = True,
) -> PhonemeSequence:
    """Convert text to syllables plus pause positions.

    Commas turn into pauses between syllables; sentence-final marks end
    the utterance without adding a pause; every tone must belong to the
    dialect's inventory.  In lenient mode unknown characters map to the
    sentinel syllable, which is exempt from tone checks.
    """
    config = config or PipelineConfig()
    inventory = config.tones_for(dialect)
    syllables: list[Syllable] = []
    pauses: set[int] = set()
    for token in segment_text(text, dialect, lexicon, strict=strict):
        if token.kind is TokenKind.PAUSE:
            if syllables:
                pauses.add(len(syllables))
            continue
        if token.kind is TokenKind.BREAK:
            continue
        if token.kind is TokenKind.UNKNOWN:
            syllables.extend(unknown_syllable() for _ in token.text)
            continue
        entry = lexicon.best(dialect, token.text)
        for syl in entry.pronunciation:
            if not syl.is_unknown and syl.tone not in inventory:
                raise ToneError(syl, dialect, inventory)
            syllables.append(syl)
    pauses = {p for p in pauses if 0 < p < len(syllables)}
    return PhonemeSequence(tuple(syllables), frozenset(pauses))
