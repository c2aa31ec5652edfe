"""Syllable-level phoneme sequences.

A pronunciation is a sequence of romanized syllables, each written as
lowercase letters followed by a tone digit ("ho3", "ngiong11" is not a
thing: tones are a single small integer, multi-digit tones are still one
int).  Pauses live between syllables as indices into the sequence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_SYLLABLE_RE = re.compile(r"^([a-z]+)([0-9]+)$")

# Sentinel used in lenient mode for characters absent from the lexicon.
# Tone 0 is reserved: it never appears in a dialect tone inventory and
# sentinel syllables are exempt from tone validation.
UNKNOWN_SYLLABLE_LABEL = "unk0"


@dataclass(frozen=True)
class Syllable:
    onset_rime: str
    tone: int

    def __post_init__(self):
        if not self.onset_rime or not re.fullmatch(r"[a-z]+", self.onset_rime):
            raise ValueError(f"bad onset/rime {self.onset_rime!r}: lowercase ascii letters required")
        if not isinstance(self.tone, int) or self.tone < 0:
            raise ValueError(f"bad tone {self.tone!r}: non-negative integer required")

    @property
    def label(self) -> str:
        return f"{self.onset_rime}{self.tone}"

    @property
    def is_unknown(self) -> bool:
        return self.label == UNKNOWN_SYLLABLE_LABEL

    @classmethod
    def parse(cls, label: str) -> "Syllable":
        m = _SYLLABLE_RE.match(label)
        if not m:
            raise ValueError(f"bad syllable label {label!r}: expected letters followed by tone digits")
        return cls(m.group(1), int(m.group(2)))


def unknown_syllable() -> Syllable:
    return Syllable.parse(UNKNOWN_SYLLABLE_LABEL)


@dataclass(frozen=True)
class PhonemeSequence:
    """Syllables plus the pause positions between them.

    A pause position p means "pause before syllables[p]", so valid
    positions are strictly interior: 0 < p < len(syllables).
    """

    syllables: tuple[Syllable, ...]
    pauses: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "syllables", tuple(self.syllables))
        object.__setattr__(self, "pauses", frozenset(self.pauses))
        for p in self.pauses:
            if not isinstance(p, int) or not 0 < p < len(self.syllables):
                raise ValueError(f"pause position {p!r} outside (0, {len(self.syllables)})")

    def __len__(self) -> int:
        return len(self.syllables)

    def labels(self) -> list[str]:
        return [s.label for s in self.syllables]

    def render(self) -> str:
        """Human/CLI form: labels separated by spaces, pauses as ","."""
        parts = []
        for i, syl in enumerate(self.syllables):
            if i in self.pauses:
                parts.append(",")
            parts.append(syl.label)
        return " ".join(parts)

    def to_json(self) -> dict:
        return {"syllables": self.labels(), "pauses": sorted(self.pauses)}

    @classmethod
    def from_json(cls, obj: dict) -> "PhonemeSequence":
        if not isinstance(obj, dict) or "syllables" not in obj:
            raise ValueError(f"bad phoneme sequence object: {obj!r}")
        syllables = tuple(Syllable.parse(lbl) for lbl in obj["syllables"])
        pauses = frozenset(int(p) for p in obj.get("pauses", []))
        return cls(syllables, pauses)


def empty_sequence() -> PhonemeSequence:
    return PhonemeSequence((), frozenset())


def join_with_pause(a: PhonemeSequence, b: PhonemeSequence) -> PhonemeSequence:
    """Concatenate two sequences with a pause at the junction.

    The junction pause is dropped when either side is empty, because a
    pause position must be strictly interior.
    """
    offset = len(a.syllables)
    pauses = set(a.pauses)
    pauses.update(p + offset for p in b.pauses)
    if a.syllables and b.syllables:
        pauses.add(offset)
    return PhonemeSequence(a.syllables + b.syllables, frozenset(pauses))
