"""Domain types and the JSONL manifest format shared by every stage.

A manifest is a UTF-8 JSONL file, one utterance per line, with a comment
header carrying the schema version.  Records are immutable value objects;
stage functions build new manifests rather than mutating old ones.
"""

from __future__ import annotations

import enum
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

from . import tool_version
from .phonemes import PhonemeSequence
from .text import normalize

SCHEMA_VERSION = 1

_HEADER_PREFIX = "# hakkaforge manifest"


class ForgeError(Exception):
    """Base class for errors raised by this package."""


class ManifestError(ForgeError):
    pass


class ConfigError(ForgeError):
    pass


class Dialect(enum.Enum):
    SIXIAN = "Sixian"
    HAILU = "Hailu"
    DAPU = "Dapu"
    RAOPING = "Raoping"
    ZHAOAN = "Zhaoan"
    NANSIXIAN = "Nansixian"

    @property
    def display_name(self) -> str:
        return f"{self.value} ({_DIALECT_HAN[self]})"

    @classmethod
    def parse(cls, label: str) -> "Dialect":
        try:
            return cls(label)
        except ValueError:
            known = ", ".join(d.value for d in cls)
            raise ValueError(f"unknown dialect {label!r} (known: {known})") from None


_DIALECT_HAN = {
    Dialect.SIXIAN: "四縣",
    Dialect.HAILU: "海陸",
    Dialect.DAPU: "大埔",
    Dialect.RAOPING: "饒平",
    Dialect.ZHAOAN: "詔安",
    Dialect.NANSIXIAN: "南四縣",
}

DIALECT_ORDER = tuple(Dialect)


class TranscriptionQuality(enum.Enum):
    WELL = "well"
    ILL = "ill"


# Default transcription quality by source kind.  Dictionary and exam
# recordings come with verified scripts; radio programs are transcribed
# loosely and need cleanup.  Unlisted kinds are treated as ill: it is
# cheaper to re-verify a good transcript than to train on a bad one.
_DEFAULT_QUALITY = {
    "DICT": TranscriptionQuality.WELL,
    "EXAM": TranscriptionQuality.WELL,
    "RADIO": TranscriptionQuality.ILL,
}

KNOWN_SOURCE_KINDS = ("DICT", "EXAM", "RADIO")


@dataclass(frozen=True)
class SourceKind:
    name: str
    quality: TranscriptionQuality

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise ValueError("source kind name must be non-empty")

    @property
    def well_transcribed(self) -> bool:
        return self.quality is TranscriptionQuality.WELL

    @classmethod
    def of(cls, name: str, quality: str | TranscriptionQuality | None = None) -> "SourceKind":
        name = name.strip()
        if quality is None:
            q = _DEFAULT_QUALITY.get(name.upper(), TranscriptionQuality.ILL)
        elif isinstance(quality, TranscriptionQuality):
            q = quality
        else:
            try:
                q = TranscriptionQuality(quality)
            except ValueError:
                raise ValueError(f"unknown transcription quality {quality!r} (use 'well' or 'ill')") from None
        if name.upper() in _DEFAULT_QUALITY:
            name = name.upper()
        return cls(name, q)

    def to_json(self) -> dict:
        return {"kind": self.name, "quality": self.quality.value}

    @classmethod
    def from_json(cls, obj) -> "SourceKind":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValueError(f"bad source object: {obj!r}")
        return cls.of(str(obj["kind"]), obj.get("quality"))


DICT = SourceKind.of("DICT")
EXAM = SourceKind.of("EXAM")
RADIO = SourceKind.of("RADIO")


class Stage(enum.Enum):
    SCRAPED = "Scraped"
    CLEANED = "Cleaned"
    ALIGNED = "Aligned"
    SEGMENTED = "Segmented"
    FINAL = "Final"

    @property
    def rank(self) -> int:
        return _STAGE_RANK[self]

    @classmethod
    def parse(cls, label: str) -> "Stage":
        try:
            return cls(label)
        except ValueError:
            known = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown stage {label!r} (known: {known})") from None


_STAGE_RANK = {s: i for i, s in enumerate(Stage)}


@dataclass(frozen=True)
class ProvenanceEntry:
    step: str
    timestamp: str
    tool: str

    def to_json(self) -> dict:
        return {"step": self.step, "timestamp": self.timestamp, "tool": self.tool}

    @classmethod
    def from_json(cls, obj) -> "ProvenanceEntry":
        if not isinstance(obj, dict):
            raise ValueError(f"bad provenance entry: {obj!r}")
        try:
            return cls(str(obj["step"]), str(obj["timestamp"]), str(obj["tool"]))
        except KeyError as exc:
            raise ValueError(f"provenance entry missing {exc}") from None

    @classmethod
    def now(cls, step: str) -> "ProvenanceEntry":
        ts = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return cls(step, ts, tool_version())


# Utterance times are stored with microsecond granularity.  Six decimals
# round-trip exactly through the %.6f serialization below and satisfy the
# manifest requirement of at least three fractional digits.
def quantize_seconds(value: float) -> float:
    return round(float(value), 6)


def format_seconds(value: float) -> str:
    return f"{value:.6f}"


_REQUIRED_FIELDS = ("id", "dialect", "source", "audio_path", "sample_rate", "duration_s", "text", "stage")
_KNOWN_FIELDS = set(_REQUIRED_FIELDS) | {"phonemes", "speaker_id", "provenance"}


@dataclass(frozen=True)
class Utterance:
    id: str
    dialect: Dialect
    source: SourceKind
    audio_path: str
    sample_rate: int
    duration_s: float
    text: str
    stage: Stage
    phonemes: PhonemeSequence | None = None
    speaker_id: str | None = None
    provenance: tuple[ProvenanceEntry, ...] = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id or not self.id.strip():
            raise ValueError("utterance id must be non-empty")
        if not isinstance(self.sample_rate, int) or self.sample_rate <= 0:
            raise ValueError(f"utterance {self.id}: sample_rate must be a positive integer")
        dur = float(self.duration_s)
        if not math.isfinite(dur) or dur < 0:
            raise ValueError(f"utterance {self.id}: duration_s must be finite and non-negative")
        object.__setattr__(self, "duration_s", quantize_seconds(dur))
        object.__setattr__(self, "text", normalize(self.text))
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def evolve(self, **changes) -> "Utterance":
        return replace(self, **changes)

    def with_step(self, step: str, stage: Stage | None = None) -> "Utterance":
        """Append a provenance entry, replacing the last one if it is the
        same step so re-running a stage stays idempotent."""
        prov = list(self.provenance)
        if prov and prov[-1].step == step:
            prov.pop()
        prov.append(ProvenanceEntry.now(step))
        return self.evolve(provenance=tuple(prov), stage=self.stage if stage is None else stage)

    def to_json(self) -> dict:
        obj = {
            "id": self.id,
            "dialect": self.dialect.value,
            "source": self.source.to_json(),
            "audio_path": self.audio_path,
            "sample_rate": self.sample_rate,
            "duration_s": self.duration_s,
            "text": self.text,
            "stage": self.stage.value,
        }
        if self.phonemes is not None:
            obj["phonemes"] = self.phonemes.to_json()
        if self.speaker_id is not None:
            obj["speaker_id"] = self.speaker_id
        obj["provenance"] = [p.to_json() for p in self.provenance]
        for key, value in self.extra.items():
            if key not in obj:
                obj[key] = value
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Utterance":
        if not isinstance(obj, dict):
            raise ValueError("utterance record must be a JSON object")
        missing = [k for k in _REQUIRED_FIELDS if k not in obj]
        if missing:
            raise ValueError(f"utterance record missing fields: {', '.join(missing)}")
        phonemes = None
        if obj.get("phonemes") is not None:
            phonemes = PhonemeSequence.from_json(obj["phonemes"])
        speaker = obj.get("speaker_id")
        provenance = tuple(ProvenanceEntry.from_json(p) for p in obj.get("provenance", []))
        extra = {k: v for k, v in obj.items() if k not in _KNOWN_FIELDS}
        sample_rate = obj["sample_rate"]
        if isinstance(sample_rate, float) and sample_rate.is_integer():
            sample_rate = int(sample_rate)
        return cls(
            id=str(obj["id"]),
            dialect=Dialect.parse(str(obj["dialect"])),
            source=SourceKind.from_json(obj["source"]),
            audio_path=str(obj["audio_path"]),
            sample_rate=sample_rate,
            duration_s=float(obj["duration_s"]),
            text=str(obj["text"]),
            stage=Stage.parse(str(obj["stage"])),
            phonemes=phonemes,
            speaker_id=None if speaker is None else str(speaker),
            provenance=provenance,
            extra=extra,
        )

    def to_line(self) -> str:
        # json.dumps prints floats with repr, which can drop to one
        # fractional digit ("2.0").  Times must keep their fractional
        # digits, so duration is spliced in with a fixed format.
        obj = self.to_json()
        obj["duration_s"] = "\x00duration\x00"
        line = json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))
        # the encoder escapes the NUL guards, so match the escaped form
        return line.replace('"\\u0000duration\\u0000"', format_seconds(self.duration_s), 1)


@dataclass(frozen=True)
class CorpusManifest:
    records: tuple[Utterance, ...]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> list[str]:
        return [u.id for u in self.records]


@dataclass(frozen=True)
class Violation:
    record_id: str | None
    kind: str
    message: str

    def __str__(self) -> str:
        where = self.record_id if self.record_id else "<manifest>"
        return f"{where}: {self.kind}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, record_id: str | None, kind: str, message: str):
        self.violations.append(Violation(record_id, kind, message))

    def render(self) -> str:
        if self.ok:
            return "manifest ok"
        return "\n".join(str(v) for v in self.violations)


class ManifestParseError(ManifestError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class ManifestValidationError(ManifestError):
    def __init__(self, report: ValidationReport):
        self.report = report
        ids = sorted({v.record_id for v in report.violations if v.record_id})
        head = f"manifest failed validation ({len(report.violations)} problem(s)"
        head += f"; records: {', '.join(ids)})" if ids else ")"
        super().__init__(head + "\n" + report.render())


def validate_manifest(
    manifest: CorpusManifest,
    audio_root: str | os.PathLike | None = None,
    strict_audio: bool = False,
) -> ValidationReport:
    """Check manifest-level invariants.

    Field-level validity is enforced when records are constructed; this
    checks the constraints that only make sense across a whole manifest:
    unique ids, stage-consistent durations and phonemes, and (in strict
    mode) that every referenced audio file exists.
    """
    report = ValidationReport()
    seen: set[str] = set()
    for u in manifest:
        if u.id in seen:
            report.add(u.id, "duplicate-id", "utterance id appears more than once")
        seen.add(u.id)
        if u.stage.rank > Stage.SCRAPED.rank and not u.duration_s > 0:
            report.add(u.id, "non-positive-duration", f"stage {u.stage.value} requires duration_s > 0")
        if u.stage.rank >= Stage.ALIGNED.rank and u.phonemes is None:
            report.add(u.id, "missing-phonemes", f"stage {u.stage.value} requires phonemes")
        if u.stage.rank < Stage.ALIGNED.rank and u.phonemes is not None:
            report.add(u.id, "unexpected-phonemes", f"stage {u.stage.value} must not carry phonemes")
        if strict_audio:
            path = u.audio_path
            if audio_root is not None and not os.path.isabs(path):
                path = os.path.join(os.fspath(audio_root), path)
            if not os.path.exists(path):
                report.add(u.id, "missing-audio", f"audio file not found: {path}")
    return report


def write_manifest(manifest: CorpusManifest, path: str | os.PathLike):
    """Validate and atomically write a manifest."""
    report = validate_manifest(manifest)
    if not report.ok:
        raise ManifestValidationError(report)
    path = os.fspath(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(f"{_HEADER_PREFIX} schema_version={manifest.schema_version}\n")
            for u in manifest:
                fh.write(u.to_line())
                fh.write("\n")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def read_manifest(path: str | os.PathLike) -> CorpusManifest:
    """Read a manifest, reporting the line number of anything malformed."""
    path = os.fspath(path)
    records: list[Utterance] = []
    schema_version = SCHEMA_VERSION
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith(_HEADER_PREFIX):
                    for part in line.split():
                        if part.startswith("schema_version="):
                            try:
                                schema_version = int(part.split("=", 1)[1])
                            except ValueError:
                                raise ManifestParseError(path, line_no, f"bad header: {line!r}") from None
                            if schema_version > SCHEMA_VERSION:
                                raise ManifestParseError(
                                    path, line_no,
                                    f"schema_version {schema_version} is newer than supported ({SCHEMA_VERSION})",
                                )
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            try:
                records.append(Utterance.from_json(obj))
            except ValueError as exc:
                raise ManifestParseError(path, line_no, str(exc)) from None
    return CorpusManifest(tuple(records), schema_version=schema_version)


_DEFAULT_TONES = frozenset(range(1, 9))


@dataclass(frozen=True)
class PipelineConfig:
    """Numeric knobs shared across stages.

    Invariants: the junction pause inserted by concatenation must equal
    twice the pad kept on each trimmed segment edge, so concatenating two
    segments reproduces the pause budget exactly; the LM discount must
    sit in [0, 1).
    """

    silence_split_threshold_s: float = 0.05
    silence_pad_s: float = 0.025
    concat_pause_s: float = 0.05
    lm_order: int = 3
    lm_discount: float = 0.5
    rescore_lambda: float = 1.0
    tone_inventories: dict = field(default_factory=lambda: {d: _DEFAULT_TONES for d in Dialect})

    def __post_init__(self):
        inv = {}
        for dialect, tones in self.tone_inventories.items():
            d = dialect if isinstance(dialect, Dialect) else Dialect.parse(str(dialect))
            inv[d] = frozenset(int(t) for t in tones)
        for d in Dialect:
            inv.setdefault(d, _DEFAULT_TONES)
        object.__setattr__(self, "tone_inventories", inv)
        self.validate()

    def validate(self):
        if not self.silence_split_threshold_s > 0:
            raise ConfigError("silence_split_threshold_s must be > 0")
        if self.silence_pad_s < 0:
            raise ConfigError("silence_pad_s must be >= 0")
        if abs(2.0 * self.silence_pad_s - self.concat_pause_s) > 1e-9:
            raise ConfigError(
                f"concat_pause_s ({self.concat_pause_s}) must equal 2 * silence_pad_s ({self.silence_pad_s})"
            )
        if 2.0 * self.silence_pad_s > self.silence_split_threshold_s + 1e-12:
            raise ConfigError("2 * silence_pad_s must not exceed silence_split_threshold_s")
        if not isinstance(self.lm_order, int) or self.lm_order < 1:
            raise ConfigError("lm_order must be an integer >= 1")
        if not 0.0 <= self.lm_discount < 1.0:
            raise ConfigError("lm_discount must satisfy 0 <= D < 1")
        if self.rescore_lambda < 0:
            raise ConfigError("rescore_lambda must be >= 0")

    def tones_for(self, dialect: Dialect) -> frozenset:
        return self.tone_inventories.get(dialect, _DEFAULT_TONES)
