"""Transcript cleanup by n-best rescoring.

Ill-transcribed recordings come with recognizer n-best lists.  Each
hypothesis is rescored as acoustic log probability plus a weighted
language-model score from a background model biased toward the original
transcript; the best combined score wins.  Well-transcribed records pass
through untouched.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .lm import NGramLM, build_biased_lm, lm_logprob
from .model import CorpusManifest, ForgeError, PipelineConfig, Stage, Utterance
from .text import char_tokens


class CleanupError(ForgeError):
    pass


class NBestParseError(CleanupError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


@dataclass(frozen=True)
class Hypothesis:
    tokens: str
    acoustic_logprob: float

    def __post_init__(self):
        if not self.tokens:
            raise CleanupError("hypothesis tokens must be non-empty")
        if not math.isfinite(self.acoustic_logprob):
            raise CleanupError("acoustic log probability must be finite")


@dataclass(frozen=True)
class NBestList:
    utterance_id: str
    initial_transcript: str
    hypotheses: tuple[Hypothesis, ...]

    def __post_init__(self):
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))
        if not self.hypotheses:
            raise CleanupError(f"{self.utterance_id}: n-best list is empty")


def read_nbest(path: str | os.PathLike, utterance_id: str) -> NBestList:
    """Read an n-best file: the initial transcript on the first line,
    then one tab-separated (acoustic_logprob, tokens) pair per line."""
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        initial = fh.readline().rstrip("\n")
        if not initial:
            raise NBestParseError(path, 1, "missing initial transcript")
        hypotheses = []
        for line_no, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise NBestParseError(path, line_no, "expected <acoustic_logprob><TAB><tokens>")
            try:
                score = float(parts[0])
            except ValueError:
                raise NBestParseError(path, line_no, f"bad acoustic score {parts[0]!r}") from None
            try:
                hypotheses.append(Hypothesis(parts[1], score))
            except CleanupError as exc:
                raise NBestParseError(path, line_no, str(exc)) from None
    if not hypotheses:
        raise NBestParseError(path, 2, "n-best list contains no hypotheses")
    return NBestList(utterance_id, initial, tuple(hypotheses))


@dataclass
class RefineResult:
    chosen_index: int
    chosen: Hypothesis
    changed: bool
    combined_scores: list[float]
    lm_scores: list[float]


def refine_transcript(
    nbest: NBestList,
    background: NGramLM,
    discount_d: float,
    rescore_lambda: float,
) -> RefineResult:
    """Pick the hypothesis maximizing acoustic + lambda * biased LM score.

    Larger lambda leans on the language model; larger discount_d trusts
    the original transcript less.  Ties break toward the higher acoustic
    score, then toward earlier list position.
    """
    biased = build_biased_lm(background, char_tokens(nbest.initial_transcript), discount_d)
    lm_scores = [lm_logprob(biased, char_tokens(h.tokens)) for h in nbest.hypotheses]
    combined = [
        h.acoustic_logprob + rescore_lambda * lm_scores[i]
        for i, h in enumerate(nbest.hypotheses)
    ]
    best = 0
    for i in range(1, len(combined)):
        if combined[i] > combined[best] or (
            combined[i] == combined[best]
            and nbest.hypotheses[i].acoustic_logprob > nbest.hypotheses[best].acoustic_logprob
        ):
            best = i
    chosen = nbest.hypotheses[best]
    changed = char_tokens(chosen.tokens) != char_tokens(nbest.initial_transcript)
    return RefineResult(best, chosen, changed, combined, lm_scores)


@dataclass
class CleanupSummary:
    processed: int = 0
    passed_through: int = 0
    refined: int = 0
    changed: int = 0
    flagged: list = field(default_factory=list)  # (utterance_id, reason)


def batch_cleanup(
    manifest: CorpusManifest,
    nbest_dir: str | os.PathLike,
    background: NGramLM,
    config: PipelineConfig,
) -> tuple[CorpusManifest, CleanupSummary]:
    """Clean every record of a manifest.

    Well-transcribed records keep their text verbatim.  Ill-transcribed
    records need `<id>.nbest` under nbest_dir; records whose list is
    missing or unreadable are excluded from the output and flagged in
    the summary rather than silently passed along.
    """
    nbest_dir = os.fspath(nbest_dir)
    summary = CleanupSummary()
    out: list[Utterance] = []
    for u in manifest:
        summary.processed += 1
        if u.source.well_transcribed:
            out.append(u.with_step("cleanup", Stage.CLEANED))
            summary.passed_through += 1
            continue
        path = os.path.join(nbest_dir, f"{u.id}.nbest")
        if not os.path.exists(path):
            summary.flagged.append((u.id, f"missing n-best file {path}"))
            continue
        try:
            nbest = read_nbest(path, u.id)
            result = refine_transcript(nbest, background, config.lm_discount, config.rescore_lambda)
        except (CleanupError, ForgeError) as exc:
            summary.flagged.append((u.id, str(exc)))
            continue
        summary.refined += 1
        if result.changed:
            summary.changed += 1
        out.append(u.evolve(text=result.chosen.tokens).with_step("cleanup", Stage.CLEANED))
    return CorpusManifest(tuple(out), schema_version=manifest.schema_version), summary
