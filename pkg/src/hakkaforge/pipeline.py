"""Stage orchestration: wiring the modules into one corpus pipeline.

Stage order is ingest, cleanup, align, segment, concat, g2p, stats,
emit.  Each stage reads the newest manifest produced before it and
writes its own, so any contiguous suffix of stages can be re-run.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from . import align as align_mod
from . import audio as audio_mod
from . import g2p as g2p_mod
from .cleanup import batch_cleanup
from .ingest import ingest_source, load_source_config
from .lm import train_ngram
from .model import (
    ConfigError,
    CorpusManifest,
    ForgeError,
    PipelineConfig,
    Stage,
    Utterance,
    read_manifest,
    validate_manifest,
    write_manifest,
)
from .phonemes import PhonemeSequence
from .stats import compute_stats, render_csv, render_text
from .text import char_tokens

log = logging.getLogger("forge")

STAGES = ("ingest", "cleanup", "align", "segment", "concat", "g2p", "stats", "emit")

# stats audits the manifest without producing a new one.
MANIFEST_FILES = {
    "ingest": "scraped.jsonl",
    "cleanup": "cleaned.jsonl",
    "align": "aligned.jsonl",
    "segment": "segmented.jsonl",
    "concat": "concatenated.jsonl",
    "g2p": "phonemized.jsonl",
    "emit": "final.jsonl",
}


class PipelineError(ForgeError):
    pass


class StageOrderError(PipelineError):
    pass


@dataclass
class ForgeConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    out_dir: str = "out"
    lexicon_path: str | None = None
    g2p_strict: bool = True
    nbest_dir: str | None = None
    background_corpus: str | None = None
    scores_dir: str | None = None
    frame_period_s: float = 0.010
    energy_floor_db: float = -40.0
    segment_energy_fallback: bool = False
    sources: tuple = ()


def _resolve(base: str, path):
    if path is None:
        return None
    path = os.fspath(path)
    return path if os.path.isabs(path) else os.path.join(base, path)


def load_forge_config(path: str | os.PathLike) -> ForgeConfig:
    """Load pipeline configuration; relative paths resolve against the
    config file's directory."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))

    model = data.get("model", {})
    tones = data.get("tones", {})
    try:
        pipeline = PipelineConfig(
            silence_split_threshold_s=float(model.get("silence_split_threshold_s", 0.05)),
            silence_pad_s=float(model.get("silence_pad_s", 0.025)),
            concat_pause_s=float(model.get("concat_pause_s", 0.05)),
            lm_order=int(model.get("lm_order", 3)),
            lm_discount=float(model.get("lm_discount", 0.5)),
            rescore_lambda=float(model.get("rescore_lambda", 1.0)),
            tone_inventories=dict(tones),
        )
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    section = data.get("pipeline", {})
    g2p = data.get("g2p", {})
    cleanup = data.get("cleanup", {})
    align = data.get("align", {})
    segment = data.get("segment", {})
    ingest = data.get("ingest", {})
    return ForgeConfig(
        pipeline=pipeline,
        out_dir=_resolve(base, section.get("out_dir", "out")),
        lexicon_path=_resolve(base, g2p.get("lexicon")),
        g2p_strict=bool(g2p.get("strict", True)),
        nbest_dir=_resolve(base, cleanup.get("nbest_dir")),
        background_corpus=_resolve(base, cleanup.get("background_corpus")),
        scores_dir=_resolve(base, align.get("scores_dir")),
        frame_period_s=float(align.get("frame_period_s", 0.010)),
        energy_floor_db=float(align.get("energy_floor_db", -40.0)),
        segment_energy_fallback=bool(segment.get("energy_fallback", False)),
        sources=tuple(_resolve(base, p) for p in ingest.get("sources", ())),
    )


@dataclass
class StageReport:
    name: str
    n_in: int = 0
    n_out: int = 0
    seconds: float = 0.0
    warnings: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


@dataclass
class RunResult:
    reports: list
    manifest: CorpusManifest | None
    manifest_path: str | None


class Workspace:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)

    def path(self, *parts) -> str:
        return os.path.join(self.out_dir, *parts)

    def dir(self, *parts) -> str:
        p = self.path(*parts)
        os.makedirs(p, exist_ok=True)
        return p


def _require_lexicon(cfg: ForgeConfig):
    if not cfg.lexicon_path:
        raise ConfigError("g2p.lexicon must be set in the config for this stage")
    return g2p_mod.load_lexicon(cfg.lexicon_path)


def stage_ingest(_manifest, cfg: ForgeConfig, ws: Workspace, report: StageReport) -> CorpusManifest:
    if not cfg.sources:
        raise ConfigError("ingest.sources must list at least one source config")
    records: list[Utterance] = []
    for source_path in cfg.sources:
        source = load_source_config(source_path)
        utts, crawl_report, mat_report = ingest_source(source)
        records.extend(utts)
        for url, reason in crawl_report.skipped + mat_report.skipped:
            report.warnings.append(f"{source.name}: {url}: {reason}")
        report.info[source.name] = {
            "pages": crawl_report.pages_processed,
            "network_fetches": crawl_report.network_fetches + mat_report.downloaded,
            "records": len(utts),
        }
    return CorpusManifest(tuple(records))


def _background_model(manifest: CorpusManifest, cfg: ForgeConfig):
    sequences = []
    if cfg.background_corpus:
        with open(cfg.background_corpus, encoding="utf-8") as fh:
            sequences = [char_tokens(line) for line in fh if line.strip()]
    else:
        sequences = [
            char_tokens(u.text) for u in manifest if u.source.well_transcribed and u.text.strip()
        ]
    if not any(sequences):
        raise PipelineError(
            "cleanup needs a background corpus: set cleanup.background_corpus or "
            "include well-transcribed records"
        )
    return train_ngram(sequences, cfg.pipeline.lm_order, cfg.pipeline.lm_discount)


def stage_cleanup(manifest, cfg: ForgeConfig, ws: Workspace, report: StageReport) -> CorpusManifest:
    if any(not u.source.well_transcribed for u in manifest) and not cfg.nbest_dir:
        raise ConfigError("cleanup.nbest_dir must be set when ill-transcribed records exist")
    background = _background_model(manifest, cfg)
    out, summary = batch_cleanup(manifest, cfg.nbest_dir or ws.path("nbest"), background, cfg.pipeline)
    for utt_id, reason in summary.flagged:
        report.warnings.append(f"{utt_id}: {reason}")
    report.info.update(
        refined=summary.refined,
        changed=summary.changed,
        passed_through=summary.passed_through,
        flagged=len(summary.flagged),
    )
    return out


def stage_align(manifest, cfg: ForgeConfig, ws: Workspace, report: StageReport) -> CorpusManifest:
    lexicon = _require_lexicon(cfg)
    ali_dir = ws.dir("alignments")
    out = []
    for u in manifest:
        try:
            phonemes = g2p_mod.g2p_convert(u.text, u.dialect, lexicon, cfg.pipeline, strict=cfg.g2p_strict)
            labels = phonemes.labels()
            score_path = (
                os.path.join(cfg.scores_dir, f"{u.id}.scores") if cfg.scores_dir else None
            )
            if score_path and os.path.exists(score_path):
                scores = align_mod.read_scores(score_path)
            else:
                buf = audio_mod.decode_wav(u.audio_path)
                scores = align_mod.energy_acoustic_scores(
                    buf.samples,
                    buf.sample_rate,
                    labels,
                    cfg.frame_period_s,
                    cfg.energy_floor_db,
                )
            alignment = align_mod.force_align(scores, labels, allow_optional_silence=True)
            align_mod.write_alignment(alignment, scores.frame_period_s, os.path.join(ali_dir, f"{u.id}.ali"))
            out.append(u.evolve(phonemes=phonemes).with_step("align", Stage.ALIGNED))
        except ForgeError as exc:
            report.warnings.append(f"{u.id}: excluded: {exc}")
    if manifest.records and not out:
        raise PipelineError("align failed for every record; first problem: " + report.warnings[0])
    return CorpusManifest(tuple(out), schema_version=manifest.schema_version)


def _slice_phonemes(phonemes: PhonemeSequence, start: int, end: int) -> PhonemeSequence:
    syllables = phonemes.syllables[start:end]
    pauses = frozenset(p - start for p in phonemes.pauses if start < p < end)
    return PhonemeSequence(syllables, pauses)


def _split_text_spans(text: str, char_regions: list[int], n_regions: int) -> list[str]:
    """Partition text so the i-th non-punctuation character lands in the
    span of its assigned region; punctuation sticks to what precedes it."""
    spans = [""] * n_regions
    current = 0
    content_index = 0
    for ch in text:
        if not ch.isspace() and not _is_punct(ch):
            current = char_regions[content_index]
            content_index += 1
        spans[current] += ch
    return spans


def _is_punct(ch: str) -> bool:
    from .text import is_punctuation

    return is_punctuation(ch)


def stage_segment(manifest, cfg: ForgeConfig, ws: Workspace, report: StageReport) -> CorpusManifest:
    ali_dir = ws.path("alignments")
    seg_audio = ws.dir("audio", "segments")
    p = cfg.pipeline
    out = []
    for u in manifest:
        ali_path = os.path.join(ali_dir, f"{u.id}.ali")
        buf = audio_mod.decode_wav(u.audio_path)
        if os.path.exists(ali_path):
            alignment, frame_period = align_mod.read_alignment(ali_path)
            silences = align_mod.silence_intervals(alignment, frame_period)
            phonemes = u.phonemes
            phone_ivs = alignment.phone_intervals()
        elif cfg.segment_energy_fallback:
            silences = audio_mod.detect_silences_energy(buf, cfg.energy_floor_db, cfg.frame_period_s)
            # Without an alignment text cannot be split across cuts, so
            # only edge silences are eligible: trim, never split.
            silences = [
                (s, e) for s, e in silences if s <= 0.0 or round(e * buf.sample_rate) >= len(buf)
            ]
            frame_period = cfg.frame_period_s
            phonemes = u.phonemes
            phone_ivs = None
        else:
            raise StageOrderError(
                f"no alignment for {u.id} under {ali_dir}; run the align stage first "
                "or enable segment.energy_fallback"
            )
        regions = audio_mod.plan_segments(
            len(buf), buf.sample_rate, silences, p.silence_split_threshold_s, p.silence_pad_s
        )
        if not regions:
            report.warnings.append(f"{u.id}: no speech found, dropped")
            continue
        if phonemes is None:
            report.warnings.append(f"{u.id}: no phonemes to carry into segments, dropped")
            continue
        if len(regions) == 1:
            text_spans = [u.text]
            phoneme_spans = [phonemes]
        else:
            if phonemes is None or phone_ivs is None or len(phone_ivs) != len(phonemes.syllables):
                report.warnings.append(f"{u.id}: cannot map syllables to segments, dropped")
                continue
            char_regions = []
            for iv in phone_ivs:
                mid = 0.5 * (iv.start_frame + iv.end_frame) * frame_period * buf.sample_rate
                idx = len(regions) - 1
                for r_i, region in enumerate(regions):
                    if mid < region.end:
                        idx = r_i
                        break
                char_regions.append(idx)
            # Region assignment must be monotone; alignment order matches
            # syllable order so a regression indicates a broken sidecar.
            if any(b < a for a, b in zip(char_regions, char_regions[1:])):
                report.warnings.append(f"{u.id}: alignment out of order, dropped")
                continue
            text_spans = _split_text_spans(u.text, char_regions, len(regions))
            bounds = []
            start = 0
            for r_i in range(len(regions)):
                end = start + sum(1 for c in char_regions if c == r_i)
                bounds.append((start, end))
                start = end
            phoneme_spans = [_slice_phonemes(phonemes, a, b) for a, b in bounds]
        try:
            segments = audio_mod.trim_and_split(
                buf,
                silences,
                p.silence_split_threshold_s,
                p.silence_pad_s,
                text_spans,
                phoneme_spans,
                u.id,
            )
        except ForgeError as exc:
            report.warnings.append(f"{u.id}: excluded: {exc}")
            continue
        for k, seg in enumerate(segments):
            wav_path = os.path.join(seg_audio, f"{u.id}_{k}.wav")
            audio_mod.encode_wav(seg.audio, wav_path)
            meta = {
                "source": u.id,
                "index": k,
                "offset_s": seg.offset_in_source_s,
                "lead_silence_s": seg.lead_silence_s,
                "tail_silence_s": seg.tail_silence_s,
            }
            out.append(
                u.evolve(
                    id=f"{u.id}_{k}",
                    audio_path=wav_path,
                    duration_s=seg.duration_s,
                    text=seg.text,
                    phonemes=seg.phonemes,
                    extra={**u.extra, "segment_meta": meta},
                ).with_step("segment", Stage.SEGMENTED)
            )
    return CorpusManifest(tuple(out), schema_version=manifest.schema_version)


def stage_concat(manifest, cfg: ForgeConfig, ws: Workspace, report: StageReport) -> CorpusManifest:
    concat_audio = ws.dir("audio", "concat")
    by_source: dict[str, list] = {}
    for u in manifest:
        meta = u.extra.get("segment_meta")
        if not isinstance(meta, dict) or "source" not in meta or "index" not in meta:
            continue
        by_source.setdefault(str(meta["source"]), []).append(u)
    out = list(manifest.records)
    pairs = 0
    for source_id in sorted(by_source):
        group = sorted(by_source[source_id], key=lambda u: int(u.extra["segment_meta"]["index"]))
        by_index = {int(u.extra["segment_meta"]["index"]): u for u in group}
        for i in sorted(by_index):
            j = i + 1
            if j not in by_index:
                continue
            a_rec, b_rec = by_index[i], by_index[j]
            try:
                seg = audio_mod.concatenate(
                    _segment_of(a_rec), _segment_of(b_rec), cfg.pipeline.concat_pause_s
                )
            except ForgeError as exc:
                report.warnings.append(f"{source_id}_{i}+{j}: {exc}")
                continue
            new_id = f"{source_id}_{i}+{j}"
            wav_path = os.path.join(concat_audio, f"{new_id}.wav")
            audio_mod.encode_wav(seg.audio, wav_path)
            out.append(
                a_rec.evolve(
                    id=new_id,
                    audio_path=wav_path,
                    duration_s=seg.duration_s,
                    text=seg.text,
                    phonemes=seg.phonemes,
                    extra={"concat_meta": {"source": source_id, "indices": [i, j]}},
                ).with_step("concat", Stage.SEGMENTED)
            )
            pairs += 1
    report.info["pairs"] = pairs
    return CorpusManifest(tuple(out), schema_version=manifest.schema_version)


def _segment_of(u: Utterance) -> audio_mod.Segment:
    meta = u.extra["segment_meta"]
    return audio_mod.Segment(
        audio=audio_mod.decode_wav(u.audio_path),
        text=u.text,
        phonemes=u.phonemes,
        source_utterance_id=str(meta["source"]),
        offset_in_source_s=float(meta.get("offset_s", 0.0)),
        lead_silence_s=float(meta.get("lead_silence_s", 0.0)),
        tail_silence_s=float(meta.get("tail_silence_s", 0.0)),
    )


def stage_g2p(manifest, cfg: ForgeConfig, ws: Workspace, report: StageReport) -> CorpusManifest:
    lexicon = _require_lexicon(cfg)
    low = [u.id for u in manifest if u.stage.rank < Stage.ALIGNED.rank]
    if low:
        raise StageOrderError(
            f"g2p expects records at stage Aligned or later; run align first (offending: {', '.join(low[:5])})"
        )
    out = []
    for u in manifest:
        try:
            phonemes = g2p_mod.g2p_convert(u.text, u.dialect, lexicon, cfg.pipeline, strict=cfg.g2p_strict)
        except ForgeError as exc:
            report.warnings.append(f"{u.id}: excluded: {exc}")
            continue
        out.append(u.evolve(phonemes=phonemes).with_step("g2p"))
    return CorpusManifest(tuple(out), schema_version=manifest.schema_version)


def stage_stats(manifest, cfg: ForgeConfig, ws: Workspace, report: StageReport) -> CorpusManifest:
    table = compute_stats(manifest)
    text = render_text(table)
    with open(ws.path("stats.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(ws.path("stats.csv"), "w", encoding="utf-8") as fh:
        fh.write(render_csv(table))
    report.info["grand_hours"] = round(table.grand_total().hours, 6)
    print(text, end="")
    return manifest


def stage_emit(manifest, cfg: ForgeConfig, ws: Workspace, report: StageReport) -> CorpusManifest:
    out = CorpusManifest(
        tuple(u.with_step("emit", Stage.FINAL) for u in manifest),
        schema_version=manifest.schema_version,
    )
    strict = validate_manifest(out, strict_audio=True)
    if not strict.ok:
        raise PipelineError("final manifest failed strict validation:\n" + strict.render())
    return out


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "cleanup": stage_cleanup,
    "align": stage_align,
    "segment": stage_segment,
    "concat": stage_concat,
    "g2p": stage_g2p,
    "stats": stage_stats,
    "emit": stage_emit,
}


def resolve_input(first_stage: str, cfg: ForgeConfig) -> tuple[CorpusManifest, str]:
    """Find the newest manifest a stage can start from."""
    idx = STAGES.index(first_stage)
    ws = Workspace(cfg.out_dir)
    for name in reversed(STAGES[:idx]):
        path = MANIFEST_FILES.get(name)
        if not path:
            continue
        full = ws.path(path)
        if os.path.exists(full):
            return read_manifest(full), full
    candidates = ", ".join(MANIFEST_FILES[s] for s in STAGES[:idx] if s in MANIFEST_FILES)
    raise StageOrderError(
        f"stage '{first_stage}' has no input manifest under {cfg.out_dir} "
        f"(looked for {candidates}); run the earlier stages first"
    )


def run_pipeline(
    cfg: ForgeConfig,
    stages,
    input_path: str | os.PathLike | None = None,
) -> RunResult:
    stages = list(stages)
    if not stages:
        raise StageOrderError("no stages requested")
    for name in stages:
        if name not in STAGES:
            raise StageOrderError(f"unknown stage {name!r} (known: {', '.join(STAGES)})")
    order = [STAGES.index(s) for s in stages]
    if order != sorted(order) or len(set(order)) != len(order):
        raise StageOrderError(
            f"stages must be unique and in pipeline order {', '.join(STAGES)}; got {', '.join(stages)}"
        )

    ws = Workspace(cfg.out_dir)
    manifest: CorpusManifest | None = None
    manifest_path: str | None = None
    if stages[0] != "ingest":
        if input_path is not None:
            manifest = read_manifest(input_path)
            manifest_path = os.fspath(input_path)
        else:
            manifest, manifest_path = resolve_input(stages[0], cfg)

    reports: list[StageReport] = []
    for name in stages:
        report = StageReport(name=name, n_in=0 if manifest is None else len(manifest))
        begin = time.monotonic()
        log.info("stage %s starting (%d records in)", name, report.n_in)
        manifest = _STAGE_FUNCS[name](manifest, cfg, ws, report)
        report.n_out = len(manifest)
        report.seconds = round(time.monotonic() - begin, 3)
        out_file = MANIFEST_FILES.get(name)
        if out_file:
            manifest_path = ws.path(out_file)
            write_manifest(manifest, manifest_path)
        for warning in report.warnings:
            log.warning("%s: %s", name, warning)
        log.info("stage %s done (%d records out, %.3fs)", name, report.n_out, report.seconds)
        reports.append(report)

    with open(ws.path("run_report.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "stages": [
                    {
                        "name": r.name,
                        "n_in": r.n_in,
                        "n_out": r.n_out,
                        "seconds": r.seconds,
                        "warnings": r.warnings,
                        "info": r.info,
                    }
                    for r in reports
                ],
                "manifest": manifest_path,
            },
            fh,
            indent=2,
        )
    return RunResult(reports, manifest, manifest_path)
