"""WAV I/O, silence-based segmentation, and pairwise concatenation.

Audio lives in memory as float64 mono in [-1, 1].  Files are RIFF/WAVE
PCM 16-bit little-endian; stereo input is downmixed by averaging.  All
cut arithmetic happens in integer samples so threshold comparisons never
hinge on floating-point noise.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .model import ForgeError, quantize_seconds
from .phonemes import PhonemeSequence, join_with_pause
from .text import PAUSE_GLYPH


class AudioError(ForgeError):
    pass


class AudioFormatError(AudioError):
    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: byte {offset}: {message}")


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise AudioError(f"audio must be mono 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise AudioError("audio samples must be finite")
        if not isinstance(self.sample_rate, int) or self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def decode_wav(path: str | os.PathLike) -> AudioBuffer:
    """Decode a PCM 16-bit WAV file; stereo is averaged down to mono."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[0:4] != b"RIFF":
        raise AudioFormatError(path, 0, "missing RIFF header")
    if data[8:12] != b"WAVE":
        raise AudioFormatError(path, 8, "not a WAVE file")

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + size > len(data):
            raise AudioFormatError(
                path,
                len(data),
                f"chunk {chunk_id!r} truncated: need {body + size} bytes, file has {len(data)}",
            )
        if chunk_id == b"fmt ":
            if size < 16:
                raise AudioFormatError(path, pos, f"fmt chunk too small ({size} bytes)")
            fmt = struct.unpack_from("<HHIIHH", data, body)
        elif chunk_id == b"data":
            pcm = (body, size)
        pos = body + size + (size & 1)

    if fmt is None:
        raise AudioFormatError(path, 12, "no fmt chunk")
    if pcm is None:
        raise AudioFormatError(path, 12, "no data chunk")
    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise AudioFormatError(path, 12, f"unsupported audio format {audio_format} (PCM only)")
    if bits != 16:
        raise AudioFormatError(path, 12, f"unsupported bit depth {bits} (16-bit only)")
    if channels < 1:
        raise AudioFormatError(path, 12, "zero channels")

    body, size = pcm
    frame_bytes = channels * 2
    if size % frame_bytes:
        raise AudioFormatError(
            path, body + size - size % frame_bytes, "data chunk ends mid-frame"
        )
    raw = np.frombuffer(data, dtype="<i2", count=size // 2, offset=body)
    samples = raw.astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return AudioBuffer(samples, int(sample_rate))


def encode_wav(audio: AudioBuffer, path: str | os.PathLike, bit_depth: int = 16):
    """Write mono PCM WAV atomically.  Only 16-bit output is supported."""
    if bit_depth != 16:
        raise AudioError(f"unsupported bit depth {bit_depth} (16-bit only)")
    path = os.fspath(path)
    scaled = np.clip(np.rint(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = scaled.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        audio.sample_rate,
        audio.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


@dataclass(frozen=True, eq=False)
class Segment:
    """A speech span cut out of a source utterance."""

    audio: AudioBuffer
    text: str
    phonemes: PhonemeSequence | None
    source_utterance_id: str
    offset_in_source_s: float
    lead_silence_s: float = 0.0
    tail_silence_s: float = 0.0

    def __post_init__(self):
        if not self.text:
            raise AudioError("segment text must be non-empty")
        object.__setattr__(self, "offset_in_source_s", quantize_seconds(self.offset_in_source_s))
        object.__setattr__(self, "lead_silence_s", quantize_seconds(self.lead_silence_s))
        object.__setattr__(self, "tail_silence_s", quantize_seconds(self.tail_silence_s))

    @property
    def duration_s(self) -> float:
        return self.audio.duration_s


@dataclass(frozen=True)
class Region:
    """Planned cut, in samples of the source audio."""

    start: int
    end: int
    lead_silence: int
    tail_silence: int

    @property
    def n_samples(self) -> int:
        return self.end - self.start


def _to_sample_intervals(silences, sample_rate: int, n_samples: int) -> list[list[int]]:
    out = []
    for start_s, end_s in silences:
        start = int(round(start_s * sample_rate))
        end = int(round(end_s * sample_rate))
        if not 0 <= start <= end <= n_samples:
            raise AudioError(
                f"silence ({start_s}, {end_s}) inconsistent with audio of "
                f"{n_samples / sample_rate:.6f} s"
            )
        if start < end:
            out.append([start, end])
    out.sort()
    merged: list[list[int]] = []
    for start, end in out:
        if merged and start <= merged[-1][1]:
            if start < merged[-1][1]:
                raise AudioError("silence intervals overlap")
            merged[-1][1] = end
        else:
            merged.append([start, end])
    return merged


def plan_segments(
    n_samples: int,
    sample_rate: int,
    silences,
    threshold_s: float,
    pad_s: float,
) -> list[Region]:
    """Decide where to cut, in integer samples.

    Interior silences strictly longer than the threshold become split
    points, keeping pad_s of silence on each side.  Leading and trailing
    silence is trimmed down to at most pad_s but never causes a split.
    """
    if not threshold_s > 0:
        raise AudioError("threshold_s must be positive")
    if pad_s < 0:
        raise AudioError("pad_s must be non-negative")
    if 2.0 * pad_s > threshold_s + 1e-12:
        raise AudioError("2 * pad_s must not exceed threshold_s")
    pad = int(round(pad_s * sample_rate))
    threshold = int(round(threshold_s * sample_rate))
    sils = _to_sample_intervals(silences, sample_rate, n_samples)

    if n_samples == 0 or (sils and sils[0] == [0, n_samples]):
        return []

    lead = 0
    cur_start = 0
    if sils and sils[0][0] == 0:
        first = sils.pop(0)
        lead = min(pad, first[1])
        cur_start = first[1] - lead
    trailing = None
    if sils and sils[-1][1] == n_samples:
        trailing = sils.pop()

    regions: list[Region] = []
    for start, end in sils:
        if end - start > threshold:
            regions.append(Region(cur_start, start + pad, lead, pad))
            cur_start = end - pad
            lead = pad
    if trailing is not None:
        tail = min(pad, n_samples - trailing[0])
        regions.append(Region(cur_start, trailing[0] + tail, lead, tail))
    else:
        regions.append(Region(cur_start, n_samples, lead, 0))
    return regions


def trim_and_split(
    audio: AudioBuffer,
    silences,
    threshold_s: float,
    pad_s: float,
    text_spans,
    phoneme_spans=None,
    source_id: str = "",
) -> list[Segment]:
    """Cut an utterance into segments at long silences.

    text_spans supplies the text of each resulting segment, in order
    (one entry when no silence splits).  phoneme_spans, if given, pairs
    with text_spans.  Speech samples are preserved exactly; only silence
    is dropped.
    """
    regions = plan_segments(len(audio), audio.sample_rate, silences, threshold_s, pad_s)
    text_spans = list(text_spans)
    if len(text_spans) != len(regions):
        raise AudioError(
            f"{len(regions)} segment(s) planned but {len(text_spans)} text span(s) given"
        )
    if phoneme_spans is not None:
        phoneme_spans = list(phoneme_spans)
        if len(phoneme_spans) != len(regions):
            raise AudioError(
                f"{len(regions)} segment(s) planned but {len(phoneme_spans)} phoneme span(s) given"
            )
    rate = audio.sample_rate
    segments = []
    for i, region in enumerate(regions):
        segments.append(
            Segment(
                audio=AudioBuffer(audio.samples[region.start : region.end].copy(), rate),
                text=text_spans[i],
                phonemes=None if phoneme_spans is None else phoneme_spans[i],
                source_utterance_id=source_id,
                offset_in_source_s=region.start / rate,
                lead_silence_s=region.lead_silence / rate,
                tail_silence_s=region.tail_silence / rate,
            )
        )
    return segments


def concatenate(a: Segment, b: Segment, pause_s: float) -> Segment:
    """Join two segments with exactly pause_s of silence at the junction.

    Each side contributes half the pause: trailing silence of `a` and
    leading silence of `b` are trimmed or zero-padded to pause_s / 2.
    """
    if a.audio.sample_rate != b.audio.sample_rate:
        raise AudioError(
            f"sample rate mismatch: {a.audio.sample_rate} vs {b.audio.sample_rate}"
        )
    if pause_s < 0:
        raise AudioError("pause_s must be non-negative")
    rate = a.audio.sample_rate
    pause = int(round(pause_s * rate))
    side_a = pause - pause // 2
    side_b = pause // 2

    a_tail = min(int(round(a.tail_silence_s * rate)), len(a.audio))
    b_lead = min(int(round(b.lead_silence_s * rate)), len(b.audio))

    left = a.audio.samples
    if a_tail > side_a:
        left = left[: len(left) - (a_tail - side_a)]
    elif a_tail < side_a:
        left = np.concatenate([left, np.zeros(side_a - a_tail)])
    right = b.audio.samples
    if b_lead > side_b:
        right = right[b_lead - side_b :]
    elif b_lead < side_b:
        right = np.concatenate([np.zeros(side_b - b_lead), right])

    phonemes = None
    if a.phonemes is not None and b.phonemes is not None:
        phonemes = join_with_pause(a.phonemes, b.phonemes)
    return Segment(
        audio=AudioBuffer(np.concatenate([left, right]), rate),
        text=a.text + PAUSE_GLYPH + b.text,
        phonemes=phonemes,
        source_utterance_id=a.source_utterance_id,
        offset_in_source_s=a.offset_in_source_s,
        lead_silence_s=a.lead_silence_s,
        tail_silence_s=b.tail_silence_s,
    )


def frame_rms(samples: np.ndarray, frame_len: int) -> np.ndarray:
    """RMS of non-overlapping frames; the tail is zero-padded to a frame."""
    samples = np.asarray(samples, dtype=np.float64)
    if frame_len < 1:
        raise AudioError("frame_len must be >= 1")
    if len(samples) == 0:
        return np.zeros(0)
    n_frames = math.ceil(len(samples) / frame_len)
    padded = np.zeros(n_frames * frame_len)
    padded[: len(samples)] = samples
    frames = padded.reshape(n_frames, frame_len)
    return np.sqrt(np.mean(frames * frames, axis=1))


def detect_silences_energy(
    audio: AudioBuffer,
    floor_db: float = -40.0,
    frame_s: float = 0.010,
    min_frames: int = 3,
) -> list[tuple[float, float]]:
    """Frame-energy silence detector for audio without an alignment.

    Returns (start_s, end_s) spans where at least min_frames consecutive
    frames sit below floor_db.  A silent run reaching the end of the
    audio extends to the true end, so trailing silence is trimmable.
    """
    frame_len = max(1, int(round(frame_s * audio.sample_rate)))
    rms = frame_rms(audio.samples, frame_len)
    db = 20.0 * np.log10(rms + 1e-12)
    silent = db < floor_db
    spans = []
    run_start = None
    for i, flag in enumerate(list(silent) + [False]):
        if flag and run_start is None:
            run_start = i
        elif not flag and run_start is not None:
            if i - run_start >= min_frames:
                start = run_start * frame_len
                end = min(i * frame_len, len(audio))
                if i == len(rms):
                    end = len(audio)
                spans.append((start / audio.sample_rate, end / audio.sample_rate))
            run_start = None
    return spans
