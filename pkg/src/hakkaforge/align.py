"""Viterbi forced alignment of phoneme sequences to acoustic scores.

The model is one state per phone with self-loops, plus an optional
silence state before the first phone, between phones, and after the last
phone.  Optional silences may be skipped entirely.  Ties prefer staying
in the current state, which favors fewer, longer segments.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .model import ForgeError

SIL = "SIL"


class AlignmentError(ForgeError):
    pass


class ScoreFileError(ForgeError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


@dataclass(frozen=True, eq=False)
class AcousticScores:
    """Per-frame log scores for a fixed symbol inventory."""

    frame_period_s: float
    symbols: tuple[str, ...]
    scores: np.ndarray  # shape (n_frames, n_symbols)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        arr = np.asarray(self.scores, dtype=np.float64)
        if arr.ndim != 2:
            raise AlignmentError(f"scores must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise AlignmentError("scores must contain at least one frame")
        if arr.shape[1] != len(self.symbols):
            raise AlignmentError(
                f"scores have {arr.shape[1]} columns but {len(self.symbols)} symbols"
            )
        if not np.all(np.isfinite(arr)):
            raise AlignmentError("scores must be finite")
        if len(set(self.symbols)) != len(self.symbols):
            raise AlignmentError("symbol inventory contains duplicates")
        if not self.frame_period_s > 0:
            raise AlignmentError("frame_period_s must be positive")
        object.__setattr__(self, "scores", arr)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    @property
    def n_frames(self) -> int:
        return self.scores.shape[0]

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise AlignmentError(f"symbol {symbol!r} not in score inventory") from None


@dataclass(frozen=True)
class AlignedInterval:
    symbol: str
    start_frame: int
    end_frame: int  # exclusive

    def __post_init__(self):
        if not 0 <= self.start_frame < self.end_frame:
            raise AlignmentError(
                f"bad interval [{self.start_frame}, {self.end_frame}) for {self.symbol!r}"
            )


@dataclass(frozen=True)
class Alignment:
    intervals: tuple[AlignedInterval, ...]
    n_frames: int
    total_score: float

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))
        pos = 0
        for iv in self.intervals:
            if iv.start_frame != pos:
                raise AlignmentError(f"intervals not contiguous at frame {pos}")
            pos = iv.end_frame
        if pos != self.n_frames:
            raise AlignmentError(f"intervals cover {pos} frames, expected {self.n_frames}")

    def phone_intervals(self) -> list[AlignedInterval]:
        return [iv for iv in self.intervals if iv.symbol != SIL]


def _build_states(phones, allow_optional_silence: bool):
    symbols: list[str] = []
    optional: list[bool] = []
    if allow_optional_silence:
        symbols.append(SIL)
        optional.append(True)
        for p in phones:
            symbols.append(p)
            optional.append(False)
            symbols.append(SIL)
            optional.append(True)
    else:
        symbols = list(phones)
        optional = [False] * len(phones)
    return symbols, optional


def force_align(scores: AcousticScores, phones, allow_optional_silence: bool = True) -> Alignment:
    """Best-scoring partition of the frames into the given phone sequence.

    Raises when a phone is missing from the score inventory or there are
    fewer frames than phones.
    """
    phones = [str(p) for p in phones]
    if not phones:
        raise AlignmentError("cannot align an empty phone sequence")
    n_frames = scores.n_frames
    if n_frames < len(phones):
        raise AlignmentError(
            f"{n_frames} frame(s) cannot cover {len(phones)} phone(s)"
        )
    symbols, optional = _build_states(phones, allow_optional_silence)
    cols = [scores.index(sym) for sym in symbols]
    emit = scores.scores[:, cols]
    n_states = len(symbols)

    neg = -np.inf
    best = np.full(n_states, neg)
    best[0] = emit[0, 0]
    if optional[0] and n_states > 1:
        best[1] = emit[0, 1]
    # Skip transitions jump over one optional silence state.
    can_skip = np.array(
        [s >= 2 and optional[s - 1] for s in range(n_states)], dtype=bool
    )
    backptr = np.zeros((n_frames, n_states), dtype=np.int8)
    arange = np.arange(n_states)
    for t in range(1, n_frames):
        prev1 = np.concatenate(([neg], best[:-1]))
        prev2 = np.full(n_states, neg)
        if n_states > 2:
            prev2[2:] = best[:-2]
        prev2 = np.where(can_skip, prev2, neg)
        # Candidate order encodes the tie policy: stay, then advance,
        # then advance skipping a silence.  argmax takes the first max.
        cand = np.stack((best, prev1, prev2))
        choice = np.argmax(cand, axis=0)
        backptr[t] = choice
        best = cand[choice, arange] + emit[t]

    end_candidates = [n_states - 1]
    if optional[n_states - 1] and n_states >= 2:
        # Ending on the last phone beats entering the trailing silence
        # when scores tie.
        end_candidates = [n_states - 2, n_states - 1]
    end_state = end_candidates[0]
    for s in end_candidates[1:]:
        if best[s] > best[end_state]:
            end_state = s
    if not math.isfinite(best[end_state]):
        raise AlignmentError("no valid alignment path")
    total = float(best[end_state])

    states = [end_state]
    s = end_state
    for t in range(n_frames - 1, 0, -1):
        s -= int(backptr[t, s])
        states.append(s)
    states.reverse()

    intervals = []
    run_start = 0
    for t in range(1, n_frames + 1):
        if t == n_frames or states[t] != states[t - 1]:
            intervals.append(AlignedInterval(symbols[states[t - 1]], run_start, t))
            run_start = t
    return Alignment(tuple(intervals), n_frames, total)


def silence_intervals(alignment: Alignment, frame_period_s: float) -> list[tuple[float, float]]:
    """Silence spans in seconds, merging abutting silence intervals."""
    runs: list[list[int]] = []
    for iv in alignment.intervals:
        if iv.symbol != SIL:
            continue
        if runs and runs[-1][1] == iv.start_frame:
            runs[-1][1] = iv.end_frame
        else:
            runs.append([iv.start_frame, iv.end_frame])
    return [(start * frame_period_s, end * frame_period_s) for start, end in runs]


def write_scores(scores: AcousticScores, path: str | os.PathLike):
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"frame_period_s={scores.frame_period_s!r}\n")
        fh.write(" ".join(scores.symbols) + "\n")
        for row in scores.scores:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_scores(path: str | os.PathLike) -> AcousticScores:
    """Read a score file: header line, symbol line, one row per frame."""
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("frame_period_s="):
            raise ScoreFileError(path, 1, f"expected frame_period_s=<float>, got {header!r}")
        try:
            frame_period = float(header.split("=", 1)[1])
        except ValueError:
            raise ScoreFileError(path, 1, f"bad frame period in {header!r}") from None
        symbol_line = fh.readline().rstrip("\n")
        symbols = tuple(symbol_line.split())
        if not symbols:
            raise ScoreFileError(path, 2, "empty symbol inventory")
        rows = []
        for line_no, raw in enumerate(fh, start=3):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != len(symbols):
                raise ScoreFileError(
                    path, line_no, f"expected {len(symbols)} scores, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ScoreFileError(path, line_no, f"bad score value in {line!r}") from None
        if not rows:
            raise ScoreFileError(path, 3, "score file contains no frames")
    try:
        return AcousticScores(frame_period, symbols, np.array(rows, dtype=np.float64))
    except AlignmentError as exc:
        raise ScoreFileError(path, 1, str(exc)) from None


def write_alignment(alignment: Alignment, frame_period_s: float, path: str | os.PathLike):
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# alignment frame_period_s={frame_period_s!r} "
            f"n_frames={alignment.n_frames} total_score={alignment.total_score!r}\n"
        )
        for iv in alignment.intervals:
            fh.write(f"{iv.symbol}\t{iv.start_frame}\t{iv.end_frame}\n")


def read_alignment(path: str | os.PathLike) -> tuple[Alignment, float]:
    path = os.fspath(path)
    intervals = []
    frame_period = None
    total = 0.0
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("# alignment "):
            raise AlignmentError(f"{path}:1: not an alignment file")
        for part in header.split():
            if part.startswith("frame_period_s="):
                frame_period = float(part.split("=", 1)[1])
            elif part.startswith("total_score="):
                total = float(part.split("=", 1)[1])
        if frame_period is None:
            raise AlignmentError(f"{path}:1: missing frame_period_s")
        for line_no, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise AlignmentError(f"{path}:{line_no}: expected symbol, start, end")
            intervals.append(AlignedInterval(parts[0], int(parts[1]), int(parts[2])))
    if not intervals:
        raise AlignmentError(f"{path}: alignment file contains no intervals")
    n_frames = intervals[-1].end_frame
    return Alignment(tuple(intervals), n_frames, total), frame_period


def energy_acoustic_scores(
    samples: np.ndarray,
    sample_rate: int,
    phone_symbols,
    frame_period_s: float = 0.010,
    floor_db: float = -40.0,
) -> AcousticScores:
    """Crude speech/silence scorer used when no real scores exist.

    Every non-silence symbol shares the speech score, so the aligner
    spreads phones over the speech regions and silence falls where the
    signal is quiet.  Good enough to bootstrap trimming, nothing more.
    """
    from .audio import frame_rms

    phone_symbols = [str(p) for p in phone_symbols]
    symbols = (SIL, *dict.fromkeys(p for p in phone_symbols if p != SIL))
    frame_len = max(1, int(round(frame_period_s * sample_rate)))
    rms = frame_rms(samples, frame_len)
    db = 20.0 * np.log10(rms + 1e-12)
    # Smooth transition band of ~6 dB around the floor.
    p_sil = 1.0 / (1.0 + np.exp((db - floor_db) / 3.0))
    p_sil = np.clip(p_sil, 1e-6, 1.0 - 1e-6)
    scores = np.empty((len(rms), len(symbols)), dtype=np.float64)
    scores[:, 0] = np.log(p_sil)
    scores[:, 1:] = np.log(1.0 - p_sil)[:, None]
    return AcousticScores(frame_period_s, symbols, scores)
