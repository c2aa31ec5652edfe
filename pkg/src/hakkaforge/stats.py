"""Corpus statistics: utterances, hours, and character rates.

Rows are keyed by (dialect, source kind).  Character counts exclude
punctuation and whitespace.  Durations are reduced with compensated
summation so totals do not depend on record order.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

from .model import CorpusManifest, Dialect, ForgeError, KNOWN_SOURCE_KINDS
from .text import countable_chars


class StatsError(ForgeError):
    pass


@dataclass(frozen=True)
class StatsRow:
    n_utts: int
    seconds: float
    chars: int

    @property
    def hours(self) -> float:
        return self.seconds / 3600.0

    @property
    def chars_per_sec(self) -> float | None:
        """Characters per second of audio; None when there is no audio."""
        if self.seconds <= 0:
            return None
        return self.chars / self.seconds


_EMPTY = StatsRow(0, 0.0, 0)


@dataclass(frozen=True)
class StatsTable:
    rows: dict  # (Dialect, source name) -> StatsRow

    def row(self, dialect: Dialect, source: str) -> StatsRow:
        return self.rows.get((dialect, source), _EMPTY)

    def source_names(self) -> list[str]:
        names = {src for (_, src) in self.rows}
        known = [k for k in KNOWN_SOURCE_KINDS if k in names]
        other = sorted(names - set(KNOWN_SOURCE_KINDS))
        return known + other

    def dialects(self) -> list[Dialect]:
        present = {d for (d, _) in self.rows}
        return [d for d in Dialect if d in present]

    def dialect_total(self, dialect: Dialect) -> StatsRow:
        return _combine(row for (d, _), row in self.rows.items() if d is dialect)

    def source_total(self, source: str) -> StatsRow:
        return _combine(row for (_, s), row in self.rows.items() if s == source)

    def grand_total(self) -> StatsRow:
        return _combine(self.rows.values())


def _combine(rows) -> StatsRow:
    rows = list(rows)
    return StatsRow(
        n_utts=sum(r.n_utts for r in rows),
        seconds=math.fsum(r.seconds for r in rows),
        chars=sum(r.chars for r in rows),
    )


def compute_stats(manifest: CorpusManifest) -> StatsTable:
    groups: dict = {}
    for u in manifest:
        key = (u.dialect, u.source.name)
        bucket = groups.setdefault(key, {"n": 0, "secs": [], "chars": 0})
        bucket["n"] += 1
        bucket["secs"].append(u.duration_s)
        bucket["chars"] += countable_chars(u.text)
    rows = {
        key: StatsRow(b["n"], math.fsum(b["secs"]), b["chars"])
        for key, b in groups.items()
    }
    return StatsTable(rows)


def retention(before: StatsTable, after: StatsTable) -> float:
    """Percentage of audio hours surviving from one table to another,
    rounded to two decimals."""
    denom = before.grand_total().seconds
    if denom <= 0:
        raise StatsError("cannot compute retention against an empty corpus")
    return round(100.0 * after.grand_total().seconds / denom, 2)


def format_retention(pct: float) -> str:
    return f"{pct:.2f}%"


def _fmt_or_dash(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def render_text(table: StatsTable) -> str:
    """Fixed-width table: one row per dialect, per-source columns, totals."""
    sources = table.source_names()
    dialects = table.dialects()
    header = ["Dialect"]
    for src in sources:
        header += [f"{src} #Utt", f"{src} Hours", f"{src} Char/s"]
    header += ["Total Hours"]

    body = []
    for d in dialects:
        row = [d.value]
        for src in sources:
            cell = table.row(d, src)
            if cell.n_utts == 0:
                row += ["-", "-", "-"]
            else:
                row += [str(cell.n_utts), f"{cell.hours:.2f}", _fmt_or_dash(cell.chars_per_sec)]
        row.append(f"{table.dialect_total(d).hours:.2f}")
        body.append(row)
    total_row = ["Total"]
    for src in sources:
        cell = table.source_total(src)
        if cell.n_utts == 0:
            total_row += ["-", "-", "-"]
        else:
            total_row += [str(cell.n_utts), f"{cell.hours:.2f}", _fmt_or_dash(cell.chars_per_sec)]
    total_row.append(f"{table.grand_total().hours:.2f}")
    body.append(total_row)

    widths = [max(len(header[i]), *(len(r[i]) for r in body)) for i in range(len(header))]
    out = io.StringIO()
    out.write("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in body:
        out.write("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip() + "\n")
    return out.getvalue()


def render_csv(table: StatsTable) -> str:
    """Long-form CSV: one line per (dialect, source), then total lines."""
    lines = ["dialect,source,n_utts,hours,chars,chars_per_sec"]
    for d in table.dialects():
        for src in table.source_names():
            cell = table.row(d, src)
            if cell.n_utts == 0:
                continue
            cps = cell.chars_per_sec
            lines.append(
                f"{d.value},{src},{cell.n_utts},{cell.hours:.6f},{cell.chars},"
                + ("" if cps is None else f"{cps:.6f}")
            )
    for src in table.source_names():
        cell = table.source_total(src)
        cps = cell.chars_per_sec
        lines.append(
            f"Total,{src},{cell.n_utts},{cell.hours:.6f},{cell.chars},"
            + ("" if cps is None else f"{cps:.6f}")
        )
    grand = table.grand_total()
    cps = grand.chars_per_sec
    lines.append(
        f"Total,Total,{grand.n_utts},{grand.hours:.6f},{grand.chars},"
        + ("" if cps is None else f"{cps:.6f}")
    )
    return "\n".join(lines) + "\n"
