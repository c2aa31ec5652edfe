"""Regenerate the aggregate-statistics fixtures under fixtures/.

Each manifest carries one record per (dialect, source) bucket whose
duration equals the bucket's reference hours exactly, so the stats
table computed from the manifest must reproduce the reference totals.
Run from the repository root:

    python scripts/make_table_fixtures.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from hakkaforge.model import (
    CorpusManifest,
    Dialect,
    SourceKind,
    Stage,
    Utterance,
    write_manifest,
)

# reference corpus sizes in hours, by dialect and source collection
SCRAPED_HOURS = {
    ("Sixian", "DICT"): 4.27,
    ("Sixian", "EXAM"): 3.73,
    ("Sixian", "RADIO"): 57.15,
    ("Hailu", "DICT"): 5.17,
    ("Hailu", "EXAM"): 6.06,
    ("Hailu", "RADIO"): 43.54,
    ("Dapu", "DICT"): 7.60,
    ("Dapu", "EXAM"): 6.79,
    ("Dapu", "RADIO"): 12.05,
    ("Raoping", "DICT"): 3.50,
    ("Raoping", "EXAM"): 8.94,
    ("Raoping", "RADIO"): 2.75,
    ("Zhaoan", "DICT"): 3.55,
    ("Zhaoan", "EXAM"): 6.82,
    ("Zhaoan", "RADIO"): 2.79,
    ("Nansixian", "DICT"): 5.72,
}

CLEANED_HOURS = {
    ("Sixian", "DICT"): 3.75,
    ("Sixian", "EXAM"): 2.52,
    ("Sixian", "RADIO"): 44.74,
    ("Hailu", "DICT"): 4.68,
    ("Hailu", "EXAM"): 5.36,
    ("Hailu", "RADIO"): 33.72,
    ("Dapu", "DICT"): 7.00,
    ("Dapu", "EXAM"): 5.77,
    ("Dapu", "RADIO"): 8.89,
    ("Raoping", "DICT"): 3.00,
    ("Raoping", "EXAM"): 3.19,
    ("Raoping", "RADIO"): 2.15,
    ("Zhaoan", "DICT"): 2.80,
    ("Zhaoan", "EXAM"): 5.72,
    ("Zhaoan", "RADIO"): 2.06,
    ("Nansixian", "DICT"): 4.96,
}

# total collection size before any filtering, used by the retention demo
BEFORE_HOURS = 180.53


def build(hours_by_bucket, stage):
    records = []
    for (dialect_name, source_name), hours in sorted(hours_by_bucket.items()):
        uid = f"{dialect_name.lower()}-{source_name.lower()}"
        records.append(
            Utterance(
                id=uid,
                dialect=Dialect.parse(dialect_name),
                source=SourceKind.of(source_name),
                audio_path=f"audio/{uid}.wav",
                sample_rate=16000,
                duration_s=round(hours * 3600, 6),
                text="好人多謝",
                stage=stage,
            )
        )
    return CorpusManifest(tuple(records))


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "..", "fixtures")
    os.makedirs(out_dir, exist_ok=True)
    write_manifest(build(SCRAPED_HOURS, Stage.SCRAPED), os.path.join(out_dir, "table1.jsonl"))
    write_manifest(build(CLEANED_HOURS, Stage.CLEANED), os.path.join(out_dir, "table2.jsonl"))
    before = CorpusManifest(
        (
            Utterance(
                id="collection-before",
                dialect=Dialect.SIXIAN,
                source=SourceKind.of("DICT"),
                audio_path="audio/collection-before.wav",
                sample_rate=16000,
                duration_s=round(BEFORE_HOURS * 3600, 6),
                text="好人",
                stage=Stage.SCRAPED,
            ),
        )
    )
    write_manifest(before, os.path.join(out_dir, "retention_before.jsonl"))
    print(f"wrote fixtures to {os.path.abspath(out_dir)}")


if __name__ == "__main__":
    main()
