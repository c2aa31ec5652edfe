"""Corpus construction toolkit for multi-dialect Hakka TTS.

The package turns raw web-scraped recordings into a clean, segmented,
phonemized training corpus: crawl and cache source sites, rescore noisy
transcripts with a biased language model, force-align text to audio,
trim and split on silence, convert text to phoneme sequences, and audit
the result with per-dialect statistics.
"""

__version__ = "0.1.0"

TOOL_NAME = "hakkaforge"


def tool_version() -> str:
    """Identifier recorded in manifest provenance entries."""
    return f"{TOOL_NAME}-{__version__}"
