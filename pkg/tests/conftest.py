"""Shared fixtures: a demo lexicon, audio builders, manifest helpers."""

import numpy as np
import pytest

# one line per acceptance criterion, echoed after the test run
ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

from hakkaforge.audio import AudioBuffer
from hakkaforge.g2p import load_lexicon
from hakkaforge.model import DICT, Dialect, SourceKind, Stage, Utterance
from hakkaforge.pipeline import load_forge_config, run_pipeline

# surface, dialect, pronunciation, frequency
DEMO_LEXICON = """\
# demo pronunciation lexicon
天\tSixian\ttien1\t120
光\tSixian\tgong1\t90
落\tSixian\tlog8\t60
雨\tSixian\ti3\t80
食\tSixian\tsiid8\t70
飯\tSixian\tfan4\t65
好\tSixian\tho3\t100
人\tSixian\tngin5\t95
客\tSixian\thag4\t50
話\tSixian\tfa4\t55
山\tSixian\tsan1\t40
水\tSixian\tsui3\t45
多\tSixian\tdo1\t30
謝\tSixian\tqia4\t20
多謝\tSixian\tdo1 qia4\t75
客話\tSixian\thag4 fa4\t85
行\tSixian\thang5\t10
行\tSixian\thong5\t30
怪\tSixian\tguai9\t5
天\tHailu\ttien1\t50
光\tHailu\tgong1\t40
好\tHailu\tho2\t60
人\tHailu\tngin5\t45
水\tHailu\tshui2\t35
"""


@pytest.fixture(scope="session")
def lexicon_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("lexicon") / "lexicon.tsv"
    path.write_text(DEMO_LEXICON, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def lexicon(lexicon_path):
    return load_lexicon(lexicon_path)


def mk_utt(
    uid="u1",
    dialect=Dialect.SIXIAN,
    source=DICT,
    text="好人",
    duration=1.0,
    stage=Stage.SCRAPED,
    **kwargs,
):
    if isinstance(source, str):
        source = SourceKind.of(source)
    return Utterance(
        id=uid,
        dialect=dialect,
        source=source,
        audio_path=kwargs.pop("audio_path", f"audio/{uid}.wav"),
        sample_rate=kwargs.pop("sample_rate", 16000),
        duration_s=duration,
        text=text,
        stage=stage,
        **kwargs,
    )


def speech(n, rng, lo=0.05, hi=0.5):
    """Random samples guaranteed non-silent."""
    mag = rng.uniform(lo, hi, n)
    sign = rng.choice([-1.0, 1.0], n)
    return mag * sign


def buffer_with_silences(rng, rate=16000, spans=((0.0, 0.3, True), (0.3, 1.0, False))):
    """Build (AudioBuffer, silence list) from (start_s, end_s, is_silence) spans."""
    total = int(round(spans[-1][1] * rate))
    samples = np.zeros(total)
    silences = []
    for start_s, end_s, silent in spans:
        a, b = int(round(start_s * rate)), int(round(end_s * rate))
        if silent:
            silences.append((start_s, end_s))
        else:
            samples[a:b] = speech(b - a, rng)
    return AudioBuffer(samples, rate), silences


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """Synthetic scraped corpus with known ground truth, built once."""
    from corpusgen import make_fixture_corpus

    root = tmp_path_factory.mktemp("corpus")
    return make_fixture_corpus(root, DEMO_LEXICON)


@pytest.fixture(scope="session")
def pipeline_run(fixture_corpus):
    """The fixture corpus pushed through every stage after ingest."""
    cfg = load_forge_config(fixture_corpus["config"])
    result = run_pipeline(
        cfg,
        ["cleanup", "align", "segment", "concat", "g2p", "stats", "emit"],
        input_path=fixture_corpus["scraped"],
    )
    return {**fixture_corpus, "forge_config": cfg, "result": result}
