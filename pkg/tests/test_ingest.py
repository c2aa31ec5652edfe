"""Web source ingestion: selectors, config, cache, polite crawling."""

import contextlib
import http.server
import os
import tempfile
import threading
import time

import numpy as np
import pytest

from hakkaforge.audio import AudioBuffer, encode_wav
from hakkaforge.ingest import (
    CACHE_ENV_VAR,
    CrawlError,
    FetchCache,
    IngestError,
    SourceConfig,
    crawl,
    extract_first,
    ingest_source,
    load_source_config,
    materialize,
    parse_html,
    parse_selector,
    select_nodes,
)
from hakkaforge.model import Dialect, SourceKind, Stage

SAMPLE_HTML = """
<html><body>
  <div id="main" class="content">
    <div class="entry featured">
      <p class="text">天光</p>
      <a class="audio" href="clips/one.wav">play</a>
      <span class="dialect">Sixian</span>
    </div>
    <div class="entry">
      <p class="text">好人</p>
      <a class="audio" href="clips/two.wav">play</a>
      <span class="dialect">Hailu</span>
    </div>
  </div>
  <a id="next" href="page2.html">next</a>
</body></html>
"""


class TestSelectors:
    def setup_method(self):
        self.root = parse_html(SAMPLE_HTML)

    def test_select_by_tag(self):
        assert len(select_nodes(self.root, "p")) == 2

    def test_select_by_class(self):
        assert len(select_nodes(self.root, ".entry")) == 2
        assert len(select_nodes(self.root, ".entry.featured")) == 1

    def test_select_by_id(self):
        nodes = select_nodes(self.root, "#main")
        assert len(nodes) == 1
        assert nodes[0].tag == "div"

    def test_descendant_chain(self):
        assert len(select_nodes(self.root, "#main .entry p")) == 2
        assert select_nodes(self.root, ".featured p")[0].text() == "天光"

    def test_text_extraction(self):
        assert extract_first(self.root, ".featured .text::text") == "天光"
        assert extract_first(self.root, ".featured .text") == "天光"

    def test_attribute_extraction(self):
        assert extract_first(self.root, ".featured a@href") == "clips/one.wav"
        assert extract_first(self.root, "#next@href") == "page2.html"

    def test_no_match_returns_none(self):
        assert extract_first(self.root, ".absent") is None

    def test_text_collapses_whitespace(self):
        root = parse_html("<p>  天\n 光  </p>")
        assert extract_first(root, "p") == "天 光"

    def test_bad_selector_rejected(self):
        with pytest.raises(IngestError):
            parse_selector("div[att]")
        with pytest.raises(IngestError):
            parse_selector("")
        with pytest.raises(IngestError):
            parse_selector("a@")

    def test_void_and_unclosed_tags_tolerated(self):
        root = parse_html("<div><br><p class=x>one<p class=y>two</div>")
        assert extract_first(root, ".y") == "two"


def make_config(tmp_path, **overrides):
    params = dict(
        name="demo",
        kind=SourceKind.of("DICT"),
        seed_urls=("http://example.test/index.html",),
        rules={"text": ".text", "audio_url": "a@href", "dialect": ".dialect"},
        cache_dir=str(tmp_path / "cache"),
        rate_limit_s=0.0,
    )
    params.update(overrides)
    return SourceConfig(**params)


class TestSourceConfig:
    def test_valid(self, tmp_path):
        make_config(tmp_path)

    def test_rejects_bad_name(self, tmp_path):
        with pytest.raises(IngestError):
            make_config(tmp_path, name="bad name!")

    def test_rejects_empty_seeds(self, tmp_path):
        with pytest.raises(IngestError):
            make_config(tmp_path, seed_urls=())

    def test_requires_text_and_audio_rules(self, tmp_path):
        with pytest.raises(IngestError):
            make_config(tmp_path, rules={"text": ".text"})

    def test_requires_dialect_rule_or_default(self, tmp_path):
        with pytest.raises(IngestError):
            make_config(tmp_path, rules={"text": ".text", "audio_url": "a@href"})
        make_config(
            tmp_path,
            rules={"text": ".text", "audio_url": "a@href"},
            default_dialect=Dialect.SIXIAN,
        )

    def test_rejects_negative_rate_limit(self, tmp_path):
        with pytest.raises(IngestError):
            make_config(tmp_path, rate_limit_s=-1.0)

    def test_rejects_zero_max_pages(self, tmp_path):
        with pytest.raises(IngestError):
            make_config(tmp_path, max_pages=0)


SOURCE_TOML = """\
name = "dict-demo"
kind = "DICT"
seed_urls = ["http://example.test/index.html"]
rate_limit_s = 0.25
max_pages = 3
dialect = "Sixian"

[rules]
text = ".text"
audio_url = "a.audio@href"
"""


class TestLoadSourceConfig:
    def test_load(self, tmp_path, monkeypatch):
        monkeypatch.delenv(CACHE_ENV_VAR, raising=False)
        path = tmp_path / "source.toml"
        path.write_text(SOURCE_TOML, encoding="utf-8")
        cfg = load_source_config(path)
        assert cfg.name == "dict-demo"
        assert cfg.kind.well_transcribed
        assert cfg.rate_limit_s == 0.25
        assert cfg.max_pages == 3
        assert cfg.default_dialect is Dialect.SIXIAN
        assert cfg.cache_dir == os.path.join("cache", "dict-demo")

    def test_cache_dir_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv(CACHE_ENV_VAR, str(tmp_path / "shared"))
        path = tmp_path / "source.toml"
        path.write_text(SOURCE_TOML, encoding="utf-8")
        cfg = load_source_config(path)
        assert cfg.cache_dir == str(tmp_path / "shared" / "dict-demo")

    def test_missing_key(self, tmp_path):
        path = tmp_path / "source.toml"
        path.write_text("name = 'x'\n", encoding="utf-8")
        with pytest.raises(IngestError):
            load_source_config(path)

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "source.toml"
        path.write_text("name = [unterminated\n", encoding="utf-8")
        with pytest.raises(IngestError):
            load_source_config(path)


class TestFetchCache:
    def test_paths_keyed_by_url_hash(self, tmp_path):
        cache = FetchCache(tmp_path)
        p1 = cache.page_path("http://a.test/x")
        p2 = cache.page_path("http://a.test/y")
        assert p1 != p2
        assert os.path.dirname(p1) == str(tmp_path / "pages")
        assert cache.audio_path("http://a.test/x.wav").endswith(".wav")

    def test_store_is_atomic(self, tmp_path):
        cache = FetchCache(tmp_path)
        path = cache.page_path("http://a.test/x")
        FetchCache.store(path, b"hello")
        assert open(path, "rb").read() == b"hello"
        assert not os.path.exists(path + ".part")


def wav_bytes(n=1600, rate=16000, seed=0):
    rng = np.random.default_rng(seed)
    samples = rng.uniform(-0.4, 0.4, n)
    with tempfile.NamedTemporaryFile(suffix=".wav", delete=False) as fh:
        tmp_name = fh.name
    encode_wav(AudioBuffer(samples, rate), tmp_name)
    with open(tmp_name, "rb") as fh:
        data = fh.read()
    os.unlink(tmp_name)
    return data


PAGE_ONE = """
<html><body>
  <div class="entry">
    <p class="text">天光</p><a class="audio" href="/clips/one.wav">play</a>
    <span class="dialect">Sixian</span>
  </div>
  <div class="entry">
    <p class="text">好人</p><a class="audio" href="/clips/two.wav">play</a>
    <span class="dialect">Sixian</span>
  </div>
  <div class="entry">
    <p class="text">好人重複</p><a class="audio" href="/clips/two.wav">play</a>
    <span class="dialect">Sixian</span>
  </div>
  <a class="next" href="/page2.html">next</a>
</body></html>
"""

PAGE_TWO = """
<html><body>
  <div class="entry">
    <p class="text">多謝</p><a class="audio" href="/clips/three.wav">play</a>
    <span class="dialect">Hailu</span>
  </div>
  <div class="entry">
    <p class="text">落雨</p><a class="audio" href="/clips/one.wav">play</a>
    <span class="dialect">Hailu</span>
  </div>
</body></html>
"""


@contextlib.contextmanager
def fixture_server(routes):
    """Serve a dict of path -> bytes (or int for an error status)."""
    hits = []

    class Handler(http.server.BaseHTTPRequestHandler):
        def do_GET(self):
            hits.append(self.path)
            payload = routes.get(self.path)
            if payload is None:
                self.send_error(404)
                return
            if isinstance(payload, int):
                self.send_error(payload)
                return
            self.send_response(200)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}", hits
    finally:
        server.shutdown()
        thread.join(timeout=5)


def live_routes():
    return {
        "/index.html": PAGE_ONE.encode("utf-8"),
        "/page2.html": PAGE_TWO.encode("utf-8"),
        "/clips/one.wav": wav_bytes(seed=1),
        "/clips/two.wav": wav_bytes(seed=2),
        "/clips/three.wav": wav_bytes(seed=3),
    }


def live_config(base, tmp_path, **overrides):
    params = dict(
        name="live",
        kind=SourceKind.of("DICT"),
        seed_urls=(f"{base}/index.html",),
        rules={
            "text": ".entry .text",
            "audio_url": ".entry a.audio@href",
            "dialect": ".entry .dialect",
        },
        record_selector=".entry",
        next_page_selector="a.next@href",
        cache_dir=str(tmp_path / "cache"),
        rate_limit_s=0.0,
        max_pages=10,
    )
    params.update(overrides)
    return SourceConfig(**params)


class TestCrawl:
    def test_end_to_end(self, tmp_path):
        with fixture_server(live_routes()) as (base, hits):
            cfg = live_config(base, tmp_path)
            records, report = crawl(cfg)
        assert report.pages_processed == 2
        texts = [r.text for r in records]
        # 好人重複 repeats the (page, audio) pair of 好人 and is dropped
        assert texts == ["天光", "好人", "多謝", "落雨"]
        assert records[0].audio_url.endswith("/clips/one.wav")
        assert records[0].dialect is Dialect.SIXIAN
        assert records[2].dialect is Dialect.HAILU

    def test_same_audio_on_another_page_kept(self, tmp_path):
        # dedup is on (page URL, audio URL): 落雨 reuses one.wav from a
        # different page and survives
        with fixture_server(live_routes()) as (base, hits):
            cfg = live_config(base, tmp_path)
            records, _ = crawl(cfg)
        one = [r for r in records if r.audio_url.endswith("one.wav")]
        assert [r.text for r in one] == ["天光", "落雨"]

    def test_max_pages_caps_crawl(self, tmp_path):
        with fixture_server(live_routes()) as (base, hits):
            cfg = live_config(base, tmp_path, max_pages=1)
            records, report = crawl(cfg)
        assert report.pages_processed == 1
        assert [r.text for r in records] == ["天光", "好人"]

    def test_no_records_raises_with_reasons(self, tmp_path):
        routes = {"/index.html": b"<html><body><p>nothing here</p></body></html>"}
        with fixture_server(routes) as (base, hits):
            cfg = live_config(base, tmp_path)
            with pytest.raises(CrawlError) as err:
                crawl(cfg)
        assert "live" in str(err.value)

    def test_fetch_failure_skipped_and_reported(self, tmp_path):
        routes = live_routes()
        routes["/page2.html"] = 500
        with fixture_server(routes) as (base, hits):
            cfg = live_config(base, tmp_path)
            records, report = crawl(cfg)
        assert [r.text for r in records] == ["天光", "好人"]
        assert len(report.skipped) == 1
        assert "page2" in report.skipped[0][0]

    def test_warm_cache_makes_no_requests(self, tmp_path):
        routes = live_routes()
        with fixture_server(routes) as (base, hits):
            cfg = live_config(base, tmp_path)
            crawl(cfg)
            first_hits = len(hits)
            records, report = crawl(cfg)
        assert len(hits) == first_hits
        assert report.network_fetches == 0
        assert report.cache_hits == 2
        assert len(records) == 4

    def test_rate_limit_spaces_requests(self, tmp_path):
        gap = 0.12
        with fixture_server(live_routes()) as (base, hits):
            cfg = live_config(base, tmp_path, rate_limit_s=gap)
            _, report = crawl(cfg)
        stamps = [t for _, t in report.request_log]
        assert len(stamps) == 2
        assert stamps[1] - stamps[0] >= gap - 0.001

    def test_cache_hits_wait_for_nothing(self, tmp_path):
        with fixture_server(live_routes()) as (base, hits):
            cfg = live_config(base, tmp_path, rate_limit_s=5.0, max_pages=1)
            crawl(cfg)
            start = time.monotonic()
            crawl(cfg)
            elapsed = time.monotonic() - start
        assert elapsed < 1.0


class TestMaterialize:
    def test_audio_downloaded_once_per_url(self, tmp_path):
        with fixture_server(live_routes()) as (base, hits):
            cfg = live_config(base, tmp_path)
            records, _ = crawl(cfg)
            utts, report = materialize(records, cfg)
            audio_hits = [h for h in hits if h.startswith("/clips/")]
        # records reference two.wav twice but it is fetched once
        assert len(utts) == 4
        assert report.downloaded == 3
        assert report.cache_hits == 1
        assert sorted(audio_hits) == ["/clips/one.wav", "/clips/three.wav", "/clips/two.wav"]

    def test_utterance_fields(self, tmp_path):
        with fixture_server(live_routes()) as (base, hits):
            cfg = live_config(base, tmp_path)
            records, _ = crawl(cfg)
            utts, _ = materialize(records, cfg)
        u = utts[0]
        assert u.id.startswith("live-")
        assert u.stage is Stage.SCRAPED
        assert u.sample_rate == 16000
        assert u.duration_s == pytest.approx(0.1)
        assert os.path.exists(u.audio_path)
        assert [p.step for p in u.provenance] == ["ingest"]

    def test_ids_stable_across_runs(self, tmp_path):
        with fixture_server(live_routes()) as (base, hits):
            cfg = live_config(base, tmp_path)
            records, _ = crawl(cfg)
            utts_a, _ = materialize(records, cfg)
            utts_b, _ = materialize(records, cfg)
        assert [u.id for u in utts_a] == [u.id for u in utts_b]

    def test_bad_audio_skipped(self, tmp_path):
        routes = live_routes()
        routes["/clips/three.wav"] = b"RIFFnope"
        with fixture_server(routes) as (base, hits):
            cfg = live_config(base, tmp_path)
            records, _ = crawl(cfg)
            utts, report = materialize(records, cfg)
        assert len(utts) == 3
        assert len(report.skipped) == 1
        assert "three.wav" in report.skipped[0][0]

    def test_missing_audio_skipped(self, tmp_path):
        routes = live_routes()
        del routes["/clips/three.wav"]
        with fixture_server(routes) as (base, hits):
            cfg = live_config(base, tmp_path)
            records, _ = crawl(cfg)
            utts, report = materialize(records, cfg)
        assert len(utts) == 3
        assert len(report.skipped) == 1


def test_ingest_source_end_to_end(tmp_path):
    with fixture_server(live_routes()) as (base, hits):
        cfg = live_config(base, tmp_path)
        utts, crawl_report, mat_report = ingest_source(cfg)
    assert len(utts) == 4
    assert crawl_report.pages_processed == 2
    assert mat_report.downloaded == 3
    assert len({u.id for u in utts}) == 4
