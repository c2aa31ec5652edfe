"""Config-driven scraping of source sites into scraped-stage utterances.

Each source is a TOML file: seed URLs, CSS-ish extraction rules, a rate
limit, and a cache directory.  Fetches are cached on disk keyed by the
URL hash, so a warm re-crawl touches the network zero times and yields
identical records (timestamps aside).
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from html.parser import HTMLParser
from urllib.parse import urljoin, urlsplit

import requests

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from .audio import decode_wav
from .model import Dialect, ForgeError, SourceKind, Stage, Utterance
from .text import normalize


class IngestError(ForgeError):
    pass


class CrawlError(IngestError):
    pass


# --- tiny HTML selector engine -------------------------------------------
#
# Supports what the extraction rules need and nothing more: tag, #id,
# .class, descendant chains, and a trailing @attr or ::text extractor.

_VOID_TAGS = frozenset(
    {"area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track", "wbr"}
)


class HtmlNode:
    __slots__ = ("tag", "attrs", "children", "parent")

    def __init__(self, tag: str, attrs: dict, parent=None):
        self.tag = tag
        self.attrs = attrs
        self.children: list = []
        self.parent = parent

    def text(self) -> str:
        chunks: list[str] = []
        self._collect_text(chunks)
        return re.sub(r"\s+", " ", "".join(chunks)).strip()

    def _collect_text(self, chunks: list):
        for child in self.children:
            if isinstance(child, str):
                chunks.append(child)
            else:
                child._collect_text(chunks)

    def walk(self):
        for child in self.children:
            if isinstance(child, HtmlNode):
                yield child
                yield from child.walk()

    def classes(self) -> set:
        return set((self.attrs.get("class") or "").split())


class _TreeBuilder(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.root = HtmlNode("", {})
        self.stack = [self.root]

    def handle_starttag(self, tag, attrs):
        node = HtmlNode(tag, dict(attrs), self.stack[-1])
        self.stack[-1].children.append(node)
        if tag not in _VOID_TAGS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        self.stack[-1].children.append(HtmlNode(tag, dict(attrs), self.stack[-1]))

    def handle_endtag(self, tag):
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # stray close tag: ignore

    def handle_data(self, data):
        if data:
            self.stack[-1].children.append(data)


def parse_html(markup: str) -> HtmlNode:
    builder = _TreeBuilder()
    builder.feed(markup)
    builder.close()
    return builder.root


@dataclass(frozen=True)
class _Simple:
    tag: str | None
    node_id: str | None
    classes: frozenset

    def matches(self, node: HtmlNode) -> bool:
        if self.tag and node.tag != self.tag:
            return False
        if self.node_id and node.attrs.get("id") != self.node_id:
            return False
        return self.classes <= node.classes()


_SIMPLE_RE = re.compile(r"^([a-zA-Z][\w-]*)?(#[\w-]+)?((?:\.[\w-]+)*)$")


def _parse_simple(token: str) -> _Simple:
    m = _SIMPLE_RE.match(token)
    if not m or not token:
        raise IngestError(f"bad selector component {token!r}")
    tag, node_id, classes = m.group(1), m.group(2), m.group(3)
    return _Simple(
        tag.lower() if tag else None,
        node_id[1:] if node_id else None,
        frozenset(c for c in classes.split(".") if c),
    )


def parse_selector(expr: str) -> tuple[list[_Simple], tuple[str, str | None]]:
    """Split 'div.entry a@href' into a chain and an extractor."""
    expr = expr.strip()
    extractor: tuple[str, str | None] = ("text", None)
    if "@" in expr:
        expr, attr = expr.rsplit("@", 1)
        if not attr:
            raise IngestError(f"selector {expr!r}: empty attribute name after '@'")
        extractor = ("attr", attr)
    elif expr.endswith("::text"):
        expr = expr[: -len("::text")]
    if not expr.strip():
        raise IngestError("selector must name at least one element")
    chain = [_parse_simple(tok) for tok in expr.split()]
    return chain, extractor


def _matches_chain(node: HtmlNode, chain: list) -> bool:
    if not chain[-1].matches(node):
        return False
    i = len(chain) - 2
    anc = node.parent
    while anc is not None and i >= 0:
        if chain[i].matches(anc):
            i -= 1
        anc = anc.parent
    return i < 0


def select_nodes(root: HtmlNode, expr: str) -> list[HtmlNode]:
    chain, _ = parse_selector(expr)
    return [node for node in root.walk() if _matches_chain(node, chain)]


def extract_first(root: HtmlNode, expr: str) -> str | None:
    """Value of the first node matching expr, per its extractor."""
    chain, (kind, attr) = parse_selector(expr)
    for node in root.walk():
        if _matches_chain(node, chain):
            if kind == "attr":
                value = node.attrs.get(attr)
                if value is not None:
                    return value.strip()
                continue
            return node.text()
    return None


# --- source configuration --------------------------------------------------

CACHE_ENV_VAR = "FORGE_CACHE_DIR"


@dataclass(frozen=True)
class SourceConfig:
    name: str
    kind: SourceKind
    seed_urls: tuple[str, ...]
    rules: dict  # field name -> selector expression
    cache_dir: str
    rate_limit_s: float = 1.0
    max_pages: int = 100
    record_selector: str | None = None
    next_page_selector: str | None = None
    default_dialect: Dialect | None = None

    def __post_init__(self):
        if not self.name or not re.fullmatch(r"[\w-]+", self.name):
            raise IngestError(f"source name {self.name!r} must be a simple identifier")
        if not self.seed_urls:
            raise IngestError(f"source {self.name}: seed_urls must be non-empty")
        for required in ("text", "audio_url"):
            if required not in self.rules:
                raise IngestError(f"source {self.name}: extraction rule for {required!r} required")
        if "dialect" not in self.rules and self.default_dialect is None:
            raise IngestError(
                f"source {self.name}: set a default dialect or a 'dialect' extraction rule"
            )
        if self.rate_limit_s < 0:
            raise IngestError(f"source {self.name}: rate_limit_s must be >= 0")
        if self.max_pages < 1:
            raise IngestError(f"source {self.name}: max_pages must be >= 1")


def load_source_config(path: str | os.PathLike) -> SourceConfig:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise IngestError(f"{path}: invalid TOML: {exc}") from None
    try:
        name = data["name"]
        kind = SourceKind.of(data["kind"], data.get("quality"))
        seeds = tuple(data["seed_urls"])
        rules = dict(data["rules"])
    except KeyError as exc:
        raise IngestError(f"{path}: missing required key {exc}") from None
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from None
    dialect = None
    if "dialect" in data:
        dialect = Dialect.parse(str(data["dialect"]))
    cache_dir = data.get("cache_dir", os.path.join("cache", name))
    env_root = os.environ.get(CACHE_ENV_VAR)
    if env_root:
        cache_dir = os.path.join(env_root, name)
    return SourceConfig(
        name=name,
        kind=kind,
        seed_urls=seeds,
        rules=rules,
        cache_dir=cache_dir,
        rate_limit_s=float(data.get("rate_limit_s", 1.0)),
        max_pages=int(data.get("max_pages", 100)),
        record_selector=data.get("record_selector"),
        next_page_selector=data.get("next_page_selector"),
        default_dialect=dialect,
    )


# --- crawling ----------------------------------------------------------------


@dataclass(frozen=True)
class RawRecord:
    source_url: str
    text: str
    audio_url: str
    dialect: Dialect
    fetched_at: str

    def __post_init__(self):
        object.__setattr__(self, "text", normalize(self.text))
        if not self.text:
            raise IngestError(f"{self.source_url}: record text must be non-empty")
        if not urlsplit(self.audio_url).scheme:
            raise IngestError(f"{self.source_url}: audio URL {self.audio_url!r} must be absolute")


class FetchCache:
    """URL-keyed blob cache: pages/<sha256>, audio/<sha256>.wav."""

    def __init__(self, root: str | os.PathLike):
        self.root = os.fspath(root)
        self.pages_dir = os.path.join(self.root, "pages")
        self.audio_dir = os.path.join(self.root, "audio")

    @staticmethod
    def key(url: str) -> str:
        return hashlib.sha256(url.encode("utf-8")).hexdigest()

    def page_path(self, url: str) -> str:
        return os.path.join(self.pages_dir, self.key(url))

    def audio_path(self, url: str) -> str:
        return os.path.join(self.audio_dir, self.key(url) + ".wav")

    @staticmethod
    def store(path: str, payload: bytes):
        os.makedirs(os.path.dirname(path), exist_ok=True)
        tmp = path + ".part"
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)


def default_http_get(url: str, timeout: float = 30.0) -> bytes:
    resp = requests.get(url, timeout=timeout)
    resp.raise_for_status()
    return resp.content


class _PoliteFetcher:
    """Serializes network requests with a per-host minimum gap."""

    def __init__(self, rate_limit_s: float, http_get):
        self.rate_limit_s = rate_limit_s
        self.http_get = http_get
        self._last: dict[str, float] = {}
        self.request_log: list[tuple[str, float]] = []

    def fetch(self, url: str, cache_path: str) -> tuple[bytes, bool]:
        if os.path.exists(cache_path):
            with open(cache_path, "rb") as fh:
                return fh.read(), True
        host = urlsplit(url).netloc
        last = self._last.get(host)
        if last is not None:
            wait = self.rate_limit_s - (time.monotonic() - last)
            if wait > 0:
                time.sleep(wait)
        self._last[host] = time.monotonic()
        self.request_log.append((url, self._last[host]))
        payload = self.http_get(url)
        FetchCache.store(cache_path, payload)
        return payload, False


@dataclass
class CrawlReport:
    pages_processed: int = 0
    network_fetches: int = 0
    cache_hits: int = 0
    skipped: list = field(default_factory=list)  # (url, reason)
    request_log: list = field(default_factory=list)


def crawl(config: SourceConfig, http_get=None) -> tuple[list[RawRecord], CrawlReport]:
    """Walk a source from its seeds, following next-page links.

    At most max_pages pages are processed.  Per-URL failures are logged
    in the report and skipped; a crawl yielding zero records raises.
    """
    cache = FetchCache(config.cache_dir)
    fetcher = _PoliteFetcher(config.rate_limit_s, http_get or default_http_get)
    report = CrawlReport()
    queue: list[str] = list(config.seed_urls)
    visited: set[str] = set()
    seen_keys: set[tuple[str, str]] = set()
    records: list[RawRecord] = []

    while queue and report.pages_processed < config.max_pages:
        url = queue.pop(0)
        if url in visited:
            continue
        visited.add(url)
        try:
            payload, cached = fetcher.fetch(url, cache.page_path(url))
        except Exception as exc:
            report.skipped.append((url, f"fetch failed: {exc}"))
            continue
        report.pages_processed += 1
        report.cache_hits += int(cached)
        report.network_fetches += int(not cached)
        root = parse_html(payload.decode("utf-8", errors="replace"))
        scopes = select_nodes(root, config.record_selector) if config.record_selector else [root]
        fetched_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        for scope in scopes:
            try:
                record = _extract_record(scope, url, config, fetched_at)
            except IngestError as exc:
                report.skipped.append((url, str(exc)))
                continue
            if record is None:
                continue
            key = (record.source_url, record.audio_url)
            if key in seen_keys:
                continue
            seen_keys.add(key)
            records.append(record)
        if config.next_page_selector:
            nxt = extract_first(root, config.next_page_selector)
            if nxt:
                queue.append(urljoin(url, nxt))

    report.request_log = fetcher.request_log
    if not records:
        reasons = "; ".join(f"{u}: {r}" for u, r in report.skipped[:5])
        raise CrawlError(
            f"crawl of source {config.name!r} produced no records"
            + (f" ({reasons})" if reasons else "")
        )
    return records, report


def _extract_record(scope: HtmlNode, page_url: str, config: SourceConfig, fetched_at: str):
    text = extract_first(scope, config.rules["text"])
    audio = extract_first(scope, config.rules["audio_url"])
    if not text and not audio:
        return None  # scope holds no record at all, not an error
    if not text:
        raise IngestError(f"{page_url}: record missing text ({config.rules['text']!r})")
    if not audio:
        raise IngestError(f"{page_url}: record missing audio URL ({config.rules['audio_url']!r})")
    if "dialect" in config.rules:
        label = extract_first(scope, config.rules["dialect"])
        if not label:
            raise IngestError(f"{page_url}: record missing dialect ({config.rules['dialect']!r})")
        dialect = Dialect.parse(label)
    else:
        dialect = config.default_dialect
    return RawRecord(page_url, text, urljoin(page_url, audio), dialect, fetched_at)


@dataclass
class MaterializeReport:
    downloaded: int = 0
    cache_hits: int = 0
    skipped: list = field(default_factory=list)  # (audio_url, reason)


def materialize(
    records: list[RawRecord],
    config: SourceConfig,
    http_get=None,
) -> tuple[list[Utterance], MaterializeReport]:
    """Download each record's audio (once per URL) and build utterances.

    Undecodable or unfetchable audio skips the record with a report
    entry.  Audio paths in the resulting records point into the cache.
    """
    cache = FetchCache(config.cache_dir)
    fetcher = _PoliteFetcher(config.rate_limit_s, http_get or default_http_get)
    report = MaterializeReport()
    utterances: list[Utterance] = []
    for record in records:
        path = cache.audio_path(record.audio_url)
        try:
            _, cached = fetcher.fetch(record.audio_url, path)
        except Exception as exc:
            report.skipped.append((record.audio_url, f"download failed: {exc}"))
            continue
        report.cache_hits += int(cached)
        report.downloaded += int(not cached)
        try:
            audio = decode_wav(path)
        except ForgeError as exc:
            report.skipped.append((record.audio_url, f"bad audio: {exc}"))
            continue
        digest = hashlib.sha256(
            (record.source_url + "\n" + record.audio_url).encode("utf-8")
        ).hexdigest()
        utterances.append(
            Utterance(
                id=f"{config.name}-{digest[:12]}",
                dialect=record.dialect,
                source=config.kind,
                audio_path=path,
                sample_rate=audio.sample_rate,
                duration_s=audio.duration_s,
                text=record.text,
                stage=Stage.SCRAPED,
                provenance=(),
            ).with_step("ingest", Stage.SCRAPED)
        )
    return utterances, report


def ingest_source(config: SourceConfig, http_get=None):
    """Crawl a source and materialize everything it yields."""
    records, crawl_report = crawl(config, http_get=http_get)
    utterances, mat_report = materialize(records, config, http_get=http_get)
    return utterances, crawl_report, mat_report
