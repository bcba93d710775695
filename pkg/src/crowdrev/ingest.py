"""Stream a Posts.xml / PostLinks.xml dump into a :class:`PostsStore`."""

from __future__ import annotations

import bz2
import gzip
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import BinaryIO, Iterator
from xml.parsers import expat

from crowdrev.config import ReviewConfig
from crowdrev.scoring import SentimentProvider, score_post
from crowdrev.store import (
    CodePart,
    IngestStats,
    LinkType,
    PostLink,
    PostRecord,
    PostsStore,
    PostType,
    StoreError,
)
from crowdrev.winnow import code_size, fingerprint_text

log = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 16

_BLOCK_TAGS = frozenset(
    "p div br li ul ol h1 h2 h3 h4 h5 h6 blockquote table tr td th hr pre dl dt dd".split()
)


class DumpParseError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


@dataclass
class ParseCounters:
    rows: int = 0
    missing_attribute: int = 0
    bad_value: int = 0
    unknown_link_type: int = 0
    self_links: int = 0

    @property
    def skipped(self) -> int:
        return self.missing_attribute + self.bad_value


@dataclass
class RawPostRow:
    id: int
    post_type_id: int
    body_html: str
    parent_id: int | None = None
    accepted_answer_id: int | None = None
    score: int = 0
    view_count: int = 0
    title: str | None = None
    tags: list[str] = field(default_factory=list)


@dataclass
class ExtractedPost:
    post: PostRecord
    code_parts: list[tuple[str, int]]
    narrative: str


@dataclass
class BodyParts:
    code_blocks: list[str]
    narrative: str
    warnings: list[str]


@contextmanager
def _open_source(source: str | Path | BinaryIO) -> Iterator[BinaryIO]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        opener = {".gz": gzip.open, ".bz2": bz2.open}.get(path.suffix, open)
        with opener(path, "rb") as fh:
            yield fh
    else:
        yield source


def _iter_row_attrs(source: str | Path | BinaryIO, root: str) -> Iterator[dict[str, str]]:
    """Yield the attribute dicts of ``<root><row .../>...</root>`` in document order."""
    parser = expat.ParserCreate()
    pending: list[dict[str, str]] = []
    depth = 0

    def start(name: str, attrs: dict[str, str]) -> None:
        nonlocal depth
        depth += 1
        if depth == 1 and name != root:
            raise DumpParseError(f"expected root <{root}>, found <{name}>", parser.CurrentByteIndex)
        if depth == 2 and name == "row":
            pending.append(attrs)

    def end(name: str) -> None:
        nonlocal depth
        depth -= 1

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    with _open_source(source) as fh:
        while True:
            chunk = fh.read(CHUNK_SIZE)
            final = not chunk
            try:
                parser.Parse(chunk, final)
            except expat.ExpatError as exc:
                yield from pending
                raise DumpParseError(
                    expat.ErrorString(exc.code), parser.ErrorByteIndex
                ) from exc
            yield from pending
            pending.clear()
            if final:
                break


def parse_tags(raw: str | None) -> list[str]:
    """``<java><arrays>`` (or ``|java|arrays|``) to ``["java", "arrays"]``."""
    if not raw:
        return []
    if raw.startswith("<"):
        return [t for t in raw.strip("<>").split("><") if t]
    return [t for t in raw.split("|") if t]


def _opt_int(attrs: dict[str, str], key: str) -> int | None:
    v = attrs.get(key)
    return None if v in (None, "") else int(v)


def parse_posts_stream(
    source: str | Path | BinaryIO, counters: ParseCounters | None = None
) -> Iterator[RawPostRow]:
    """Rows of a Posts.xml dump, streamed. Rows lacking Id, PostTypeId or Body,
    or carrying non-integer numbers, are skipped and counted."""
    counters = counters if counters is not None else ParseCounters()
    for attrs in _iter_row_attrs(source, "posts"):
        counters.rows += 1
        if not all(k in attrs for k in ("Id", "PostTypeId", "Body")):
            counters.missing_attribute += 1
            log.warning("row without Id/PostTypeId/Body skipped: %s", attrs.get("Id", "?"))
            continue
        try:
            yield RawPostRow(
                id=int(attrs["Id"]),
                post_type_id=int(attrs["PostTypeId"]),
                parent_id=_opt_int(attrs, "ParentId"),
                accepted_answer_id=_opt_int(attrs, "AcceptedAnswerId"),
                score=_opt_int(attrs, "Score") or 0,
                view_count=_opt_int(attrs, "ViewCount") or 0,
                title=attrs.get("Title"),
                tags=parse_tags(attrs.get("Tags")),
                body_html=attrs["Body"],
            )
        except ValueError:
            counters.bad_value += 1
            log.warning("row %s has a non-integer field; skipped", attrs.get("Id"))


def parse_postlinks_stream(
    source: str | Path | BinaryIO, counters: ParseCounters | None = None
) -> Iterator[tuple[int, int, LinkType]]:
    counters = counters if counters is not None else ParseCounters()
    for attrs in _iter_row_attrs(source, "postlinks"):
        counters.rows += 1
        if not all(k in attrs for k in ("PostId", "RelatedPostId", "LinkTypeId")):
            counters.missing_attribute += 1
            continue
        try:
            post_id = int(attrs["PostId"])
            related = int(attrs["RelatedPostId"])
            code = int(attrs["LinkTypeId"])
        except ValueError:
            counters.bad_value += 1
            continue
        try:
            link_type = LinkType(code)
        except ValueError:
            counters.unknown_link_type += 1
            continue
        yield post_id, related, link_type


class _BodyParser(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.blocks: list[str] = []
        self.text: list[str] = []
        self.warnings: list[str] = []
        self._pre_depth = 0
        self._buf: list[str] = []

    def handle_starttag(self, tag: str, attrs) -> None:
        if tag == "pre":
            if self._pre_depth:
                self.warnings.append("nested <pre>")
            else:
                self._buf = []
            self._pre_depth += 1
        if tag in _BLOCK_TAGS and not self._pre_depth:
            self.text.append(" ")

    def handle_endtag(self, tag: str) -> None:
        if tag == "pre":
            if not self._pre_depth:
                self.warnings.append("unmatched </pre>")
                return
            self._pre_depth -= 1
            if not self._pre_depth:
                self.blocks.append("".join(self._buf))
                self.text.append(" ")
        elif tag in _BLOCK_TAGS and not self._pre_depth:
            self.text.append(" ")

    def handle_data(self, data: str) -> None:
        (self._buf if self._pre_depth else self.text).append(data)

    def close(self) -> None:
        super().close()
        if self._pre_depth:
            self.warnings.append("unclosed <pre>")
            self.blocks.append("".join(self._buf))
            self._pre_depth = 0


def parse_body(body_html: str) -> BodyParts:
    p = _BodyParser()
    p.feed(body_html)
    p.close()
    return BodyParts(
        code_blocks=p.blocks,
        narrative=" ".join("".join(p.text).split()),
        warnings=p.warnings,
    )


def extract_code_blocks(body_html: str) -> list[str]:
    """Contents of ``<pre>`` regions, entities decoded. Inline ``<code>`` is ignored."""
    return parse_body(body_html).code_blocks


def extract_narrative(body_html: str) -> str:
    """Body text outside code blocks, tags stripped and whitespace collapsed."""
    return parse_body(body_html).narrative


def extract_post(row: RawPostRow, min_code_size: int = 0) -> ExtractedPost:
    """Split a row into metadata, narrative and the code blocks large enough to keep."""
    body = parse_body(row.body_html)
    parts = [(b, code_size(b)) for b in body.code_blocks]
    post = PostRecord(
        id=row.id,
        post_type=PostType(row.post_type_id),
        score=row.score,
        view_count=max(0, row.view_count),
        parent_id=row.parent_id,
        accepted_answer_id=row.accepted_answer_id,
        title=row.title or "",
        tags=list(row.tags),
        narrative=body.narrative,
    )
    return ExtractedPost(
        post=post,
        code_parts=[(text, size) for text, size in parts if size >= min_code_size],
        narrative=body.narrative,
    )


def ingest_post(
    row: RawPostRow,
    cfg: ReviewConfig,
    store: PostsStore,
    stats: IngestStats | None = None,
    provider: SentimentProvider | None = None,
) -> bool:
    """Store the post and its qualifying code blocks. Returns False if skipped."""
    stats = stats if stats is not None else IngestStats()
    stats.rows_seen += 1
    if row.post_type_id not in (PostType.QUESTION, PostType.ANSWER):
        stats.rows_skipped_type += 1
        return False
    if (row.post_type_id == PostType.ANSWER) != (row.parent_id is not None):
        stats.rows_skipped_invalid += 1
        log.warning("post %d: parent id inconsistent with post type; skipped", row.id)
        return False

    extracted = extract_post(row, cfg.min_code_size)
    if not extracted.code_parts:
        if extract_code_blocks(row.body_html):
            stats.rows_skipped_small_code += 1
        else:
            stats.rows_skipped_no_code += 1
        return False

    alpha = score_post(extracted.post, cfg.s_threshold, cfg.neutral_band, provider)
    with store.transaction():
        store.put_post(extracted.post)
        for ordinal, (text, size) in enumerate(extracted.code_parts):
            store.put_code_part(
                CodePart(
                    post_id=row.id,
                    ordinal=ordinal,
                    code_text=text,
                    code_size=size,
                    fingerprint=fingerprint_text(text, cfg.winnow),
                    def_score=alpha,
                )
            )
        store.delete_code_parts_from(row.id, len(extracted.code_parts))
    stats.rows_ingested += 1
    stats.code_parts_stored += len(extracted.code_parts)
    return True


def run_ingest(
    posts_source: str | Path | BinaryIO,
    links_source: str | Path | BinaryIO | None,
    cfg: ReviewConfig,
    store: PostsStore,
    provider: SentimentProvider | None = None,
    batch_size: int = 1000,
) -> IngestStats:
    """Ingest a posts dump and, optionally, its links dump. Re-running is idempotent."""
    stored = store.winnow_params()
    if stored is not None and stored != cfg.winnow and store.count_code_parts():
        raise StoreError(f"store was fingerprinted with {stored}, not {cfg.winnow}")
    store.set_winnow_params(cfg.winnow)

    stats = IngestStats()
    counters = ParseCounters()
    rows = parse_posts_stream(posts_source, counters)
    while True:
        with store.transaction():
            n = 0
            for row in rows:
                ingest_post(row, cfg, store, stats, provider)
                n += 1
                if n >= batch_size:
                    break
        if n < batch_size:
            break
    stats.rows_seen += counters.skipped
    stats.rows_skipped_invalid += counters.skipped

    if links_source is not None:
        link_counters = ParseCounters()
        with store.transaction():
            for post_id, related, link_type in parse_postlinks_stream(links_source, link_counters):
                if post_id == related:
                    link_counters.self_links += 1
                    continue
                store.put_link(PostLink(post_id, related, link_type))
                stats.links_stored += 1
        stats.links_dangling = store.dangling_links()
        if stats.links_dangling:
            log.info("%d links reference posts outside the store", stats.links_dangling)

    scan = store.corpus_stats()
    stats.code_size_mean = scan.code_size_mean
    stats.code_size_min = scan.code_size_min
    stats.code_size_max = scan.code_size_max
    stats.code_size_stddev = scan.code_size_stddev
    store.save_ingest_stats(stats)
    return stats
