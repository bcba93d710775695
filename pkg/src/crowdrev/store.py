"""PostsDB: posts, their code parts, and links between posts (sqlite3)."""

from __future__ import annotations

import csv
import enum
import json
import math
import sqlite3
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterator

from crowdrev.winnow import Fingerprint, WinnowParams

DB_FILENAME = "posts.sqlite"

_SCHEMA = """
CREATE TABLE IF NOT EXISTS post (
    id INTEGER PRIMARY KEY,
    post_type INTEGER NOT NULL CHECK (post_type IN (1, 2)),
    parent_id INTEGER,
    accepted_answer_id INTEGER,
    score INTEGER NOT NULL,
    view_count INTEGER NOT NULL CHECK (view_count >= 0),
    title TEXT NOT NULL,
    tags TEXT NOT NULL,
    narrative TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS codepart (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    post_id INTEGER NOT NULL REFERENCES post(id),
    ordinal INTEGER NOT NULL,
    code_text TEXT NOT NULL,
    code_size INTEGER NOT NULL,
    fingerprint BLOB NOT NULL,
    def_score INTEGER NOT NULL CHECK (def_score IN (-1, 0, 1)),
    UNIQUE (post_id, ordinal)
);
CREATE INDEX IF NOT EXISTS codepart_size ON codepart (code_size);
CREATE TABLE IF NOT EXISTS postlink (
    post_id INTEGER NOT NULL,
    related_post_id INTEGER NOT NULL,
    link_type INTEGER NOT NULL CHECK (link_type IN (1, 3)),
    CHECK (post_id != related_post_id),
    PRIMARY KEY (post_id, related_post_id, link_type)
);
CREATE INDEX IF NOT EXISTS postlink_related ON postlink (related_post_id);
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""

# CSV export column order.
POST_COLUMNS = (
    "id", "post_type", "parent_id", "accepted_answer_id", "score",
    "view_count", "title", "tags", "narrative",
)
CODEPART_COLUMNS = (
    "id", "post_id", "ordinal", "code_size", "def_score", "fingerprint_hex", "code_text",
)
POSTLINK_COLUMNS = ("post_id", "related_post_id", "link_type")


class StoreError(Exception):
    """Base class for store failures."""


class ConstraintError(StoreError):
    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        super().__init__(f"constraint {constraint} violated" + (f": {detail}" if detail else ""))


class NotFoundError(StoreError, KeyError):
    pass


class PostType(enum.IntEnum):
    QUESTION = 1
    ANSWER = 2


class LinkType(enum.IntEnum):
    RELATED = 1
    DUPLICATE = 3


@dataclass
class PostRecord:
    id: int
    post_type: PostType
    score: int = 0
    view_count: int = 0
    parent_id: int | None = None
    accepted_answer_id: int | None = None
    title: str = ""
    tags: list[str] = field(default_factory=list)
    narrative: str = ""

    def __post_init__(self) -> None:
        self.post_type = PostType(self.post_type)


@dataclass
class CodePart:
    post_id: int
    code_text: str
    code_size: int
    fingerprint: Fingerprint
    def_score: int
    ordinal: int = 0
    id: int | None = None


@dataclass(frozen=True)
class PostLink:
    post_id: int
    related_post_id: int
    link_type: LinkType


@dataclass
class IngestStats:
    rows_seen: int = 0
    rows_ingested: int = 0
    code_parts_stored: int = 0
    rows_skipped_no_code: int = 0
    rows_skipped_small_code: int = 0
    rows_skipped_type: int = 0
    rows_skipped_invalid: int = 0
    links_stored: int = 0
    links_dangling: int = 0
    code_size_mean: float | None = None
    code_size_min: int | None = None
    code_size_max: int | None = None
    code_size_stddev: float | None = None

    @property
    def rows_skipped(self) -> int:
        return (
            self.rows_skipped_no_code
            + self.rows_skipped_small_code
            + self.rows_skipped_type
            + self.rows_skipped_invalid
        )

    @property
    def moments_defined(self) -> bool:
        return self.code_parts_stored > 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def resolve_db_path(path: str | Path) -> Path:
    """A directory (existing or ending in a separator) holds ``posts.sqlite``."""
    p = Path(path)
    if p.suffix in (".sqlite", ".db", ".sqlite3"):
        return p
    return p / DB_FILENAME


class PostsStore:
    """Single writer, many readers. Open with :meth:`open` or as a context manager."""

    def __init__(self, path: str | Path = ":memory:"):
        if str(path) == ":memory:":
            self.path = None
            target = ":memory:"
        else:
            self.path = resolve_db_path(path)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            target = str(self.path)
        self._conn = sqlite3.connect(target, isolation_level=None)
        self._conn.execute("PRAGMA foreign_keys = ON")
        if self.path is not None:
            self._conn.execute("PRAGMA journal_mode = WAL")
            self._conn.execute("PRAGMA synchronous = NORMAL")
        self._conn.executescript(_SCHEMA)
        self._depth = 0

    @classmethod
    def open(cls, path: str | Path) -> PostsStore:
        return cls(path)

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> PostsStore:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @contextmanager
    def transaction(self) -> Iterator[None]:
        """All-or-nothing block; nests via savepoints."""
        name = f"sp{self._depth}"
        self._conn.execute("BEGIN" if self._depth == 0 else f"SAVEPOINT {name}")
        self._depth += 1
        try:
            yield
        except BaseException:
            self._depth -= 1
            if self._depth == 0:
                self._conn.execute("ROLLBACK")
            else:
                self._conn.execute(f"ROLLBACK TO {name}")
                self._conn.execute(f"RELEASE {name}")
            raise
        else:
            self._depth -= 1
            self._conn.execute("COMMIT" if self._depth == 0 else f"RELEASE {name}")

    # -- writes ---------------------------------------------------------

    def put_post(self, p: PostRecord) -> int:
        if p.id <= 0:
            raise ConstraintError("post.id_positive", f"id={p.id}")
        if p.post_type == PostType.ANSWER and p.parent_id is None:
            raise ConstraintError("post.answer_has_parent", f"id={p.id}")
        if p.post_type == PostType.QUESTION and p.parent_id is not None:
            raise ConstraintError("post.question_has_no_parent", f"id={p.id}")
        if p.view_count < 0:
            raise ConstraintError("post.view_count_non_negative", f"id={p.id}")
        self._conn.execute(
            """INSERT INTO post (id, post_type, parent_id, accepted_answer_id, score,
                                 view_count, title, tags, narrative)
               VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
               ON CONFLICT (id) DO UPDATE SET
                 post_type = excluded.post_type, parent_id = excluded.parent_id,
                 accepted_answer_id = excluded.accepted_answer_id, score = excluded.score,
                 view_count = excluded.view_count, title = excluded.title,
                 tags = excluded.tags, narrative = excluded.narrative""",
            (
                p.id, int(p.post_type), p.parent_id, p.accepted_answer_id, p.score,
                p.view_count, p.title, json.dumps(p.tags), p.narrative,
            ),
        )
        return p.id

    def put_code_part(self, c: CodePart) -> int:
        """Upsert by (post_id, ordinal); the surrogate id is kept on update."""
        if c.def_score not in (-1, 0, 1):
            raise ConstraintError("codepart.def_score_level", f"def_score={c.def_score}")
        try:
            row = self._conn.execute(
                """INSERT INTO codepart (post_id, ordinal, code_text, code_size,
                                         fingerprint, def_score)
                   VALUES (?, ?, ?, ?, ?, ?)
                   ON CONFLICT (post_id, ordinal) DO UPDATE SET
                     code_text = excluded.code_text, code_size = excluded.code_size,
                     fingerprint = excluded.fingerprint, def_score = excluded.def_score
                   RETURNING id""",
                (
                    c.post_id, c.ordinal, c.code_text, c.code_size,
                    c.fingerprint.to_bytes(), c.def_score,
                ),
            ).fetchone()
        except sqlite3.IntegrityError as exc:
            if "FOREIGN KEY" in str(exc):
                raise ConstraintError("codepart.post_id_fk", f"no post {c.post_id}") from exc
            raise ConstraintError("codepart", str(exc)) from exc
        c.id = row[0]
        return c.id

    def delete_code_parts_from(self, post_id: int, ordinal: int) -> None:
        """Drop a post's code parts with ordinal >= ``ordinal``."""
        self._conn.execute(
            "DELETE FROM codepart WHERE post_id = ? AND ordinal >= ?", (post_id, ordinal)
        )

    def put_link(self, link: PostLink) -> tuple[int, int, int]:
        """Store a link. Endpoints outside the stored posts are allowed; see
        :meth:`dangling_links`."""
        if link.post_id == link.related_post_id:
            raise ConstraintError("postlink.no_self_link", f"post {link.post_id}")
        self._conn.execute(
            "INSERT OR IGNORE INTO postlink (post_id, related_post_id, link_type) VALUES (?, ?, ?)",
            (link.post_id, link.related_post_id, int(link.link_type)),
        )
        return (link.post_id, link.related_post_id, int(link.link_type))

    def set_meta(self, key: str, value: str) -> None:
        self._conn.execute(
            "INSERT INTO meta (key, value) VALUES (?, ?) "
            "ON CONFLICT (key) DO UPDATE SET value = excluded.value",
            (key, value),
        )

    def get_meta(self, key: str) -> str | None:
        row = self._conn.execute("SELECT value FROM meta WHERE key = ?", (key,)).fetchone()
        return None if row is None else row[0]

    def set_winnow_params(self, params: WinnowParams) -> None:
        self.set_meta(
            "winnow_params",
            json.dumps({"k": params.k, "w": params.w, "strip_punctuation": params.strip_punctuation}),
        )

    def winnow_params(self) -> WinnowParams | None:
        raw = self.get_meta("winnow_params")
        return None if raw is None else WinnowParams(**json.loads(raw))

    # -- reads ----------------------------------------------------------

    @staticmethod
    def _post_from_row(row) -> PostRecord:
        return PostRecord(
            id=row[0], post_type=PostType(row[1]), parent_id=row[2],
            accepted_answer_id=row[3], score=row[4], view_count=row[5],
            title=row[6], tags=json.loads(row[7]), narrative=row[8],
        )

    @staticmethod
    def _part_from_row(row) -> CodePart:
        return CodePart(
            id=row[0], post_id=row[1], ordinal=row[2], code_text=row[3],
            code_size=row[4], fingerprint=Fingerprint.from_bytes(row[5]), def_score=row[6],
        )

    _PART_SELECT = (
        "SELECT id, post_id, ordinal, code_text, code_size, fingerprint, def_score FROM codepart"
    )
    _POST_SELECT = (
        "SELECT id, post_type, parent_id, accepted_answer_id, score, view_count, "
        "title, tags, narrative FROM post"
    )

    def get_post(self, post_id: int) -> PostRecord:
        row = self._conn.execute(self._POST_SELECT + " WHERE id = ?", (post_id,)).fetchone()
        if row is None:
            raise NotFoundError(f"post {post_id}")
        return self._post_from_row(row)

    def has_post(self, post_id: int) -> bool:
        return self._conn.execute("SELECT 1 FROM post WHERE id = ?", (post_id,)).fetchone() is not None

    def iter_posts(self) -> Iterator[PostRecord]:
        for row in self._conn.execute(self._POST_SELECT + " ORDER BY id").fetchall():
            yield self._post_from_row(row)

    def get_code_part(self, part_id: int) -> CodePart:
        row = self._conn.execute(self._PART_SELECT + " WHERE id = ?", (part_id,)).fetchone()
        if row is None:
            raise NotFoundError(f"code part {part_id}")
        return self._part_from_row(row)

    def get_code_parts(self, post_id: int) -> list[CodePart]:
        if not self.has_post(post_id):
            raise NotFoundError(f"post {post_id}")
        rows = self._conn.execute(
            self._PART_SELECT + " WHERE post_id = ? ORDER BY ordinal", (post_id,)
        ).fetchall()
        return [self._part_from_row(r) for r in rows]

    def scan_code_parts(self, size_low: float = 0, size_high: float = math.inf) -> Iterator[CodePart]:
        """Code parts with ``size_low <= code_size <= size_high``, via the size index."""
        if size_low > size_high:
            raise ValueError(f"size_low {size_low} > size_high {size_high}")
        cur = self._conn.execute(
            self._PART_SELECT + " WHERE code_size BETWEEN ? AND ? ORDER BY code_size, id",
            (size_low, size_high),
        )
        for row in cur.fetchall():
            yield self._part_from_row(row)

    def get_duplicates(self, post_id: int) -> list[int]:
        """Posts linked to ``post_id`` as duplicates, in either direction."""
        rows = self._conn.execute(
            """SELECT related_post_id FROM postlink WHERE post_id = ? AND link_type = 3
               UNION
               SELECT post_id FROM postlink WHERE related_post_id = ? AND link_type = 3
               ORDER BY 1""",
            (post_id, post_id),
        ).fetchall()
        return [r[0] for r in rows]

    def iter_links(self, link_type: LinkType | None = None) -> Iterator[PostLink]:
        sql = "SELECT post_id, related_post_id, link_type FROM postlink"
        args: tuple = ()
        if link_type is not None:
            sql += " WHERE link_type = ?"
            args = (int(link_type),)
        sql += " ORDER BY post_id, related_post_id, link_type"
        for row in self._conn.execute(sql, args).fetchall():
            yield PostLink(row[0], row[1], LinkType(row[2]))

    def dangling_links(self) -> int:
        """Links with at least one endpoint not among the stored posts."""
        return self._conn.execute(
            """SELECT COUNT(*) FROM postlink l
               WHERE NOT EXISTS (SELECT 1 FROM post WHERE id = l.post_id)
                  OR NOT EXISTS (SELECT 1 FROM post WHERE id = l.related_post_id)"""
        ).fetchone()[0]

    def count_code_parts(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM codepart").fetchone()[0]

    def corpus_stats(self) -> IngestStats:
        """Counters from the last ingest plus code-size moments over all parts.

        The standard deviation is the population one. With no parts the
        moments stay ``None``.
        """
        raw = self.get_meta("ingest_stats")
        stats = IngestStats(**json.loads(raw)) if raw else IngestStats()
        n, s1, s2, lo, hi = self._conn.execute(
            "SELECT COUNT(*), SUM(code_size), SUM(code_size * code_size), "
            "MIN(code_size), MAX(code_size) FROM codepart"
        ).fetchone()
        stats.code_parts_stored = n
        if n == 0:
            stats.code_size_mean = stats.code_size_min = None
            stats.code_size_max = stats.code_size_stddev = None
            return stats
        stats.code_size_mean = s1 / n
        stats.code_size_min = lo
        stats.code_size_max = hi
        # exact integer numerator: n^2 * variance = n*S2 - S1^2
        stats.code_size_stddev = math.sqrt(max(0, n * s2 - s1 * s1)) / n
        return stats

    def save_ingest_stats(self, stats: IngestStats) -> None:
        self.set_meta("ingest_stats", json.dumps(stats.as_dict(), sort_keys=True))

    # -- export ---------------------------------------------------------

    def export(self, directory: str | Path) -> list[Path]:
        """Write ``post.csv``, ``codepart.csv`` and ``postlink.csv`` (UTF-8)."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def dump(name: str, header: tuple[str, ...], rows) -> None:
            path = out / name
            with path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
            written.append(path)

        dump(
            "post.csv",
            POST_COLUMNS,
            (
                [p.id, int(p.post_type), _blank(p.parent_id), _blank(p.accepted_answer_id),
                 p.score, p.view_count, p.title, " ".join(p.tags), p.narrative]
                for p in self.iter_posts()
            ),
        )
        dump(
            "codepart.csv",
            CODEPART_COLUMNS,
            (
                [r[0], r[1], r[2], r[4], r[6], bytes(r[5]).hex(), r[3]]
                for r in self._conn.execute(self._PART_SELECT + " ORDER BY id").fetchall()
            ),
        )
        dump(
            "postlink.csv",
            POSTLINK_COLUMNS,
            ([lk.post_id, lk.related_post_id, int(lk.link_type)] for lk in self.iter_links()),
        )
        return written


def _blank(v: int | None) -> str | int:
    return "" if v is None else v
