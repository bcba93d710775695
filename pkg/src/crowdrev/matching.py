"""Find stored code parts resembling input code and build review reports."""

from __future__ import annotations

import fnmatch
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from crowdrev.config import ConfigError, ReviewConfig
from crowdrev.scoring import aggregate_add, aggregate_final, aggregate_init, view_count_multiplier
from crowdrev.store import PostRecord, PostsStore
from crowdrev.winnow import Fingerprint, WinnowParams, code_size, fingerprint_text, match_degree

log = logging.getLogger(__name__)

BRACE_LANGUAGES = frozenset(
    "java c cpp csharp javascript typescript go php kotlin swift rust scala dart groovy".split()
)

EXTENSION_LANGUAGE = {
    ".java": "java", ".c": "c", ".h": "c", ".cc": "cpp", ".cpp": "cpp", ".cxx": "cpp",
    ".hpp": "cpp", ".hh": "cpp", ".cs": "csharp", ".js": "javascript", ".mjs": "javascript",
    ".jsx": "javascript", ".ts": "typescript", ".tsx": "typescript", ".go": "go",
    ".php": "php", ".kt": "kotlin", ".swift": "swift", ".rs": "rust", ".scala": "scala",
    ".dart": "dart", ".groovy": "groovy", ".py": "python", ".rb": "ruby", ".sql": "sql",
    ".html": "html", ".css": "css",
}

_CONTROL_WORDS = frozenset(
    "if for while switch catch synchronized return new else do try using lock foreach "
    "with when sizeof typeof elif until unless".split()
)
_HEADER = re.compile(r"([A-Za-z_$][\w$]*)\s*\((.*)\)\s*([^()]*)$", re.S)
_TOKENIZER = re.compile(r"//[^\n]*|/\*.*?(?:\*/|\Z)|\"(?:\\.|[^\"\\\n])*\"?|'(?:\\.|[^'\\\n])*'?|`(?:\\.|[^`\\])*`?", re.S)


@dataclass(frozen=True)
class BlockOrigin:
    path: str
    start_line: int
    end_line: int


@dataclass
class CodeBlock:
    text: str
    origin: BlockOrigin
    fingerprint: Fingerprint
    length: int = -1

    def __post_init__(self) -> None:
        if self.length < 0:
            self.length = code_size(self.text)

    @classmethod
    def from_text(
        cls, text: str, params: WinnowParams = WinnowParams(), path: str = "<input>",
        start_line: int = 1,
    ) -> CodeBlock:
        end = start_line + max(0, len(text.splitlines()) - 1)
        return cls(text, BlockOrigin(path, start_line, end), fingerprint_text(text, params))


@dataclass(frozen=True)
class MatchResult:
    post_id: int
    code_part_id: int
    delta_actual: float
    alpha_p: int
    block_origin: BlockOrigin


@dataclass
class BlockReport:
    origin: BlockOrigin
    n_matches: int
    alpha: int


@dataclass
class ReviewReport:
    file: str
    overall_alpha: int
    matches: list[MatchResult]
    blocks: list[BlockReport] = field(default_factory=list)
    n_matches_total: int = 0
    posts: dict[int, PostRecord] = field(default_factory=dict)


@dataclass(frozen=True)
class FileError:
    path: str
    message: str


def _mask_literals(text: str) -> str:
    """Blank out comments and string literals, keeping newlines and offsets."""
    return _TOKENIZER.sub(lambda m: re.sub(r"[^\n]", " ", m.group(0)), text)


def _is_function_header(header: str) -> bool:
    m = _HEADER.search(header.strip())
    if not m:
        return False
    name, suffix = m.group(1), m.group(3)
    if name in _CONTROL_WORDS:
        return False
    # `x = new Runnable() {` and `foo(bar) {` inside an expression are not declarations
    prefix = header.strip()[: m.start()].split()
    if prefix and (prefix[-1] == "new" or any("=" in tok for tok in prefix)):
        return False
    return "=" not in suffix and ";" not in suffix


def _function_spans(text: str) -> list[tuple[int, int]]:
    """(start_line, end_line) of brace-balanced function bodies not nested in another."""
    masked = _mask_literals(text)
    spans: list[tuple[int, int]] = []
    depth = 0
    func_depth: int | None = None
    func_start = 0
    boundary = 0
    for i, ch in enumerate(masked):
        if ch == "{":
            if func_depth is None and _is_function_header(masked[boundary:i]):
                head = masked[boundary:i]
                offset = boundary + (len(head) - len(head.lstrip()))
                func_start = masked.count("\n", 0, offset) + 1
                func_depth = depth
            depth += 1
            boundary = i + 1
        elif ch == "}":
            depth = max(0, depth - 1)
            if func_depth is not None and depth == func_depth:
                spans.append((func_start, masked.count("\n", 0, i) + 1))
                func_depth = None
            boundary = i + 1
        elif ch == ";":
            boundary = i + 1
    merged: list[tuple[int, int]] = []
    for start, end in spans:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(end, merged[-1][1]))
        else:
            merged.append((start, end))
    return merged


def split_blocks(
    source_text: str,
    language_hint: str | None = None,
    params: WinnowParams = WinnowParams(),
    path: str = "<input>",
) -> list[CodeBlock]:
    """Cut a source file into function-level blocks.

    Brace languages (or unknown ones) are scanned for ``name(...) {`` bodies;
    when none are found, or the language uses no braces, the whole file is
    one block.
    """
    if not source_text.strip():
        return []
    lines = source_text.splitlines()
    spans: list[tuple[int, int]] = []
    if language_hint is None or language_hint.lower() in BRACE_LANGUAGES:
        spans = _function_spans(source_text)
    if not spans:
        spans = [(1, len(lines))]
    return [
        CodeBlock.from_text("\n".join(lines[s - 1 : e]), params, path, s) for s, e in spans
    ]


def check_params(cfg: ReviewConfig, store: PostsStore) -> None:
    stored = store.winnow_params()
    if stored is not None and stored != cfg.winnow:
        raise ConfigError(f"store fingerprints use {stored}; review config has {cfg.winnow}")


def find_matches(
    block: CodeBlock,
    cfg: ReviewConfig,
    store: PostsStore,
    exclude_part_ids: frozenset[int] | set[int] = frozenset(),
) -> list[MatchResult]:
    """Stored parts within the size window whose fingerprint overlap reaches ``cfg.delta``."""
    if len(block.fingerprint) == 0:
        log.info("block %s has an empty fingerprint; nothing to match", block.origin)
        return []
    lo, hi = cfg.size_window(block.length)
    out = []
    for part in store.scan_code_parts(lo, hi):
        if part.id in exclude_part_ids:
            continue
        d = match_degree(block.fingerprint, part.fingerprint)
        if d >= cfg.delta:
            out.append(MatchResult(part.post_id, part.id, d, part.def_score, block.origin))
    out.sort(key=lambda m: (-m.delta_actual, m.post_id, m.code_part_id))
    return out


def review_source(
    source_text: str,
    cfg: ReviewConfig,
    store: PostsStore,
    path: str = "<input>",
    language_hint: str | None = None,
) -> ReviewReport:
    """Match every block of a source file and fold the scores into one verdict."""
    check_params(cfg, store)
    blocks = split_blocks(source_text, language_hint, cfg.winnow, path)
    state = aggregate_init()
    matches: list[MatchResult] = []
    block_reports = []
    posts: dict[int, PostRecord] = {}
    for block in blocks:
        found = find_matches(block, cfg, store)
        block_state = aggregate_init()
        for m in found:
            if m.post_id not in posts:
                posts[m.post_id] = store.get_post(m.post_id)
            mult = view_count_multiplier(posts[m.post_id].view_count) if cfg.viewcount_weighting else 1.0
            aggregate_add(state, m.alpha_p, m.delta_actual / 100.0, mult)
            aggregate_add(block_state, m.alpha_p, m.delta_actual / 100.0, mult)
        block_reports.append(BlockReport(block.origin, len(found), aggregate_final(block_state)))
        matches.extend(found)
    matches.sort(
        key=lambda m: (-m.delta_actual, m.post_id, m.code_part_id, m.block_origin.start_line)
    )
    shown = matches[: cfg.top_k]
    return ReviewReport(
        file=path,
        overall_alpha=aggregate_final(state),
        matches=shown,
        blocks=block_reports,
        n_matches_total=len(matches),
        posts={pid: p for pid, p in posts.items() if any(m.post_id == pid for m in shown)},
    )


def language_for(path: Path) -> str | None:
    return EXTENSION_LANGUAGE.get(path.suffix.lower())


def review_file(path: str | Path, cfg: ReviewConfig, store: PostsStore) -> ReviewReport:
    p = Path(path)
    text = p.read_bytes().decode("utf-8")
    return review_source(text, cfg, store, str(p), language_for(p))


def review_tree(
    root: str | Path,
    cfg: ReviewConfig,
    store: PostsStore,
    include: str = "*",
    errors: list[FileError] | None = None,
) -> list[ReviewReport]:
    """Review every file under ``root`` whose name matches ``include``, each on its own.

    Unreadable or non-UTF-8 files are skipped and recorded in ``errors``.
    """
    root = Path(root)
    if root.is_file():
        files = [root]
    else:
        files = sorted(
            p for p in root.rglob("*")
            if p.is_file()
            and fnmatch.fnmatch(p.name, include)
            and not any(part.startswith(".") for part in p.relative_to(root).parts)
        )
    reports = []
    for f in files:
        try:
            reports.append(review_file(f, cfg, store))
        except (OSError, UnicodeDecodeError) as exc:
            log.warning("skipping %s: %s", f, exc)
            if errors is not None:
                errors.append(FileError(str(f), str(exc)))
    return reports


# Field order of match records in the JSON-lines report.
MATCH_FIELDS = (
    "file", "post_id", "post_title", "post_type", "score", "view_count",
    "delta_actual", "alpha_p", "block_start", "block_end", "code_part_id",
)
FILE_FIELDS = ("file", "overall_alpha", "n_blocks", "n_matches", "n_shown")


def report_records(report: ReviewReport) -> list[dict]:
    """One ``file`` record followed by one ``match`` record per shown match."""
    records = [
        {"kind": "file", **dict(zip(FILE_FIELDS, (
            report.file, report.overall_alpha, len(report.blocks),
            report.n_matches_total, len(report.matches),
        )))}
    ]
    for m in report.matches:
        post = report.posts.get(m.post_id)
        values = (
            report.file, m.post_id, post.title if post else "",
            post.post_type.name.lower() if post else "",
            post.score if post else None, post.view_count if post else None,
            round(m.delta_actual, 4), m.alpha_p,
            m.block_origin.start_line, m.block_origin.end_line, m.code_part_id,
        )
        records.append({"kind": "match", **dict(zip(MATCH_FIELDS, values))})
    return records


def to_jsonl(reports: list[ReviewReport]) -> str:
    return "".join(
        json.dumps(rec, ensure_ascii=False) + "\n" for r in reports for rec in report_records(r)
    )


_VERDICT = {-1: "likely defective", 0: "neutral", 1: "unlikely to be defective"}


def render_text(report: ReviewReport) -> str:
    lines = [
        f"{report.file}: {_VERDICT[report.overall_alpha]} (alpha={report.overall_alpha:+d}, "
        f"{report.n_matches_total} matches over {len(report.blocks)} blocks)"
    ]
    for m in report.matches:
        post = report.posts.get(m.post_id)
        title = (post.title or "(answer)") if post else ""
        kind = post.post_type.name.lower() if post else "?"
        lines.append(
            f"  {m.delta_actual:6.2f}%  post {m.post_id} [{kind}, score "
            f"{post.score if post else '?'}] alpha={m.alpha_p:+d}  "
            f"lines {m.block_origin.start_line}-{m.block_origin.end_line}  {title}"
        )
    return "\n".join(lines)
