"""Verification runs, evaluation metrics and the synthetic mismatch experiment."""

from __future__ import annotations

import csv
import logging
import math
import random
import re
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from crowdrev.config import ReviewConfig
from crowdrev.matching import BlockOrigin, CodeBlock, find_matches
from crowdrev.scoring import SentimentProvider, score_post, sentiment_alpha
from crowdrev.store import CodePart, LinkType, PostLink, PostRecord, PostsStore, PostType
from crowdrev.synth import (
    CODE_ALPHABET,
    NOISE_ALPHABET,
    CodeGenerator,
    code_filler,
    noise_filler,
    random_string,
    replace_regions,
)
from crowdrev.winnow import WinnowParams, code_size, fingerprint_text, match_degree

log = logging.getLogger(__name__)

# Mean and stddev of code part size in a full-scale forum dump.
CODE_SIZE_MEAN = 2216.0
CODE_SIZE_STDDEV = 2110.0

_TOKEN = re.compile(r"[A-Za-z0-9]+")


class MetricUndefined(ValueError):
    """A metric was asked for on an empty population."""


@dataclass(frozen=True)
class VerificationInput:
    part: CodePart
    expected_duplicate_id: int | None = None


@dataclass(frozen=True)
class VerificationRecord:
    input_part_id: int
    input_post_id: int
    expected_duplicate_id: int | None
    psi: int
    matched_post_id: int
    delta_actual: float
    is_relevant: bool
    matched_part_id: int = -1


@dataclass
class VerificationRun:
    records: list[VerificationRecord]
    match_counts: list[int]  # |M_i| per input, in input order
    missed_duplicates: list[int] = field(default_factory=list)  # input part ids

    @property
    def n_inputs(self) -> int:
        return len(self.match_counts)


@dataclass(frozen=True)
class Stat:
    avg: float
    min: float
    max: float
    stddev: float

    @classmethod
    def of(cls, values: Sequence[float]) -> Stat | None:
        if not values:
            return None
        values = [float(v) for v in values]
        return cls(
            statistics.fmean(values), min(values), max(values), statistics.pstdev(values)
        )


@dataclass
class MetricsSummary:
    omega: float
    precision: float | None
    gamma: float | None
    n_inputs: int
    n_inputs_with_match: int
    stats: dict[str, Stat | None] = field(default_factory=dict)


@dataclass(frozen=True)
class SynthCurvePoint:
    psi_diff: float
    delta_actual_mean: float
    delta_actual_stddev: float
    n_trials: int

    def __post_init__(self) -> None:
        if not 0 <= self.psi_diff <= 100:
            raise ValueError(f"psi_diff must be in [0, 100], got {self.psi_diff}")


# -- sampling and verification ----------------------------------------------


def sample_inputs(
    store: PostsStore,
    n: int,
    psi_min: float = 0,
    psi_max: float = math.inf,
    seed: int = 0,
) -> tuple[list[VerificationInput], list[VerificationInput]]:
    """Seeded draw of unique inputs and duplicate-pair inputs.

    Unique inputs are code parts of posts with no duplicate link in either
    direction. Duplicate inputs come from stored duplicate links
    ``post -> related``: a part of ``post`` whose ``related`` is in the store.
    ``n <= 0`` takes every qualifying part.
    """
    if psi_min > psi_max:
        raise ValueError(f"psi_min {psi_min} > psi_max {psi_max}")
    in_window = list(store.scan_code_parts(psi_min, psi_max))
    in_window.sort(key=lambda p: p.id)
    dup_posts: set[int] = set()
    links = sorted(
        (lk.post_id, lk.related_post_id) for lk in store.iter_links(LinkType.DUPLICATE)
    )
    for a, b in links:
        dup_posts.update((a, b))

    unique = [VerificationInput(p) for p in in_window if p.post_id not in dup_posts]
    by_post: dict[int, list[CodePart]] = {}
    for p in in_window:
        by_post.setdefault(p.post_id, []).append(p)
    dups = [
        VerificationInput(by_post[a][0], b)
        for a, b in links
        if a in by_post and store.has_post(b)
    ]
    rng = random.Random(seed)
    return _take(unique, n, rng, "unique"), _take(dups, n, rng, "duplicate")


def _take(items: list, n: int, rng: random.Random, what: str) -> list:
    if n <= 0:
        return list(items)
    if len(items) < n:
        log.warning("only %d qualifying %s inputs, %d requested", len(items), what, n)
        return list(items)
    return sorted(rng.sample(items, n), key=lambda i: i.part.id)


def run_verification(
    inputs: Iterable[VerificationInput],
    cfg: ReviewConfig,
    store: PostsStore,
    oracle_threshold: float = 0.5,
) -> VerificationRun:
    """Match every input part against the store and judge each match by tokens.

    The input's own part is never a match. A post matched through several
    of its parts yields one record, the one with the highest degree.
    """
    records: list[VerificationRecord] = []
    counts: list[int] = []
    missed: list[int] = []
    for inp in inputs:
        part = inp.part
        block = CodeBlock(
            part.code_text, BlockOrigin(f"part:{part.id}", 1, 1), part.fingerprint, part.code_size
        )
        seen: set[int] = set()
        for m in find_matches(block, cfg, store, exclude_part_ids={part.id}):
            if m.post_id in seen:
                continue
            seen.add(m.post_id)
            other = store.get_code_part(m.code_part_id)
            records.append(
                VerificationRecord(
                    input_part_id=part.id,
                    input_post_id=part.post_id,
                    expected_duplicate_id=inp.expected_duplicate_id,
                    psi=part.code_size,
                    matched_post_id=m.post_id,
                    delta_actual=m.delta_actual,
                    is_relevant=token_oracle(part.code_text, other.code_text, oracle_threshold),
                    matched_part_id=m.code_part_id,
                )
            )
        counts.append(len(seen))
        if inp.expected_duplicate_id is not None and inp.expected_duplicate_id not in seen:
            missed.append(part.id)
    return VerificationRun(records, counts, missed)


# -- metrics ----------------------------------------------------------------


def compute_omega(matches: Sequence[int] | Sequence[VerificationRecord], n_inputs: int) -> float:
    """Average matched posts per input.

    ``matches`` is either the per-input match counts or the flat list of
    verification records (one per matched post).
    """
    if n_inputs <= 0:
        raise ValueError(f"n_inputs must be positive, got {n_inputs}")
    total = sum(1 if isinstance(m, VerificationRecord) else int(m) for m in matches)
    return total / n_inputs


def tokens(code: str) -> Counter[str]:
    return Counter(t.lower() for t in _TOKEN.findall(code))


def token_jaccard(code_a: str, code_b: str) -> float:
    """Jaccard similarity of the two token multisets."""
    a, b = tokens(code_a), tokens(code_b)
    union = sum((a | b).values())
    if union == 0:
        return 1.0
    return sum((a & b).values()) / union


def token_oracle(code_a: str, code_b: str, threshold: float = 0.5) -> bool:
    """Relevance verdict used to count false positives. Inclusive at ``threshold``."""
    return token_jaccard(code_a, code_b) >= threshold


def compute_precision(
    records: Sequence[VerificationRecord] | None = None,
    *,
    tp: int | None = None,
    fp: int | None = None,
) -> float:
    """tp / (tp + fp), from oracle-judged records or from explicit counts."""
    if records is not None:
        if tp is not None or fp is not None:
            raise TypeError("pass records or tp/fp, not both")
        tp = sum(r.is_relevant for r in records)
        fp = len(records) - tp
    tp, fp = tp or 0, fp or 0
    if tp < 0 or fp < 0:
        raise ValueError("tp and fp must be non-negative")
    if tp + fp == 0:
        raise MetricUndefined("precision is undefined with no matches")
    return tp / (tp + fp)


def compute_gamma(
    posts: Sequence[PostRecord],
    provider_a: SentimentProvider,
    provider_b: SentimentProvider,
    s_threshold: int | None = None,
    neutral_band: float = 0.2,
) -> float:
    """Share of posts whose score under ``provider_a`` equals the reference under ``provider_b``.

    The reference is always sentiment-only. Side A is sentiment-only too,
    unless ``s_threshold`` is given, in which case it is the full per-post
    score (metadata first, sentiment for neutral posts).
    """
    if not posts:
        raise MetricUndefined("gamma is undefined over an empty post set")
    agree = 0
    for p in posts:
        if s_threshold is None:
            a = sentiment_alpha(provider_a.score(p.narrative), neutral_band)
        else:
            a = score_post(p, s_threshold, neutral_band, provider_a)
        agree += a == sentiment_alpha(provider_b.score(p.narrative), neutral_band)
    return agree / len(posts)


def summarize(run: VerificationRun, gamma: float | None = None) -> MetricsSummary:
    by_input: dict[int, list[VerificationRecord]] = {}
    for r in run.records:
        by_input.setdefault(r.input_part_id, []).append(r)
    per_input_precision = [
        sum(r.is_relevant for r in rs) / len(rs) for rs in by_input.values()
    ]
    try:
        precision = compute_precision(run.records)
    except MetricUndefined:
        precision = None
    return MetricsSummary(
        omega=compute_omega(run.match_counts, run.n_inputs) if run.n_inputs else 0.0,
        precision=precision,
        gamma=gamma,
        n_inputs=run.n_inputs,
        n_inputs_with_match=sum(1 for c in run.match_counts if c),
        stats={
            "delta_actual": Stat.of([r.delta_actual for r in run.records]),
            "psi": Stat.of(sorted({r.input_part_id: r.psi for r in run.records}.values())),
            "omega": Stat.of([float(c) for c in run.match_counts]),
            "precision": Stat.of(per_input_precision),
        },
    )


# -- synthetic mismatch experiment ------------------------------------------


def synthetic_length(
    rng: random.Random,
    mean: float = CODE_SIZE_MEAN,
    stddev: float = CODE_SIZE_STDDEV,
    low: int = 1,
    high: int | None = None,
) -> int:
    n = max(low, round(rng.gauss(mean, stddev)))
    return n if high is None else min(n, high)


def synth_mismatch_experiment(
    params: WinnowParams | ReviewConfig = WinnowParams(),
    trials: int = 100,
    grid: Sequence[float] = tuple(range(0, 101, 10)),
    seed: int = 0,
    code_alphabet: str = CODE_ALPHABET,
    noise_alphabet: str = NOISE_ALPHABET,
    length_mean: float = CODE_SIZE_MEAN,
    length_stddev: float = CODE_SIZE_STDDEV,
    n_regions: int | None = None,
) -> list[SynthCurvePoint]:
    """Fingerprint match between a random code string and a copy with noise regions.

    For each grid value, ``trials`` pairs are drawn: C1 is a random string
    over ``code_alphabet``; C2 overwrites randomly placed regions, whose
    lengths add up to ``psi_diff`` percent of C1, with ``noise_alphabet``
    strings. Regions are placed independently and may overlap. Each grid
    point has its own random stream, so adding grid values leaves the
    others unchanged.
    """
    if isinstance(params, ReviewConfig):
        params = params.winnow
    if set(code_alphabet) & set(noise_alphabet):
        raise ValueError("code and noise alphabets must be disjoint")
    if any(ch.isspace() for ch in code_alphabet + noise_alphabet):
        raise ValueError("alphabets must not contain whitespace")
    if trials < 30:
        raise ValueError(f"at least 30 trials per point are needed, got {trials}")
    points = []
    for psi in grid:
        if not 0 <= psi <= 100:
            raise ValueError(f"grid values must be in [0, 100], got {psi}")
        rng = random.Random(f"{seed}:{psi!r}")
        noise = noise_filler(rng, noise_alphabet)
        deltas = []
        for _ in range(trials):
            n = synthetic_length(rng, length_mean, length_stddev, low=params.k)
            c1 = random_string(rng, code_alphabet, n)
            c2 = replace_regions(c1, psi / 100.0, rng, noise, n_regions, overlap=True)
            deltas.append(match_degree(fingerprint_text(c1, params), fingerprint_text(c2, params)))
        points.append(
            SynthCurvePoint(float(psi), statistics.fmean(deltas), statistics.pstdev(deltas), trials)
        )
    return points


def curve_violations(points: Sequence[SynthCurvePoint]) -> list[tuple[float, float]]:
    """Adjacent grid pairs where the mean rises by more than one pooled stddev."""
    bad = []
    for a, b in zip(points, points[1:]):
        pooled = math.sqrt((a.delta_actual_stddev**2 + b.delta_actual_stddev**2) / 2)
        if b.delta_actual_mean - a.delta_actual_mean > pooled:
            bad.append((a.psi_diff, b.psi_diff))
    return bad


# -- CSV output -------------------------------------------------------------

VERIFICATION_COLUMNS = (
    "input_part_id", "input_post_id", "expected_dup_id", "psi",
    "matched_post_id", "delta_actual", "is_relevant",
)
CURVE_COLUMNS = ("psi_diff", "mean_delta", "stddev_delta", "n_trials")
SUMMARY_COLUMNS = ("metric", "avg", "min", "max", "stddev")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _rows(obj) -> tuple[tuple[str, ...], list[tuple]]:
    if isinstance(obj, MetricsSummary):
        rows = []
        for name, st in obj.stats.items():
            rows.append((name, *(None,) * 4) if st is None else (name, st.avg, st.min, st.max, st.stddev))
        return SUMMARY_COLUMNS, rows
    items = list(obj)
    if items and isinstance(items[0], SynthCurvePoint):
        return CURVE_COLUMNS, [
            (p.psi_diff, p.delta_actual_mean, p.delta_actual_stddev, p.n_trials) for p in items
        ]
    return VERIFICATION_COLUMNS, [
        (r.input_part_id, r.input_post_id, r.expected_duplicate_id, r.psi,
         r.matched_post_id, float(r.delta_actual), r.is_relevant)
        for r in items
    ]


def write_csv(obj, fh) -> None:
    """Write records, a summary or a curve as CSV to an open text stream."""
    header, rows = _rows(obj)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([_cell(v) for v in row] for row in rows)


def emit_csv(obj, path: str | Path) -> Path:
    """UTF-8 CSV with a header row; floats carry 4 decimals. An empty list
    is written as a header-only verification file."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        write_csv(obj, fh)
    return path


# -- seeded fixture corpora -------------------------------------------------


@dataclass(frozen=True)
class PlantedQuery:
    text: str
    expected_part_id: int
    kind: str


@dataclass
class SeededCorpus:
    store: PostsStore
    queries: list[PlantedQuery] = field(default_factory=list)
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (original post, duplicate post)
    decoy_posts: list[int] = field(default_factory=list)


class _CorpusWriter:
    def __init__(self, store: PostsStore, cfg: ReviewConfig, rng: random.Random):
        self.store, self.cfg, self.rng = store, cfg, rng
        self.next_id = 1 + max((p.id for p in store.iter_posts()), default=0)
        store.set_winnow_params(cfg.winnow)

    def add(self, text: str) -> CodePart:
        rng = self.rng
        post = PostRecord(
            id=self.next_id,
            post_type=PostType.QUESTION,
            score=rng.randint(-2, 30),
            view_count=rng.randint(0, 50_000),
            title=f"synthetic post {self.next_id}",
        )
        self.next_id += 1
        self.store.put_post(post)
        part = CodePart(
            post_id=post.id,
            code_text=text,
            code_size=code_size(text),
            fingerprint=fingerprint_text(text, self.cfg.winnow),
            def_score=score_post(post, self.cfg.s_threshold, self.cfg.neutral_band),
        )
        part.id = self.store.put_code_part(part)
        return part


def _near_copy(text: str, fraction: float, rng: random.Random, gen: CodeGenerator, regions: int) -> str:
    return replace_regions(text, fraction, rng, code_filler(gen), n_regions=regions)


def _doc_length(rng: random.Random, cfg: ReviewConfig) -> int:
    lo = max(cfg.min_code_size, 1)
    return synthetic_length(rng, low=lo, high=int(4 * CODE_SIZE_MEAN))


def build_planted_corpus(
    store: PostsStore,
    cfg: ReviewConfig = ReviewConfig(),
    seed: int = 0,
    n_parts: int = 500,
    n_exact: int = 25,
    n_replaced: int = 25,
    replaced_fraction: float = 0.5,
) -> SeededCorpus:
    """Background code plus planted pairs: exact copies and copies with a
    fixed share of their text replaced by unrelated code.

    Queries carry the copy's text and expect the original's part id.
    """
    rng = random.Random(seed)
    gen = CodeGenerator(rng)
    filler_gen = CodeGenerator(random.Random(seed + 1))
    w = _CorpusWriter(store, cfg, rng)
    out = SeededCorpus(store)
    n_background = n_parts - 2 * (n_exact + n_replaced)
    if n_background < 0:
        raise ValueError("n_parts too small for the planted pairs")
    with store.transaction():
        for kind, count in (("exact", n_exact), ("replaced", n_replaced)):
            for _ in range(count):
                original = gen.document(_doc_length(rng, cfg))
                copy = original if kind == "exact" else replace_regions(
                    original, replaced_fraction, rng, code_filler(filler_gen)
                )
                a = w.add(original)
                b = w.add(copy)
                out.pairs.append((a.post_id, b.post_id))
                out.queries.append(PlantedQuery(copy, a.id, kind))
        for _ in range(n_background):
            w.add(gen.document(_doc_length(rng, cfg)))
    return out


def build_unique_corpus(
    store: PostsStore,
    cfg: ReviewConfig = ReviewConfig(),
    seed: int = 0,
    n_parts: int = 500,
    n_variants: int = 20,
    n_decoys: int = 20,
) -> SeededCorpus:
    """Unrelated code with some near-copies and some low-overlap decoys.

    Near-copies keep 70 to 95 percent of a source part's text; decoys keep
    only 25 to 40 percent and should not be returned at the default degree.
    """
    rng = random.Random(seed)
    gen = CodeGenerator(rng)
    filler_gen = CodeGenerator(random.Random(seed + 1))
    w = _CorpusWriter(store, cfg, rng)
    out = SeededCorpus(store)
    n_background = n_parts - n_variants - n_decoys
    if n_background < n_variants + n_decoys:
        raise ValueError("n_parts too small for the requested variants and decoys")
    with store.transaction():
        sources = [w.add(gen.document(_doc_length(rng, cfg))) for _ in range(n_background)]
        picks = rng.sample(range(n_background), n_variants + n_decoys)
        for i in picks[:n_variants]:
            text = _near_copy(sources[i].code_text, rng.uniform(0.05, 0.30), rng, filler_gen, rng.randint(1, 3))
            v = w.add(text)
            out.pairs.append((sources[i].post_id, v.post_id))
        for i in picks[n_variants:]:
            text = _near_copy(sources[i].code_text, rng.uniform(0.60, 0.75), rng, filler_gen, rng.randint(1, 10))
            out.decoy_posts.append(w.add(text).post_id)
    return out


def build_duplicate_corpus(
    store: PostsStore,
    cfg: ReviewConfig = ReviewConfig(),
    seed: int = 0,
    n_pairs: int = 20,
    n_background: int = 200,
    n_decoys: int = 10,
) -> SeededCorpus:
    """Original posts with linked duplicates sharing 70 to 95 percent of their code.

    A duplicate is the original edited in one to three places, the way a
    re-asked question reuses code. Decoys are looser variants (45 to 55
    percent kept) of some originals, carrying no link.
    """
    rng = random.Random(seed)
    gen = CodeGenerator(rng)
    filler_gen = CodeGenerator(random.Random(seed + 1))
    w = _CorpusWriter(store, cfg, rng)
    out = SeededCorpus(store)
    with store.transaction():
        originals = []
        for _ in range(n_pairs):
            a = w.add(gen.document(_doc_length(rng, cfg)))
            dup_text = _near_copy(a.code_text, rng.uniform(0.05, 0.30), rng, filler_gen, rng.randint(1, 3))
            b = w.add(dup_text)
            store.put_link(PostLink(b.post_id, a.post_id, LinkType.DUPLICATE))
            out.pairs.append((a.post_id, b.post_id))
            out.queries.append(PlantedQuery(a.code_text, b.id, "duplicate"))
            originals.append(a)
        for a in rng.sample(originals, min(n_decoys, len(originals))):
            text = _near_copy(a.code_text, rng.uniform(0.45, 0.55), rng, filler_gen, rng.randint(1, 10))
            out.decoy_posts.append(w.add(text).post_id)
        for _ in range(n_background):
            w.add(gen.document(_doc_length(rng, cfg)))
    return out
