from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdrev.config import ConfigError, ReviewConfig
from crowdrev.matching import (
    MATCH_FIELDS,
    CodeBlock,
    find_matches,
    render_text,
    report_records,
    review_file,
    review_source,
    review_tree,
    split_blocks,
    to_jsonl,
)
from crowdrev.store import CodePart, PostRecord, PostsStore, PostType
from crowdrev.synth import CodeGenerator, code_filler, replace_regions
from crowdrev.winnow import WinnowParams, code_size, fingerprint_text, match_degree

JAVA = """\
package demo;

public class Demo {
    // a comment with braces { not code }
    public static int sum(int[] xs) {
        int total = 0;
        for (int x : xs) {
            total += x;
        }
        return total;
    }

    private String label(String s) throws Exception {
        if (s == null) {
            throw new Exception("no { label");
        }
        Runnable r = new Runnable() {
            public void run() { System.out.println(s); }
        };
        return "<" + s + ">";
    }
}
"""


def test_split_java_methods():
    blocks = split_blocks(JAVA, "java")
    assert [(b.origin.start_line, b.origin.end_line) for b in blocks] == [(5, 11), (13, 21)]
    assert blocks[0].text.strip().startswith("public static int sum")
    assert blocks[1].text.rstrip().endswith("}")


def test_split_without_functions_is_whole_file():
    text = "x = 1\ny = 2\nprint(x + y)\n"
    blocks = split_blocks(text, "python")
    assert len(blocks) == 1 and blocks[0].origin.start_line == 1 and blocks[0].origin.end_line == 3
    assert len(split_blocks("int a = 1;\nint b = 2;\n", "c")) == 1


def test_split_empty_file():
    assert split_blocks("") == []
    assert split_blocks("  \n\n") == []


def test_split_c_functions_and_control_blocks():
    src = "int f(int a) {\n  if (a) {\n    return 1;\n  }\n  return 0;\n}\n\nint main() {\n  return f(2);\n}\n"
    blocks = split_blocks(src, "c")
    assert [(b.origin.start_line, b.origin.end_line) for b in blocks] == [(1, 6), (8, 10)]


@given(st.text(alphabet="ab(){};=\n /*\"", max_size=200))
def test_blocks_cover_disjoint_line_ranges(text):
    blocks = split_blocks(text, "java")
    spans = [(b.origin.start_line, b.origin.end_line) for b in blocks]
    for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
        assert e1 < s2
    for s, e in spans:
        assert 1 <= s <= e


def code_part(store: PostsStore, post_id: int, text: str, post_type=PostType.QUESTION,
              score: int = 0, params: WinnowParams = WinnowParams(), alpha: int = 0) -> int:
    parent = None if post_type == PostType.QUESTION else 1
    if not store.has_post(post_id):
        store.put_post(PostRecord(post_id, post_type, score, parent_id=parent,
                                  title=f"post {post_id}"))
    return store.put_code_part(
        CodePart(post_id, text, code_size(text), fingerprint_text(text, params), alpha)
    )


@pytest.fixture
def gen():
    return CodeGenerator(random.Random(5))


def test_identical_block_matches_fully(gen):
    text = gen.document(1500)
    with PostsStore() as store:
        pid = code_part(store, 1, text)
        ms = find_matches(CodeBlock.from_text(text), ReviewConfig(), store)
    assert [(m.code_part_id, m.delta_actual) for m in ms] == [(pid, 100.0)]


def test_size_window_gate(gen):
    text = gen.document(1200)
    padded = text + "\n" + gen.document(5000)
    with PostsStore() as store:
        code_part(store, 1, padded)
        block = CodeBlock.from_text(text)
        assert find_matches(block, ReviewConfig(delta=10, delta_l=200), store) == []
        assert len(find_matches(block, ReviewConfig(delta=10, delta_l=600), store)) == 1


def test_empty_fingerprint_returns_nothing():
    with PostsStore() as store:
        assert find_matches(CodeBlock.from_text("tiny"), ReviewConfig(), store) == []


def test_seeded_corpus_three_above_threshold(gen):
    rng = random.Random(9)
    query = gen.document(2000)
    other = CodeGenerator(random.Random(10))
    texts = [other.document(rng.randint(1200, 3000)) for _ in range(47)]
    for frac in (0.0, 0.1, 0.15):
        texts.append(replace_regions(query, frac, rng, code_filler(other), n_regions=1))
    rng.shuffle(texts)
    cfg = ReviewConfig()
    block = CodeBlock.from_text(query)
    with PostsStore() as store:
        ids = [code_part(store, i + 1, t) for i, t in enumerate(texts)]
        got = {m.code_part_id for m in find_matches(block, cfg, store)}
        lo, hi = cfg.size_window(block.length)
        oracle = {
            pid for pid, t in zip(ids, texts)
            if lo <= code_size(t) <= hi
            and match_degree(block.fingerprint, fingerprint_text(t)) >= cfg.delta
        }
    assert len(oracle) == 3
    assert got == oracle


def test_param_mismatch_refused(gen):
    with PostsStore() as store:
        store.set_winnow_params(WinnowParams(k=5, w=4))
        with pytest.raises(ConfigError):
            review_source(gen.document(1000), ReviewConfig(), store)


def test_single_question_match_is_defective(gen):
    text = gen.document(1500)
    with PostsStore() as store:
        code_part(store, 1, text, score=5, alpha=-1)
        report = review_source(text, ReviewConfig(), store)
    assert report.overall_alpha == -1
    assert [m.post_id for m in report.matches] == [1]


def test_no_match_is_neutral(gen):
    with PostsStore() as store:
        code_part(store, 1, gen.document(1500))
        report = review_source(CodeGenerator(random.Random(99)).document(1500), ReviewConfig(), store)
    assert report.overall_alpha == 0 and report.matches == []


def test_weighted_aggregation_example(gen):
    """Answer (score 3) at 90% and question (score 4) at 55% under delta 50 gives +1."""
    base = gen.document(3000)
    rng = random.Random(1)
    filler = code_filler(CodeGenerator(random.Random(2)))
    with PostsStore() as store:
        store.put_post(PostRecord(1, PostType.QUESTION, 4, title="q"))
        store.put_post(PostRecord(2, PostType.ANSWER, 3, parent_id=1))
        for pid, frac, alpha in ((2, 0.08, 1), (1, 0.40, -1)):
            t = replace_regions(base, frac, rng, filler, n_regions=1)
            store.put_code_part(CodePart(pid, t, code_size(t), fingerprint_text(t), alpha))
        report = review_source(base, ReviewConfig(delta=50), store)
    degrees = {m.post_id: m.delta_actual for m in report.matches}
    assert set(degrees) == {1, 2}
    assert degrees[2] > degrees[1]
    expected = 1 if degrees[2] - degrees[1] > 0 else 0
    assert report.overall_alpha == expected == 1


def test_top_k_truncation_keeps_full_aggregate(gen):
    text = gen.document(1500)
    with PostsStore() as store:
        for i in range(1, 6):
            code_part(store, i, text, alpha=-1 if i <= 3 else 1)
        report = review_source(text, ReviewConfig(top_k=2), store)
    assert len(report.matches) == 2 and report.n_matches_total == 5
    assert report.overall_alpha == -1
    assert set(report.posts) == {m.post_id for m in report.matches}


@pytest.fixture(scope="module")
def corpus():
    rng = random.Random(3)
    g = CodeGenerator(rng)
    store = PostsStore()
    texts = [g.document(rng.randint(1000, 3000)) for _ in range(40)]
    for i in range(10):
        texts.append(replace_regions(texts[i], rng.uniform(0.05, 0.6), rng, code_filler(g)))
    for i, t in enumerate(texts, 1):
        code_part(store, i, t, alpha=rng.choice([-1, 0, 1]))
    yield store, texts
    store.close()


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=0, max_value=49),
    st.floats(min_value=5, max_value=95),
    st.floats(min_value=0, max_value=20),
    st.floats(min_value=0, max_value=300),
    st.floats(min_value=0, max_value=300),
)
def test_threshold_monotonicity(corpus, idx, delta, extra, dl1, dl2):
    store, texts = corpus
    block = CodeBlock.from_text(texts[idx])
    ids = lambda cfg: {m.code_part_id for m in find_matches(block, cfg, store)}  # noqa: E731
    assert ids(ReviewConfig(delta=min(100, delta + extra))) <= ids(ReviewConfig(delta=delta))
    lo, hi = sorted((dl1, dl2))
    assert ids(ReviewConfig(delta_l=lo)) <= ids(ReviewConfig(delta_l=hi))


def test_report_sorted_and_bounded(corpus):
    store, texts = corpus
    for t in texts[:10]:
        r = review_source(t, ReviewConfig(delta=20, top_k=3), store)
        ds = [m.delta_actual for m in r.matches]
        assert ds == sorted(ds, reverse=True) and len(ds) <= 3


def test_review_tree_equals_per_file(tmp_path, corpus):
    store, texts = corpus
    (tmp_path / "a").mkdir()
    (tmp_path / "a" / "b").mkdir()
    files = [tmp_path / "one.java", tmp_path / "a" / "two.java", tmp_path / "a" / "b" / "three.py"]
    for f, t in zip(files, texts):
        f.write_text(t, encoding="utf-8")
    (tmp_path / "bad.java").write_bytes(b"\xff\xfe\x00bad")
    errors = []
    cfg = ReviewConfig()
    reports = review_tree(tmp_path, cfg, store, errors=errors)
    assert len(reports) == 3
    assert [e.path for e in errors] == [str(tmp_path / "bad.java")]
    by_file = {r.file: to_jsonl([r]) for r in reports}
    for f in files:
        assert by_file[str(f)] == to_jsonl([review_file(f, cfg, store)])
    assert len(review_tree(tmp_path, cfg, store, include="*.py")) == 1


def test_jsonl_field_order(corpus):
    store, texts = corpus
    report = review_source(texts[0], ReviewConfig(), store, path="x.java")
    recs = [json.loads(line) for line in to_jsonl([report]).splitlines()]
    assert recs[0]["kind"] == "file" and recs[0]["file"] == "x.java"
    assert list(recs[1].keys()) == ["kind", *MATCH_FIELDS]
    assert recs == report_records(report)
    assert "x.java" in render_text(report)
