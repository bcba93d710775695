from __future__ import annotations

import csv
import io
import random
import statistics

import pytest

from crowdrev.config import ReviewConfig
from crowdrev.evaluation import (
    CURVE_COLUMNS,
    SUMMARY_COLUMNS,
    VERIFICATION_COLUMNS,
    MetricUndefined,
    SynthCurvePoint,
    VerificationInput,
    VerificationRecord,
    build_duplicate_corpus,
    compute_gamma,
    compute_omega,
    compute_precision,
    curve_violations,
    emit_csv,
    run_verification,
    sample_inputs,
    summarize,
    synth_mismatch_experiment,
    token_jaccard,
    token_oracle,
)
from crowdrev.scoring import LexiconSentiment
from crowdrev.store import CodePart, LinkType, PostLink, PostRecord, PostsStore, PostType
from crowdrev.synth import CodeGenerator
from crowdrev.winnow import code_size, fingerprint_text


def rec(inp, post, relevant=True, delta=80.0, psi=1200, dup=None):
    return VerificationRecord(inp, inp, dup, psi, post, delta, relevant)


def test_omega_formula():
    assert compute_omega([3, 1], 2) == 2.0
    assert compute_omega([0, 0, 0], 3) == 0.0
    assert compute_omega([141], 1) == 141.0
    assert compute_omega([rec(1, 5), rec(1, 6), rec(2, 5)], 2) == 1.5
    with pytest.raises(ValueError):
        compute_omega([], 0)


def test_precision_formula():
    assert compute_precision(tp=9, fp=1) == 0.9
    assert compute_precision(tp=4, fp=0) == 1.0
    records = [rec(1, i) for i in range(9)] + [rec(1, 99, relevant=False)]
    assert compute_precision(records) == 0.9
    with pytest.raises(MetricUndefined):
        compute_precision([])
    with pytest.raises(MetricUndefined):
        compute_precision(tp=0, fp=0)


def test_precision_with_collision_decoys():
    """Spaced-out copies share every fingerprint but almost no tokens."""
    rng = random.Random(4)
    g = CodeGenerator(rng)
    store = PostsStore()
    sources = [g.document(1200) for _ in range(20)]
    next_id = 1

    def add(text):
        nonlocal next_id
        store.put_post(PostRecord(next_id, PostType.QUESTION))
        pid = store.put_code_part(CodePart(next_id, text, code_size(text), fingerprint_text(text), 0))
        next_id += 1
        return pid

    inputs = []
    for s in sources:
        inputs.append(store.get_code_part(add(s)))
        add(s)  # a true copy
    for s in sources[:2]:
        add(" ".join(s))  # whitespace is ignored by the fingerprint, not by the tokenizer
    run = run_verification([VerificationInput(p) for p in inputs], ReviewConfig(), store)
    store.close()
    assert all(r.delta_actual == 100.0 for r in run.records)
    tp = sum(r.is_relevant for r in run.records)
    assert (tp, len(run.records) - tp) == (20, 2)
    assert compute_precision(run.records) == pytest.approx(20 / 22)


def test_token_oracle():
    assert token_oracle("int a = b + c;", "int a = b + c;")
    assert not token_oracle("alpha beta", "gamma delta")
    # {a, b} vs {b, c}: intersection 1, union 3
    assert token_jaccard("a b", "b c") == pytest.approx(1 / 3)
    # exactly half: {a, b, c, d} and {a, b}: 2 / 4
    assert token_jaccard("a b c d", "a b") == 0.5
    assert token_oracle("a b c d", "a b")
    assert token_jaccard("x x y", "x y y") == pytest.approx(2 / 4)


def test_gamma():
    posts = [PostRecord(i, PostType.QUESTION, narrative=n) for i, n in enumerate(
        ["works perfectly", "crash and leak", "nothing here", "thanks a lot"], 1)]
    lex = LexiconSentiment()
    assert compute_gamma(posts, lex, lex) == 1.0
    flipped = LexiconSentiment({k: -v for k, v in lex.lexicon.items()})
    # opposite signs everywhere except the neutral narrative
    assert compute_gamma(posts, lex, flipped) == 0.25
    with pytest.raises(MetricUndefined):
        compute_gamma([], lex, lex)


class _Fixed:
    name = "fixed"

    def __init__(self, values):
        self.values = values

    def score(self, narrative):
        return self.values[narrative]


def test_gamma_agrees_on_four_of_ten():
    narratives = [f"n{i}" for i in range(10)]
    a = _Fixed({n: (0.9 if i < 7 else -0.9) for i, n in enumerate(narratives)})
    b = _Fixed({n: (0.9 if i < 4 else -0.9 if i < 7 else 0.9) for i, n in enumerate(narratives)})
    posts = [PostRecord(i + 1, PostType.QUESTION, narrative=n) for i, n in enumerate(narratives)]
    assert compute_gamma(posts, a, b) == 0.4


def test_gamma_with_metadata_side():
    posts = [PostRecord(1, PostType.QUESTION, score=10, narrative="works perfectly")]
    lex = LexiconSentiment()
    assert compute_gamma(posts, lex, lex) == 1.0
    assert compute_gamma(posts, lex, lex, s_threshold=1) == 0.0


@pytest.fixture(scope="module")
def dup_store():
    store = PostsStore()
    corpus = build_duplicate_corpus(store, ReviewConfig(), seed=7, n_pairs=5, n_background=20, n_decoys=2)
    yield store, corpus
    store.close()


def test_sample_inputs_selection(dup_store):
    store, corpus = dup_store
    unique, dups = sample_inputs(store, 3, seed=1)
    assert len(unique) == 3 and len(dups) == 3
    for d in dups:
        assert d.expected_duplicate_id in store.get_duplicates(d.part.post_id)
    linked = {p for pair in corpus.pairs for p in pair}
    assert not any(u.part.post_id in linked for u in unique)
    assert sample_inputs(store, 3, seed=1) == (unique, dups)


def test_sample_inputs_empty_window_warns(dup_store, caplog):
    store, _ = dup_store
    unique, dups = sample_inputs(store, 3, psi_min=10**9, psi_max=10**9 + 1)
    assert unique == [] and dups == []
    assert "only 0 qualifying" in caplog.text
    with pytest.raises(ValueError):
        sample_inputs(store, 3, psi_min=5, psi_max=4)


def test_verification_excludes_self_and_finds_duplicates(dup_store):
    store, corpus = dup_store
    _, dups = sample_inputs(store, 0)
    run = run_verification(dups, ReviewConfig(), store)
    assert run.missed_duplicates == []
    for inp in dups:
        mine = [r for r in run.records if r.input_part_id == inp.part.id]
        assert inp.part.post_id not in {r.matched_post_id for r in mine}
        assert inp.expected_duplicate_id in {r.matched_post_id for r in mine}
    for r in run.records:
        assert r.delta_actual >= 60


def test_summary_recomputes_from_records(dup_store, tmp_path):
    store, _ = dup_store
    _, dups = sample_inputs(store, 0)
    run = run_verification(dups, ReviewConfig(), store)
    summary = summarize(run)
    path = emit_csv(run.records, tmp_path / "v.csv")
    rows = list(csv.DictReader(path.open(encoding="utf-8")))
    relevant = sum(r["is_relevant"] == "true" for r in rows)
    assert summary.precision == pytest.approx(relevant / len(rows))
    per_input = {}
    for r in rows:
        per_input[r["input_part_id"]] = per_input.get(r["input_part_id"], 0) + 1
    assert summary.omega == pytest.approx(sum(per_input.values()) / summary.n_inputs)
    deltas = [float(r["delta_actual"]) for r in rows]
    assert summary.stats["delta_actual"].avg == pytest.approx(statistics.fmean(deltas), abs=1e-4)


def test_emit_csv_shapes(tmp_path):
    pts = [SynthCurvePoint(float(p), 100.0 - p / 2, 1.23456, 30) for p in (0, 25, 50, 75, 100)]
    lines = emit_csv(pts, tmp_path / "c.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6
    assert lines[0] == ",".join(CURVE_COLUMNS)
    assert lines[2] == "25.0000,87.5000,1.2346,30"
    empty = emit_csv([], tmp_path / "e.csv").read_text(encoding="utf-8")
    assert empty == ",".join(VERIFICATION_COLUMNS) + "\n"
    records = [rec(1, 2, True, 61.23456), rec(3, 4, False, 99.0, dup=4)]
    back = list(csv.reader(io.StringIO(emit_csv(records, tmp_path / "r.csv").read_text())))
    assert back[1] == ["1", "1", "", "1200", "2", "61.2346", "true"]
    assert back[2][2] == "4" and back[2][6] == "false"


def test_emit_summary(tmp_path, dup_store):
    store, _ = dup_store
    _, dups = sample_inputs(store, 0)
    summary = summarize(run_verification(dups, ReviewConfig(), store))
    lines = emit_csv(summary, tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == ",".join(SUMMARY_COLUMNS)
    assert [line.split(",")[0] for line in lines[1:]] == ["delta_actual", "psi", "omega", "precision"]


def test_synth_curve_endpoints_and_trend():
    pts = synth_mismatch_experiment(trials=40, grid=[0, 30, 60, 100], seed=2)
    assert pts[0].delta_actual_mean == 100.0 and pts[0].delta_actual_stddev == 0.0
    assert curve_violations(pts) == []
    assert pts[-1].delta_actual_mean > 0
    assert pts[-1].delta_actual_mean < pts[1].delta_actual_mean


def test_synth_grid_points_independent():
    a = synth_mismatch_experiment(trials=30, grid=[0, 50], seed=5)
    b = synth_mismatch_experiment(trials=30, grid=[50], seed=5)
    assert a[1] == b[0]


def test_synth_rejects_bad_setup():
    with pytest.raises(ValueError):
        synth_mismatch_experiment(trials=10)
    with pytest.raises(ValueError):
        synth_mismatch_experiment(trials=30, code_alphabet="abc", noise_alphabet="cde")
    with pytest.raises(ValueError):
        synth_mismatch_experiment(trials=30, grid=[120])


def test_curve_violation_detection():
    pts = [SynthCurvePoint(0, 50, 1, 30), SynthCurvePoint(10, 60, 1, 30)]
    assert curve_violations(pts) == [(0.0, 10.0)]
    assert curve_violations([SynthCurvePoint(0, 50, 20, 30), SynthCurvePoint(10, 60, 20, 30)]) == []


def test_link_direction_in_sampling():
    with PostsStore() as store:
        g = CodeGenerator(random.Random(1))
        for i in (1, 2):
            t = g.document(1100)
            store.put_post(PostRecord(i, PostType.QUESTION))
            store.put_code_part(CodePart(i, t, code_size(t), fingerprint_text(t), 0))
        store.put_link(PostLink(2, 1, LinkType.DUPLICATE))
        _, dups = sample_inputs(store, 0)
    assert [(d.part.post_id, d.expected_duplicate_id) for d in dups] == [(2, 1)]
