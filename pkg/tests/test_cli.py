from __future__ import annotations

import io
import json
import random
from pathlib import Path

import pytest

from crowdrev.cli import EXIT_DATA, EXIT_EVAL, EXIT_OK, EXIT_USAGE, build_parser, parse_grid, resolve_options, run
from crowdrev.config import ConfigError
from crowdrev.store import CodePart, LinkType, PostLink, PostRecord, PostsStore, PostType
from crowdrev.synth import CodeGenerator
from crowdrev.winnow import WinnowParams, code_size, fingerprint_text

FIXTURES = Path(__file__).parent / "fixtures"


def call(*argv, env=None):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err, env or {})
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def ingested(tmp_path_factory):
    store = tmp_path_factory.mktemp("store")
    code, out, err = call("ingest", "--posts", str(FIXTURES / "posts_100.xml"),
                          "--links", str(FIXTURES / "postlinks_100.xml"), "--store", str(store))
    assert code == EXIT_OK, err
    return store, out


def test_ingest_prints_stats(ingested):
    _, out = ingested
    expected = json.loads((FIXTURES / "posts_100.expected.json").read_text())
    table = dict(line.split(None, 1) for line in out.splitlines())
    assert int(table["rows_ingested"]) == expected["rows_ingested"]
    assert int(table["links_stored"]) == expected["links_stored"]


def test_precedence_flag_over_file_over_default(tmp_path):
    cfg = tmp_path / "c.conf"
    cfg.write_text("delta = 70\ntop-k = 3  # trailing comment\n", encoding="utf-8")
    p = build_parser()
    opts = resolve_options(p.parse_args(["review", "--config", str(cfg), "--delta", "80"]), {})
    assert opts["delta"] == 80.0  # flag wins
    assert opts["top_k"] == 3  # file wins over default
    assert opts["delta_l"] == 200.0  # default
    opts = resolve_options(p.parse_args(["review"]), {"CROWDREV_CONFIG": str(cfg)})
    assert opts["delta"] == 70.0


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "c.conf"
    cfg.write_text("deltaa = 70\n")
    code, _, err = call("stats", "--config", str(cfg))
    assert code == EXIT_USAGE and "deltaa" in err


def test_grid_parsing():
    assert parse_grid("0,10,...,50") == [0, 10, 20, 30, 40, 50]
    assert parse_grid("0, 5, 7") == [0, 5, 7]
    with pytest.raises(ConfigError):
        parse_grid("0,10,...,55")


def test_usage_errors():
    assert call("nope")[0] == EXIT_USAGE
    assert call("stats", "--bogus")[0] == EXIT_USAGE
    assert call("review")[0] == EXIT_USAGE  # --in missing
    assert call("eval-synth", "--k", "0")[0] == EXIT_USAGE


def test_missing_store_is_data_error(tmp_path):
    code, _, err = call("stats", "--store", str(tmp_path / "nothing"))
    assert code == EXIT_DATA and "ingest" in err
    code, _, _ = call("ingest", "--posts", str(tmp_path / "no.xml"), "--store", str(tmp_path))
    assert code == EXIT_DATA


def test_stats_and_export(ingested, tmp_path):
    store, _ = ingested
    code, out, _ = call("stats", "--store", str(store))
    assert code == EXIT_OK and "winnow" in out and "k=12 w=8" in out
    code, out, _ = call("export", "--store", str(store), "--out", str(tmp_path / "x"))
    assert code == EXIT_OK and (tmp_path / "x" / "codepart.csv").exists()


def test_review_directory_equals_per_file(ingested, tmp_path):
    store, _ = ingested
    with PostsStore(store) as s:
        texts = [p.code_text for p in list(s.scan_code_parts())[:3]]
    src = tmp_path / "src"
    (src / "sub").mkdir(parents=True)
    files = [src / "a.java", src / "b.java", src / "sub" / "c.java"]
    for f, t in zip(files, texts):
        f.write_text(t, encoding="utf-8")
    code, whole, _ = call("review", "--store", str(store), "--in", str(src), "--format", "jsonl")
    assert code == EXIT_OK
    singles = "".join(
        call("review", "--store", str(store), "--in", str(f), "--format", "jsonl")[1] for f in files
    )
    assert whole == singles
    first = json.loads(whole.splitlines()[1])
    assert first["kind"] == "match" and first["delta_actual"] == 100.0


def test_review_text_to_file(ingested, tmp_path):
    store, _ = ingested
    f = tmp_path / "x.java"
    f.write_text("int main() { return 0; }\n")
    out = tmp_path / "report.txt"
    code, stdout, _ = call("review", "--store", str(store), "--in", str(f), "--out", str(out))
    assert code == EXIT_OK and stdout == "" and "x.java" in out.read_text()


def test_eval_synth_writes_curve(tmp_path):
    out = tmp_path / "curve.csv"
    code, _, err = call("eval-synth", "--trials", "30", "--grid", "0,50,100", "--out", str(out))
    assert code == EXIT_OK, err
    lines = out.read_text().splitlines()
    assert lines[0] == "psi_diff,mean_delta,stddev_delta,n_trials"
    assert lines[1].startswith("0.0000,100.0000,0.0000,30")
    assert len(lines) == 4


def test_eval_dup_flags_missed_duplicate(tmp_path):
    g = CodeGenerator(random.Random(1))
    with PostsStore(tmp_path / "s") as s:
        s.set_winnow_params(WinnowParams())
        for i in (1, 2):
            t = g.document(1500)  # two unrelated texts
            s.put_post(PostRecord(i, PostType.QUESTION))
            s.put_code_part(CodePart(i, t, code_size(t), fingerprint_text(t), 0))
        s.put_link(PostLink(2, 1, LinkType.DUPLICATE))
    code, out, err = call("eval-dup", "--store", str(tmp_path / "s"))
    assert code == EXIT_EVAL
    assert "missed_duplicates  1" in out


def test_eval_unique_fixture_writes_summary(tmp_path):
    out = tmp_path / "u.csv"
    code, stdout, err = call("eval-unique", "--fixture", "--seed", "3", "--n", "10", "--out", str(out))
    assert code == EXIT_OK, err
    assert out.exists() and (tmp_path / "u.summary.csv").exists()
    assert "precision" in stdout


def test_fetch_without_token_is_usage_error(tmp_path):
    code, _, err = call("fetch-corpus", "--query", "lang:java", "--out", str(tmp_path))
    assert code == EXIT_USAGE and "CROWDREV_GITHUB_TOKEN" in err
