"""Command-line entry point: ``crowdrev <command> [options]``.

Every option can also be set in a ``key=value`` config file given by
``--config`` or ``CROWDREV_CONFIG``; a flag on the command line wins over
the file, and the file wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence, TextIO

from crowdrev.config import ConfigError, ReviewConfig, parse_bool, read_config_file
from crowdrev.winnow import WinnowParams

log = logging.getLogger("crowdrev")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EVAL = 0, 1, 2, 3
CONFIG_ENV = "CROWDREV_CONFIG"

COMMANDS = (
    "ingest", "review", "eval-unique", "eval-dup", "eval-synth", "stats", "export", "fetch-corpus",
)

_DEFAULTS = ReviewConfig()


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def parse_grid(text: str) -> list[float]:
    """``0,10,20`` or ``0,10,...,100`` (arithmetic progression) to a list."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if "..." in parts:
        i = parts.index("...")
        if i < 2 or i != len(parts) - 2:
            raise ConfigError(f"grid {text!r}: use a,b,...,z")
        a, b, z = float(parts[i - 2]), float(parts[i - 1]), float(parts[-1])
        step = b - a
        if step <= 0 or z < b:
            raise ConfigError(f"grid {text!r}: progression must increase")
        head = [float(p) for p in parts[: i - 2]]
        n = int(round((z - a) / step))
        if abs(a + n * step - z) > 1e-9:
            raise ConfigError(f"grid {text!r}: {z} is not on the progression")
        return head + [a + j * step for j in range(n + 1)]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"grid {text!r}: expected comma-separated numbers") from None


# option name -> (converter for config-file strings, default)
OPTIONS: dict[str, tuple[Callable[[Any], Any], Any]] = {
    "store": (str, None),
    "posts": (str, None),
    "links": (str, None),
    "in": (str, None),
    "out": (str, None),
    "delta": (float, _DEFAULTS.delta),
    "delta_l": (float, _DEFAULTS.delta_l),
    "top_k": (int, _DEFAULTS.top_k),
    "min_code_size": (int, _DEFAULTS.min_code_size),
    "s_threshold": (int, _DEFAULTS.s_threshold),
    "neutral_band": (float, _DEFAULTS.neutral_band),
    "k": (int, _DEFAULTS.winnow.k),
    "w": (int, _DEFAULTS.winnow.w),
    "strip_punctuation": (parse_bool, False),
    "viewcount_weighting": (parse_bool, False),
    "lexicon": (str, None),
    "seed": (int, 0),
    "n": (int, 0),
    "psi_min": (float, 0.0),
    "psi_max": (float, float("inf")),
    "fixture": (parse_bool, False),
    "grid": (parse_grid, "0,10,...,100"),
    "trials": (int, 100),
    "format": (str, "text"),
    "include": (str, "*"),
    "query": (str, None),
    "size_low": (int, 1000),
    "size_high": (int, 10_000),
    "max_files": (int, 100),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crowdrev", description="Review source code against crowd knowledge.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help=f"key=value config file (default: ${CONFIG_ENV})")
    p.add_argument("-v", "--verbose", action="count", default=0)
    g = p.add_argument_group("data")
    g.add_argument("--store", help="store directory or .sqlite file")
    g.add_argument("--posts", help="Posts.xml dump (.xml, .gz or .bz2)")
    g.add_argument("--links", help="PostLinks.xml dump")
    g.add_argument("--in", dest="in", help="file or directory to review")
    g.add_argument("--out", help="output file (directory for export and fetch-corpus)")
    g.add_argument("--format", choices=("text", "jsonl"), help="review report format")
    g.add_argument("--include", help="file-name glob when reviewing a directory")
    m = p.add_argument_group("matching and scoring")
    m.add_argument("--delta", type=float, help="minimum fingerprint match, percent")
    m.add_argument("--delta-l", type=float, help="size tolerance, percent of block length")
    m.add_argument("--top-k", type=int)
    m.add_argument("--min-code-size", type=int)
    m.add_argument("--s-threshold", type=int)
    m.add_argument("--neutral-band", type=float)
    m.add_argument("--k", type=int, help="k-gram length (noise threshold)")
    m.add_argument("--w", type=int, help="winnowing window")
    m.add_argument("--strip-punctuation", action=argparse.BooleanOptionalAction)
    m.add_argument("--viewcount-weighting", action=argparse.BooleanOptionalAction)
    m.add_argument("--lexicon", help="polarity<TAB>phrase sentiment lexicon")
    e = p.add_argument_group("evaluation")
    e.add_argument("--seed", type=int)
    e.add_argument("--n", type=int, help="inputs to sample (0 = all)")
    e.add_argument("--psi-min", type=float)
    e.add_argument("--psi-max", type=float)
    e.add_argument("--fixture", action=argparse.BooleanOptionalAction,
                   help="populate the store with the seeded synthetic corpus first")
    e.add_argument("--grid", help="psi_diff values, e.g. 0,10,...,100")
    e.add_argument("--trials", type=int)
    f = p.add_argument_group("fetch-corpus")
    f.add_argument("--query")
    f.add_argument("--size-low", type=int)
    f.add_argument("--size-high", type=int)
    f.add_argument("--max-files", type=int)
    return p


def resolve_options(args: argparse.Namespace, env: dict[str, str]) -> dict[str, Any]:
    """Merge flags, config file and defaults, in that order of precedence."""
    cfg_path = args.config or env.get(CONFIG_ENV)
    file_values: dict[str, str] = {}
    if cfg_path:
        try:
            file_values = read_config_file(cfg_path)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {cfg_path}: {exc}") from exc
        unknown = sorted(set(file_values) - set(OPTIONS))
        if unknown:
            raise ConfigError(f"{cfg_path}: unknown keys {', '.join(unknown)}")
    out: dict[str, Any] = {}
    for name, (convert, default) in OPTIONS.items():
        flag = getattr(args, name, None)
        if flag is not None:
            value = flag
        elif name in file_values:
            try:
                value = convert(file_values[name])
            except ValueError as exc:
                raise ConfigError(f"{cfg_path}: bad value for {name}: {exc}") from exc
        else:
            value = default
        if name == "grid" and isinstance(value, str):
            value = parse_grid(value)
        out[name] = value
    if out["format"] not in ("text", "jsonl"):
        raise ConfigError(f"format must be text or jsonl, got {out['format']!r}")
    return out


def review_config(opts: dict[str, Any]) -> ReviewConfig:
    try:
        winnow = WinnowParams(opts["k"], opts["w"], opts["strip_punctuation"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ReviewConfig(
        winnow=winnow,
        delta=opts["delta"],
        delta_l=opts["delta_l"],
        s_threshold=opts["s_threshold"],
        min_code_size=opts["min_code_size"],
        top_k=opts["top_k"],
        neutral_band=opts["neutral_band"],
        viewcount_weighting=opts["viewcount_weighting"],
        lexicon_path=opts["lexicon"],
    )


def _require(opts: dict[str, Any], *names: str) -> None:
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _open_existing_store(opts: dict[str, Any]):
    from crowdrev.store import PostsStore, resolve_db_path

    _require(opts, "store")
    path = resolve_db_path(opts["store"])
    if not path.exists():
        raise DataError(f"no store at {path}; run `crowdrev ingest` first")
    return PostsStore(path)


def _provider(cfg: ReviewConfig):
    from crowdrev.scoring import LexiconSentiment, default_provider

    if cfg.lexicon_path:
        try:
            return LexiconSentiment.from_file(cfg.lexicon_path)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot load lexicon: {exc}") from exc
    return default_provider()


def _emit(text: str, opts: dict[str, Any], stdout: TextIO) -> None:
    if opts["out"]:
        Path(opts["out"]).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)


def _print_table(rows: dict[str, Any], stdout: TextIO) -> None:
    width = max(len(k) for k in rows)
    for k, v in rows.items():
        if isinstance(v, float):
            v = f"{v:.4f}"
        stdout.write(f"{k:<{width}}  {'' if v is None else v}\n")


# -- commands ---------------------------------------------------------------


def cmd_ingest(opts: dict[str, Any], stdout: TextIO) -> int:
    from crowdrev.ingest import run_ingest
    from crowdrev.store import PostsStore

    _require(opts, "posts", "store")
    cfg = review_config(opts)
    provider = _provider(cfg)
    for key in ("posts", "links"):
        if opts[key] and not Path(opts[key]).is_file():
            raise DataError(f"--{key}: no such file {opts[key]}")
    with PostsStore(opts["store"]) as store:
        stats = run_ingest(opts["posts"], opts["links"], cfg, store, provider)
    _print_table(stats.as_dict(), stdout)
    return EXIT_OK


def cmd_review(opts: dict[str, Any], stdout: TextIO) -> int:
    from crowdrev.matching import FileError, render_text, review_tree, to_jsonl

    _require(opts, "in")
    cfg = review_config(opts)
    target = Path(opts["in"])
    if not target.exists():
        raise DataError(f"--in: no such file or directory {target}")
    errors: list[FileError] = []
    with _open_existing_store(opts) as store:
        reports = review_tree(target, cfg, store, opts["include"], errors)
    for e in errors:
        log.error("could not review %s: %s", e.path, e.message)
    if opts["format"] == "jsonl":
        text = to_jsonl(reports)
    else:
        text = "".join(render_text(r) + "\n" for r in reports)
    _emit(text, opts, stdout)
    return EXIT_OK if reports or not errors else EXIT_DATA


def _eval_store(opts: dict[str, Any], cfg: ReviewConfig, builder):
    from crowdrev.store import PostsStore

    if not opts["fixture"]:
        return _open_existing_store(opts)
    store = PostsStore(opts["store"] or ":memory:")
    if store.count_code_parts():
        store.close()
        raise DataError("--fixture needs an empty store")
    builder(store, cfg, seed=opts["seed"])
    return store


def _write_eval(run, opts: dict[str, Any], stdout: TextIO) -> None:
    from crowdrev.evaluation import emit_csv, summarize

    summary = summarize(run)
    if opts["out"]:
        out = Path(opts["out"])
        emit_csv(run.records, out)
        emit_csv(summary, out.with_name(out.stem + ".summary.csv"))
    _print_table(
        {
            "inputs": summary.n_inputs,
            "inputs_with_match": summary.n_inputs_with_match,
            "matches": len(run.records),
            "omega": summary.omega,
            "precision": summary.precision,
        },
        stdout,
    )


def cmd_eval(opts: dict[str, Any], stdout: TextIO, duplicates: bool) -> int:
    from crowdrev.evaluation import (
        build_duplicate_corpus,
        build_unique_corpus,
        run_verification,
        sample_inputs,
    )

    cfg = review_config(opts)
    builder = build_duplicate_corpus if duplicates else build_unique_corpus
    with _eval_store(opts, cfg, builder) as store:
        unique, dups = sample_inputs(
            store, opts["n"], opts["psi_min"], opts["psi_max"], opts["seed"]
        )
        inputs = dups if duplicates else unique
        if not inputs:
            raise DataError("no qualifying inputs in the store")
        run = run_verification(inputs, cfg, store)
    _write_eval(run, opts, stdout)
    if duplicates:
        stdout.write(f"missed_duplicates  {len(run.missed_duplicates)}\n")
        if run.missed_duplicates:
            log.error("expected duplicate not retrieved for input parts %s", run.missed_duplicates)
            return EXIT_EVAL
    return EXIT_OK


def cmd_eval_synth(opts: dict[str, Any], stdout: TextIO) -> int:
    import io

    from crowdrev.evaluation import curve_violations, emit_csv, synth_mismatch_experiment, write_csv

    cfg = review_config(opts)
    try:
        points = synth_mismatch_experiment(cfg.winnow, opts["trials"], opts["grid"], opts["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if opts["out"]:
        emit_csv(points, opts["out"])
    else:
        buf = io.StringIO()
        write_csv(points, buf)
        stdout.write(buf.getvalue())
    status = EXIT_OK
    for p in points:
        if p.psi_diff == 0 and p.delta_actual_mean != 100.0:
            log.error("identical texts matched at %.4f%%, not 100%%", p.delta_actual_mean)
            status = EXIT_EVAL
    for a, b in curve_violations(points):
        log.error("curve rises between psi_diff %g and %g by more than a pooled stddev", a, b)
        status = EXIT_EVAL
    return status


def cmd_stats(opts: dict[str, Any], stdout: TextIO) -> int:
    with _open_existing_store(opts) as store:
        stats = store.corpus_stats()
        rows = stats.as_dict()
        rows["posts"] = sum(1 for _ in store.iter_posts())
        rows["links"] = sum(1 for _ in store.iter_links())
        params = store.winnow_params()
        rows["winnow"] = f"k={params.k} w={params.w}" if params else None
    _print_table(rows, stdout)
    return EXIT_OK


def cmd_export(opts: dict[str, Any], stdout: TextIO) -> int:
    _require(opts, "out")
    with _open_existing_store(opts) as store:
        for path in store.export(opts["out"]):
            stdout.write(f"{path}\n")
    return EXIT_OK


def cmd_fetch(opts: dict[str, Any], stdout: TextIO, env: dict[str, str]) -> int:
    from crowdrev.fetch import TOKEN_ENV, fetch_corpus

    _require(opts, "query", "out")
    token = env.get(TOKEN_ENV)
    if not token:
        raise UsageError(
            f"fetch-corpus needs a GitHub token in ${TOKEN_ENV}; create one at "
            "https://github.com/settings/tokens and export it"
        )
    result = fetch_corpus(
        opts["query"], opts["out"], opts["size_low"], opts["size_high"], token=token,
        max_files=opts["max_files"],
    )
    _print_table(
        {"saved": len(result.saved), "skipped_size": result.skipped_size,
         "skipped_existing": result.skipped_existing},
        stdout,
    )
    return EXIT_OK


def run(
    argv: Sequence[str] | None = None,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
    env: dict[str, str] | None = None,
) -> int:
    """Execute one command and return its exit code."""
    from crowdrev.fetch import FetchError
    from crowdrev.ingest import DumpParseError
    from crowdrev.store import StoreError

    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    env = dict(os.environ) if env is None else env
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE

    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING - 10 * min(args.verbose, 2))
    try:
        opts = resolve_options(args, env)
        command = args.command
        if command == "ingest":
            return cmd_ingest(opts, stdout)
        if command == "review":
            return cmd_review(opts, stdout)
        if command in ("eval-unique", "eval-dup"):
            return cmd_eval(opts, stdout, duplicates=command == "eval-dup")
        if command == "eval-synth":
            return cmd_eval_synth(opts, stdout)
        if command == "stats":
            return cmd_stats(opts, stdout)
        if command == "export":
            return cmd_export(opts, stdout)
        return cmd_fetch(opts, stdout, env)
    except (UsageError, ConfigError) as exc:
        stderr.write(f"crowdrev: {exc}\n")
        return EXIT_USAGE
    except (DataError, StoreError, DumpParseError, FetchError, OSError, UnicodeDecodeError) as exc:
        stderr.write(f"crowdrev: {exc}\n")
        return EXIT_DATA
    finally:
        log.removeHandler(handler)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
