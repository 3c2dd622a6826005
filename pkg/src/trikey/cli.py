"""Command-line entry point: analyze, build, query, stats, verify.

Every flag can also be set through an environment variable with the
``TRIKEY_`` prefix (``--max-distance`` becomes ``TRIKEY_MAX_DISTANCE``).
Exit codes: 0 success, 1 operational failure, 2 usage or semantic error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import shutil
import sys
import time
from pathlib import Path
from typing import Sequence

from . import builder, oracle
from .builder import OPTIMIZED, SIMPLIFIED, build_iteration
from .ingest import DocumentRegistry, document_records, ingest_iteration
from .layout import Layout, Span, load_layout, plan_layout
from .lexicon import (
    BuildConfig,
    DictionaryLemmatizer,
    FrequencyList,
    IdentityLemmatizer,
    Lemmatizer,
    build_frequency_list,
)
from .query import QueryError, evaluate, roundtrip_check
from .store import DICTIONARY_NAME, IndexStore, StoreError

logger = logging.getLogger(__name__)

ENV_PREFIX = "TRIKEY_"

EXIT_OK = 0
EXIT_OPERATIONAL = 1
EXIT_USAGE = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def collect_documents(corpus: str | Path) -> list[Path]:
    """Paths of a corpus: every file under a directory (sorted), or the
    lines of a manifest file, resolved against the manifest's directory."""
    corpus = Path(corpus)
    if corpus.is_dir():
        return sorted(p for p in corpus.rglob("*") if p.is_file())
    if corpus.is_file():
        base = corpus.parent
        paths = []
        for line in corpus.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            p = Path(line)
            paths.append(p if p.is_absolute() else base / p)
        return paths
    raise CliError("corpus %s is neither a directory nor a manifest file" % corpus)


def _load_lemmatizer(dictionary: str | None, index_dir: Path | None = None) -> Lemmatizer:
    if dictionary:
        return DictionaryLemmatizer.load(dictionary)
    if index_dir is not None and (index_dir / DICTIONARY_NAME).exists():
        return DictionaryLemmatizer.load(index_dir / DICTIONARY_NAME)
    return IdentityLemmatizer()


def parse_byte_size(text: str) -> int:
    """Bytes, with optional k/m/g suffix: '64m' -> 67108864."""
    text = text.strip().lower()
    scale = 1
    if text and text[-1] in "kmg":
        scale = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30}[text[-1]]
        text = text[:-1]
    try:
        value = int(text) * scale
    except ValueError:
        raise argparse.ArgumentTypeError("bad byte size %r" % text)
    if value <= 0:
        raise argparse.ArgumentTypeError("byte size must be positive")
    return value


def parse_phases(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("bad phase list %r" % text)


def _env(flag: str) -> str | None:
    return os.environ.get(ENV_PREFIX + flag.replace("-", "_").upper())


def _add_build_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--max-distance", type=int, default=_env("max-distance") or 5,
        help="how far apart co-occurring stop lemmas may be (default 5)",
    )
    parser.add_argument(
        "--ws-count", type=int, default=_env("ws-count") or 700,
        help="number of top-frequency lemmas treated as stop lemmas (default 700)",
    )
    parser.add_argument(
        "--fu-count", type=int, default=_env("fu-count") or 2100,
        help="number of lemmas after the stop class treated as frequently used (default 2100)",
    )
    parser.add_argument(
        "--threads", type=int, default=_env("threads") or 4,
        help="maximum simultaneously running index-file workers (default 4)",
    )
    parser.add_argument(
        "--ram-limit", type=parse_byte_size, default=_env("ram-limit") or str(256 << 20),
        help="byte budget of one reading pass, with optional k/m/g suffix (default 256m)",
    )
    parser.add_argument(
        "--layout", default=_env("layout"),
        help="layout file to use instead of planning one",
    )
    parser.add_argument(
        "--files", type=int, default=_env("files") or 8,
        help="index file count hint for the layout planner (default 8)",
    )
    parser.add_argument(
        "--phases", type=parse_phases, default=_env("phases"),
        help="comma-separated index file counts per build phase (default: one phase)",
    )
    parser.add_argument(
        "--variant", choices=(SIMPLIFIED, OPTIMIZED), default=_env("variant") or OPTIMIZED,
        help="posting generation algorithm (default optimized)",
    )


def _config_from_args(args: argparse.Namespace) -> BuildConfig:
    ram = args.ram_limit
    if isinstance(ram, str):
        ram = parse_byte_size(ram)
    phases = args.phases
    if isinstance(phases, str):
        phases = parse_phases(phases)
    try:
        return BuildConfig(
            ws_count=int(args.ws_count),
            fu_count=int(args.fu_count),
            max_distance=int(args.max_distance),
            thread_limit=int(args.threads),
            ram_limit=ram,
            phases=phases,
        )
    except ValueError as exc:
        raise CliError(str(exc))


def cmd_analyze(args: argparse.Namespace) -> int:
    paths = collect_documents(args.corpus)
    lemmatizer = _load_lemmatizer(args.dictionary)

    def texts():
        for path in paths:
            try:
                yield path.read_text(encoding=args.encoding)
            except (OSError, UnicodeDecodeError) as exc:
                logger.warning("skipping unreadable document %s: %s", path, exc)

    freq = build_frequency_list(texts(), lemmatizer)
    freq.save(args.out)
    if not len(freq):
        print("warning: corpus produced an empty lexicon", file=sys.stderr)
    print("%d lemmas -> %s" % (len(freq), args.out))
    return EXIT_OK


def cmd_build(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    paths = collect_documents(args.corpus)
    try:
        freq = FrequencyList.load(args.lexicon)
    except OSError as exc:
        raise CliError("cannot read lexicon %s: %s" % (args.lexicon, exc))

    index_dir = Path(args.index)
    if args.layout:
        layout_ = load_layout(args.layout, cfg.ws_count)
    else:
        layout_ = plan_layout(freq, cfg, max(1, min(args.files, cfg.ws_count)))

    if (index_dir / "store.json").exists():
        if not args.append:
            raise CliError(
                "index %s already exists; pass --append to add documents" % index_dir
            )
        store = IndexStore.open(index_dir)
        store.check_compatible(cfg, layout_)
    else:
        store = IndexStore.create(index_dir, cfg, layout_, freq)
    if args.dictionary:
        shutil.copyfile(args.dictionary, index_dir / DICTIONARY_NAME)
    lemmatizer = _load_lemmatizer(args.dictionary, index_dir)

    registry = store.load_registry()
    report = run_build(
        paths, freq, cfg, layout_, store, registry,
        variant=args.variant, lemmatizer=lemmatizer, encoding=args.encoding,
    )
    store.save_registry(registry)
    (index_dir / "build-report.json").write_text(
        json.dumps(report, indent=2) + "\n", encoding="utf-8"
    )
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(
            "indexed %d documents, %d postings in %d iteration(s), %.2fs"
            % (
                report["documents"],
                report["postings"],
                len(report["iterations"]),
                report["wall_seconds"],
            )
        )
        for it in report["iterations"]:
            print(
                "  iteration %d: %d postings, utilization %.3f, peak share %.3f"
                % (it["iteration"], it["postings"], it["utilization"], it["peak_share"])
            )
    return EXIT_OK


def run_build(
    paths: Sequence[Path],
    freq: FrequencyList,
    cfg: BuildConfig,
    layout_: Layout,
    store: IndexStore,
    registry: DocumentRegistry,
    variant: str = OPTIMIZED,
    lemmatizer: Lemmatizer | None = None,
    encoding: str = "utf-8",
) -> dict:
    """Run read/write iterations until the corpus is exhausted; returns the report."""
    lemmatizer = lemmatizer or IdentityLemmatizer()
    started = time.perf_counter()
    docs_before = len(registry)
    cursor = 0
    iterations = []
    total_postings = 0
    while cursor < len(paths):
        array, registry, cursor = ingest_iteration(
            paths, freq, cfg, lemmatizer, registry, cursor, encoding
        )
        if not len(array):
            continue
        result = build_iteration(array, layout_, cfg, store, variant)
        occupancy, peak_share = result.utilization()
        peak = max(count for count, _ in result.log.events)
        total = sum(delta for _, delta in result.log.events)
        total_postings += result.postings
        iterations.append(
            {
                "iteration": len(iterations),
                "records": len(array),
                "record_bytes": array.byte_size,
                "postings": result.postings,
                "utilization": occupancy,
                "peak_share": peak_share,
                "peak_threads": peak,
                "total_seconds": total,
                "files": [
                    {
                        "file": s.file_index,
                        "wall_seconds": s.wall_seconds,
                        "postings": s.postings,
                    }
                    for s in result.file_stats
                ],
            }
        )
    return {
        "documents": len(registry) - docs_before,
        "postings": total_postings,
        "variant": variant,
        "max_distance": cfg.max_distance,
        "wall_seconds": time.perf_counter() - started,
        "iterations": iterations,
    }


def cmd_query(args: argparse.Namespace) -> int:
    store = IndexStore.open(args.index)
    freq = store.load_lexicon()
    registry = store.load_registry()
    lemmatizer = _load_lemmatizer(None, store.path)
    hits = evaluate(args.words, store, freq, store.cfg, lemmatizer)
    if args.json:
        print(
            json.dumps(
                [
                    {
                        "doc": h.doc,
                        "path": registry.path(h.doc),
                        "score": h.score,
                        "positions": list(h.positions),
                    }
                    for h in hits
                ],
                indent=2,
            )
        )
    else:
        for h in hits:
            print(
                "%s\t%.6g\t%s"
                % (registry.path(h.doc), h.score, ",".join(str(x) for x in h.positions))
            )
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    store = IndexStore.open(args.index)
    stats = store.stats()
    if args.json:
        print(
            json.dumps(
                {
                    "files": [
                        {
                            "file": f.file_index,
                            "keys": f.keys,
                            "postings": f.postings,
                            "block_bytes": f.block_bytes,
                            "file_bytes": f.file_bytes,
                        }
                        for f in stats.files
                    ],
                    "total_keys": stats.total_keys,
                    "total_postings": stats.total_postings,
                    "total_bytes": stats.total_bytes,
                },
                indent=2,
            )
        )
    else:
        for f in stats.files:
            print(
                "file %d: %d keys, %d postings, %d bytes"
                % (f.file_index, f.keys, f.postings, f.file_bytes)
            )
        print(
            "total: %d keys, %d postings, %d bytes"
            % (stats.total_keys, stats.total_postings, stats.total_bytes)
        )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    if args.selftest:
        return _verify_selftest(args.runs, args.seed)
    if not args.index:
        raise CliError("verify needs an index directory or --selftest")
    return _verify_index(args)


def _verify_selftest(runs: int, seed: int) -> int:
    """Differential check of both builder variants against the reference."""
    rng = random.Random(seed)
    for run in range(runs):
        ws = rng.randint(1, 50)
        records = oracle.random_records(rng, ws, docs=rng.randint(1, 4), max_words=120)
        first, second = oracle.random_task_spans(rng, ws)
        cfg = BuildConfig(ws_count=ws, max_distance=rng.choice((1, 2, 3, 5, 7, 9)))
        expected = oracle.reference_postings(records, cfg.max_distance, first, second)
        for variant in (SIMPLIFIED, OPTIMIZED):
            task = builder.GroupTask(first, second, variant)
            sink: dict = {}
            builder.process_group(records, task, cfg, sink, instrument=True)
            actual = {key: set(postings) for key, postings in sink.items() if postings}
            if actual != expected:
                print(
                    "divergence in run %d (%s): ws=%d md=%d first=%s second=%s"
                    % (run, variant, ws, cfg.max_distance, first, second)
                )
                _print_divergence(expected, actual)
                return EXIT_OPERATIONAL
    print("selftest ok: %d runs, both variants match the reference" % runs)
    return EXIT_OK


def _print_divergence(expected: dict, actual: dict) -> None:
    for key in sorted(set(expected) | set(actual)):
        want = expected.get(key, set())
        got = actual.get(key, set())
        if want != got:
            print("  key %s: missing %s, extra %s" % (key, sorted(want - got), sorted(got - want)))
            return


def _verify_index(args: argparse.Namespace) -> int:
    store = IndexStore.open(args.index)
    freq = store.load_lexicon()
    registry = store.load_registry()
    cfg = store.cfg
    lemmatizer = _load_lemmatizer(None, store.path)
    doc_ids = list(range(len(registry)))
    if args.sample and args.sample < len(doc_ids):
        doc_ids = random.Random(args.seed).sample(doc_ids, args.sample)
        doc_ids.sort()

    failures = 0
    windows = 0
    full = Span(0, cfg.ws_count - 1)
    expected: dict = {}
    for doc_id in doc_ids:
        report = roundtrip_check(doc_id, store, registry, freq, cfg, lemmatizer)
        windows += report.windows
        if not report.ok:
            failures += len(report.misses)
            print("roundtrip miss in doc %d (%s): windows at %s"
                  % (doc_id, registry.path(doc_id), report.misses[:5]))
        text = Path(registry.path(doc_id)).read_text(encoding=args.encoding)
        records, _ = document_records(doc_id, text, freq, cfg, lemmatizer)
        for key, postings in oracle.reference_postings(
            records, cfg.max_distance, full, full
        ).items():
            expected.setdefault(key, set()).update(postings)

    wanted_docs = set(doc_ids)
    actual: dict = {}
    for key, postings in store.iter_items():
        kept = {tuple(p) for p in postings if p.doc in wanted_docs}
        if kept:
            actual[key] = kept
    if actual != expected:
        failures += 1
        print("store content diverges from the reference enumeration:")
        _print_divergence(expected, actual)

    print(
        "verified %d documents, %d roundtrip windows: %s"
        % (len(doc_ids), windows, "FAILED (%d)" % failures if failures else "ok")
    )
    return EXIT_OPERATIONAL if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trikey",
        description="Proximity full-text index over three-component stop-lemma keys.",
    )
    parser.add_argument("--encoding", default=_env("encoding") or "utf-8",
                        help="document text encoding (default utf-8)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="count lemma frequencies into a lexicon file")
    p.add_argument("corpus", help="corpus directory or manifest file")
    p.add_argument("--out", required=True, help="lexicon output path")
    p.add_argument("--dictionary", default=_env("dictionary"),
                   help="word -> lemmas table for the lemmatizer")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("build", help="build or extend an index from a corpus")
    p.add_argument("corpus", help="corpus directory or manifest file")
    p.add_argument("--index", required=True, help="index directory")
    p.add_argument("--lexicon", required=True, help="lexicon file from analyze")
    p.add_argument("--dictionary", default=_env("dictionary"),
                   help="word -> lemmas table for the lemmatizer")
    p.add_argument("--append", action="store_true",
                   help="add documents to an existing index")
    p.add_argument("--json", action="store_true", help="print the build report as JSON")
    _add_build_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="run an all-stop-lemma proximity query")
    p.add_argument("index", help="index directory")
    p.add_argument("words", nargs="+", help="query words (3 or more)")
    p.add_argument("--json", action="store_true", help="print hits as JSON")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("stats", help="print store size metrics")
    p.add_argument("index", help="index directory")
    p.add_argument("--json", action="store_true", help="print metrics as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("verify", help="check an index against the brute-force reference")
    p.add_argument("index", nargs="?", help="index directory")
    p.add_argument("--selftest", action="store_true",
                   help="run generated-corpus differential checks instead")
    p.add_argument("--runs", type=int, default=100, help="selftest run count (default 100)")
    p.add_argument("--seed", type=int, default=1, help="random seed")
    p.add_argument("--sample", type=int, default=0,
                   help="verify only this many documents (default: all)")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.code
    except QueryError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
    except (StoreError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
