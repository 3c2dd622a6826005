"""Shared test utilities: corpus generators and independent result oracles."""

from __future__ import annotations

import random
from pathlib import Path

from trikey import BuildConfig, DocumentRegistry, FrequencyList, IdentityLemmatizer
from trikey.cli import run_build
from trikey.layout import Layout, plan_layout
from trikey.lexicon import build_frequency_list, tokenize
from trikey.store import IndexStore


def write_random_corpus(
    directory: Path,
    rng: random.Random,
    docs: int,
    words_per_doc: int,
    vocab_size: int,
) -> list[Path]:
    """Small random corpus of space-separated synthetic words."""
    directory.mkdir(parents=True, exist_ok=True)
    vocab = ["w%d" % i for i in range(vocab_size)]
    paths = []
    for d in range(docs):
        n = rng.randint(0, words_per_doc)
        text = " ".join(rng.choice(vocab) for _ in range(n))
        path = directory / ("doc%04d.txt" % d)
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths


def build_corpus_index(
    paths: list[Path],
    index_dir: Path,
    cfg: BuildConfig,
    variant: str = "optimized",
    file_hint: int = 3,
    layout_: Layout | None = None,
) -> tuple[IndexStore, FrequencyList, DocumentRegistry, dict]:
    """Analyze + build in one step for test corpora."""
    lemmatizer = IdentityLemmatizer()
    freq = build_frequency_list(
        (p.read_text(encoding="utf-8") for p in paths), lemmatizer
    )
    if layout_ is None:
        layout_ = plan_layout(freq, cfg, file_hint)
    store = IndexStore.create(index_dir, cfg, layout_, freq)
    registry = DocumentRegistry()
    report = run_build(paths, freq, cfg, layout_, store, registry, variant=variant)
    store.save_registry(registry)
    return store, freq, registry, report


def scan_query_oracle(
    paths: list[Path],
    freq: FrequencyList,
    ranks: tuple[int, int, int],
    max_distance: int,
) -> set[tuple[int, frozenset[int]]]:
    """Find 3-rank query occurrences by scanning the raw text.

    Mirrors the index's recall contract: the companion words must both lie
    within ``max_distance`` of the occurrence of the rank-wise smallest
    word. Returns (doc, position set) pairs.
    """
    a, b, c = sorted(ranks)
    out = set()
    for doc, path in enumerate(paths):
        by_rank: dict[int, list[int]] = {}
        for word, pos in tokenize(path.read_text(encoding="utf-8")):
            rank = freq.rank_of.get(word)
            if rank is not None:
                by_rank.setdefault(rank, []).append(pos)
        for pf in by_rank.get(a, ()):
            for ps in by_rank.get(b, ()):
                if ps == pf or abs(ps - pf) > max_distance:
                    continue
                for pt in by_rank.get(c, ()):
                    if pt in (pf, ps) or abs(pt - pf) > max_distance:
                        continue
                    out.add((doc, frozenset((pf, ps, pt))))
    return out
