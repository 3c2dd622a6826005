"""Stop-lemma proximity query evaluation and ranking.

Three-word queries hit the triple-key store directly; longer queries are
assembled by joining overlapping word triples, so only occurrences whose
every triple satisfies the index's distance bound are found. Hits are
ranked by an inverse-square proximity score of the position spread.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .ingest import DocumentRegistry, document_records
from .layout import canonicalize
from .lexicon import (
    BuildConfig,
    FrequencyList,
    LemmaClass,
    Lemmatizer,
    classify,
)
from .store import IndexStore, resolve_positions


class QueryError(Exception):
    """The query cannot be served by this index kind."""


def proximity_score(positions: Sequence[int]) -> float:
    """Inverse-square score of the position spread of one occurrence.

    A phrase occurrence of n words has spread n-1 and scores 1.0; every
    extra word between the query words lowers the score. Positions must be
    distinct.
    """
    n = len(positions)
    if n < 2:
        raise QueryError("a proximity score needs at least two positions")
    if len(set(positions)) != n:
        raise QueryError("duplicate positions in %r" % (positions,))
    spread = max(positions) - min(positions)
    return 1.0 / (spread - (n - 2)) ** 2


@dataclass(frozen=True)
class SearchHit:
    """One document's best-scored occurrence of the query words."""

    doc: int
    positions: tuple[int, ...]
    score: float


def resolve_query_ranks(
    words: Sequence[str],
    freq: FrequencyList,
    cfg: BuildConfig,
    lemmatizer: Lemmatizer,
) -> list[int]:
    """Map each query word to the rank of its most frequent stop lemma.

    Words whose lemmas are all outside the stop class cannot be answered
    from this index; they need the other index kinds.
    """
    ranks = []
    for word in words:
        candidates = []
        for lemma in lemmatizer.lemmas(word.casefold()):
            rank = freq.rank_of.get(lemma)
            if rank is not None and classify(rank, cfg) is LemmaClass.STOP:
                candidates.append(rank)
        if not candidates:
            raise QueryError(
                "word %r is not a stop lemma; this index only serves all-stop-lemma "
                "queries" % word
            )
        ranks.append(min(candidates))
    return ranks


def find_occurrences(
    ranks: Sequence[int], store: IndexStore, cfg: BuildConfig
) -> list[tuple[int, tuple[int, ...]]]:
    """Every indexed occurrence of the rank sequence, positions in query order.

    For more than three ranks, consecutive rank triples are joined on their
    two shared positions; an occurrence is found whenever each triple keeps
    both companions within ``max_distance`` of its own anchor lemma.
    """
    n = len(ranks)
    if n < 3:
        raise QueryError("queries need at least 3 words; got %d" % n)
    assemblies = _triple_occurrences(ranks[0], ranks[1], ranks[2], store)
    for i in range(1, n - 2):
        step = _triple_occurrences(ranks[i], ranks[i + 1], ranks[i + 2], store)
        by_overlap: dict[tuple[int, int, int], list[int]] = {}
        for doc, (x0, x1, x2) in step:
            by_overlap.setdefault((doc, x0, x1), []).append(x2)
        extended = []
        for doc, xs in assemblies:
            for tail in by_overlap.get((doc, xs[-2], xs[-1]), ()):
                extended.append((doc, xs + (tail,)))
        assemblies = extended
        if not assemblies:
            break
    return [(doc, xs) for doc, xs in assemblies if len(set(xs)) == n]


def _triple_occurrences(
    r0: int, r1: int, r2: int, store: IndexStore
) -> list[tuple[int, tuple[int, int, int]]]:
    key, perm = canonicalize(r0, r1, r2)
    out = []
    for posting in store.get_postings(key):
        resolved = resolve_positions(key, posting)
        xs = [0, 0, 0]
        for key_slot, query_slot in enumerate(perm):
            xs[query_slot] = resolved[key_slot]
        out.append((posting.doc, (xs[0], xs[1], xs[2])))
    return out


def evaluate(
    words: Sequence[str],
    store: IndexStore,
    freq: FrequencyList,
    cfg: BuildConfig,
    lemmatizer: Lemmatizer,
) -> list[SearchHit]:
    """Ranked document hits for an all-stop-lemma query of three or more words.

    Each document keeps its best-scoring occurrence; hits are ordered by
    score descending, then document id.
    """
    ranks = resolve_query_ranks(words, freq, cfg, lemmatizer)
    return rank_occurrences(find_occurrences(ranks, store, cfg))


def rank_occurrences(
    occurrences: Sequence[tuple[int, tuple[int, ...]]]
) -> list[SearchHit]:
    best: dict[int, tuple[tuple, float, tuple[int, ...]]] = {}
    for doc, xs in occurrences:
        score = proximity_score(xs)
        # best hit per document: highest score, then leftmost, then smallest
        order = (-score, min(xs), xs)
        cur = best.get(doc)
        if cur is None or order < cur[0]:
            best[doc] = (order, score, xs)
    hits = [SearchHit(doc, xs, score) for doc, (_, score, xs) in best.items()]
    hits.sort(key=lambda h: (-h.score, h.doc, min(h.positions)))
    return hits


@dataclass
class RoundtripReport:
    """Outcome of replaying a document's own word windows as queries."""

    doc: int
    windows: int
    misses: list[tuple[int, ...]]

    @property
    def ok(self) -> bool:
        return not self.misses


def roundtrip_check(
    doc_id: int,
    store: IndexStore,
    registry: DocumentRegistry,
    freq: FrequencyList,
    cfg: BuildConfig,
    lemmatizer: Lemmatizer,
    window: int = 3,
    encoding: str = "utf-8",
) -> RoundtripReport:
    """Query back every indexable window of one indexed document.

    Every run of ``window`` consecutive stop-lemma occurrences at distinct
    positions spanning at most ``max_distance`` must surface its exact
    place among the query's occurrences; anything else is a miss.
    """
    if window != 3:
        raise QueryError("only 3-word windows are supported")
    text = Path(registry.path(doc_id)).read_text(encoding=encoding)
    records, _ = document_records(doc_id, text, freq, cfg, lemmatizer)
    checked = 0
    misses = []
    cache: dict[tuple[int, int, int], set[tuple[int, frozenset[int]]]] = {}
    for i in range(len(records) - window + 1):
        run = records[i : i + window]
        positions = frozenset(r.pos for r in run)
        if len(positions) != window:
            continue
        if run[-1].pos - run[0].pos > cfg.max_distance:
            continue
        ranks = tuple(r.rank for r in run)
        found = cache.get(ranks)
        if found is None:
            found = {
                (doc, frozenset(xs))
                for doc, xs in find_occurrences(ranks, store, cfg)
            }
            cache[ranks] = found
        checked += 1
        if (doc_id, positions) not in found:
            misses.append(tuple(sorted(positions)))
    return RoundtripReport(doc_id, checked, misses)
