"""Brute-force reference for triple-key posting generation.

Enumerates occurrence triples directly from the record array, with no
queues and no sliding state, so it can arbitrate between index-building
implementations on small inputs. Cost grows with the square of document
length times neighborhood size; keep documents short.
"""

from __future__ import annotations

import random
from collections import defaultdict
from typing import Iterable

from .ingest import Occurrence
from .layout import Span

PostingMap = dict[tuple[int, int, int], set[tuple[int, int, int, int]]]


def reference_postings(
    records: Iterable[Occurrence],
    max_distance: int,
    first: Span,
    second: Span,
) -> PostingMap:
    """All postings a correct builder must emit for one (file, group) task.

    A posting (doc, p, d1, d2) exists under key (a, b, c) for every record
    triple of one document at pairwise-distinct positions where the anchor's
    rank a lies in ``first``, the second rank b in ``second``, a <= b <= c,
    both companion offsets stay within ``max_distance`` of the anchor, and
    equal-rank (b, c) pairs keep only the text-order one.
    """
    out: PostingMap = defaultdict(set)
    for doc_records in _by_document(records):
        for anchor in doc_records:
            _, pf, f = anchor
            if not first.lo <= f <= first.hi:
                continue
            near = [r for r in doc_records if abs(r.pos - pf) <= max_distance]
            for _, ps, s in near:
                if ps == pf or s < f or not second.lo <= s <= second.hi:
                    continue
                for doc, pt, t in near:
                    if pt == pf or pt == ps or t < s:
                        continue
                    if t == s and pt <= ps:
                        continue
                    out[f, s, t].add((doc, pf, ps - pf, pt - pf))
    return dict(out)


def _by_document(records: Iterable[Occurrence]) -> Iterable[list[Occurrence]]:
    chunk: list[Occurrence] = []
    for rec in records:
        if chunk and rec.doc != chunk[-1].doc:
            yield chunk
            chunk = []
        chunk.append(rec)
    if chunk:
        yield chunk


def random_records(
    rng: random.Random,
    ws_count: int,
    docs: int,
    max_words: int,
    record_chance: float = 0.6,
    extra_lemma_chance: float = 0.1,
) -> list[Occurrence]:
    """Random ordered occurrence array for differential testing.

    Words carry a stop lemma with ``record_chance``; a word occasionally
    carries a second lemma at the same position, mirroring multi-lemma
    morphology.
    """
    records = []
    for doc in range(docs):
        for pos in range(rng.randint(0, max_words)):
            if rng.random() >= record_chance:
                continue
            ranks = {rng.randrange(ws_count)}
            if rng.random() < extra_lemma_chance:
                ranks.add(rng.randrange(ws_count))
            for rank in sorted(ranks):
                records.append(Occurrence(doc, pos, rank))
    return records


def random_task_spans(rng: random.Random, ws_count: int) -> tuple[Span, Span]:
    """Random (file span, group span) pair shaped like a real layout slot."""
    a = rng.randrange(ws_count)
    b = rng.randrange(a, ws_count)
    first = Span(a, b)
    g_lo = rng.randrange(a, ws_count)
    second = Span(g_lo, rng.randrange(g_lo, ws_count))
    return first, second
