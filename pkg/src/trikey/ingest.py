"""Document reading stage: stream documents into the in-memory occurrence array.

Each stop-lemma occurrence becomes a compact (doc id, position, rank)
record. The array is bounded by a byte budget measured against the
delta-encoded record size; one reading pass fills the array with whole
documents and reports where the next pass must resume.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

from .codec import read_uvarint, write_uvarint
from .lexicon import BuildConfig, FrequencyList, LemmaClass, Lemmatizer, classify, tokenize

logger = logging.getLogger(__name__)


class Occurrence(NamedTuple):
    """One stop lemma at one word position of one document."""

    doc: int
    pos: int
    rank: int


class OccurrenceArray:
    """Occurrences ordered by (doc, pos, rank), with their encoded byte size."""

    def __init__(self) -> None:
        self.records: list[Occurrence] = []
        self.byte_size = 0

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Occurrence]:
        return iter(self.records)

    def extend(self, records: Sequence[Occurrence], byte_size: int) -> None:
        if records and self.records and records[0] <= self.records[-1]:
            raise ValueError("occurrence array must grow in (doc, pos, rank) order")
        self.records.extend(records)
        self.byte_size += byte_size

    def check_ordered(self) -> None:
        recs = self.records
        for i in range(1, len(recs)):
            if recs[i] < recs[i - 1]:
                raise AssertionError("occurrence array out of order at %d" % i)


def encode_record(rec: Occurrence, prev: Occurrence | None) -> bytes:
    """Delta-encode one occurrence against its predecessor.

    Layout: one varint carrying the lemma rank and a new-document flag in
    its low bit; on a new document the doc-id delta and the absolute
    position follow, otherwise just the position delta. Typical same-document
    records take 2-3 bytes.
    """
    out = bytearray()
    new_doc = prev is None or rec.doc != prev.doc
    write_uvarint(out, rec.rank << 1 | new_doc)
    if new_doc:
        write_uvarint(out, rec.doc - (prev.doc if prev else 0))
        write_uvarint(out, rec.pos)
    else:
        write_uvarint(out, rec.pos - prev.pos)
    return bytes(out)


def decode_record(data: bytes, pos: int, prev: Occurrence | None) -> tuple[Occurrence, int]:
    head, pos = read_uvarint(data, pos)
    rank = head >> 1
    if head & 1:
        delta, pos = read_uvarint(data, pos)
        word_pos, pos = read_uvarint(data, pos)
        doc = (prev.doc if prev else 0) + delta
    else:
        if prev is None:
            raise ValueError("continuation record without a predecessor")
        delta, pos = read_uvarint(data, pos)
        doc, word_pos = prev.doc, prev.pos + delta
    return Occurrence(doc, word_pos, rank), pos


@dataclass
class DocumentRegistry:
    """Dense doc-id assignment plus per-document metadata."""

    entries: list[tuple[int, str, int]] = field(default_factory=list)

    def add(self, path: str, word_count: int) -> int:
        doc_id = len(self.entries)
        self.entries.append((doc_id, path, word_count))
        return doc_id

    def path(self, doc_id: int) -> str:
        return self.entries[doc_id][1]

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for doc_id, doc_path, words in self.entries:
                f.write("%d\t%s\t%d\n" % (doc_id, doc_path, words))

    @classmethod
    def load(cls, path: str | Path) -> "DocumentRegistry":
        reg = cls()
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                doc_id, doc_path, words = line.split("\t")
                if int(doc_id) != len(reg.entries):
                    raise ValueError("registry ids are not dense at %s" % doc_id)
                reg.entries.append((int(doc_id), doc_path, int(words)))
        return reg


def document_records(
    doc_id: int, text: str, freq: FrequencyList, cfg: BuildConfig, lemmatizer: Lemmatizer
) -> tuple[list[Occurrence], int]:
    """All stop-lemma occurrences of one document, ordered, with word count."""
    records = []
    word_count = 0
    for word, pos in tokenize(text):
        word_count += 1
        ranks = []
        for lemma in lemmatizer.lemmas(word):
            rank = freq.rank_of.get(lemma)
            if rank is not None and classify(rank, cfg) is LemmaClass.STOP:
                ranks.append(rank)
        for rank in sorted(ranks):
            records.append(Occurrence(doc_id, pos, rank))
    return records, word_count


def _encoded_size(records: Sequence[Occurrence], prev: Occurrence | None) -> int:
    total = 0
    for rec in records:
        total += len(encode_record(rec, prev))
        prev = rec
    return total


def ingest_iteration(
    paths: Sequence[str | Path],
    freq: FrequencyList,
    cfg: BuildConfig,
    lemmatizer: Lemmatizer,
    registry: DocumentRegistry | None = None,
    cursor: int = 0,
    encoding: str = "utf-8",
) -> tuple[OccurrenceArray, DocumentRegistry, int]:
    """Read documents from ``cursor`` until the byte budget fills or the list ends.

    Documents are never split across iterations: a document whose records
    would push the array past ``cfg.ram_limit`` is left for the next
    iteration (unless the array is still empty, in which case it is taken
    alone). Unreadable documents are skipped with a diagnostic. Returns the
    array, the registry, and the index of the next unread document.
    """
    registry = registry if registry is not None else DocumentRegistry()
    array = OccurrenceArray()
    while cursor < len(paths):
        path = paths[cursor]
        try:
            text = Path(path).read_text(encoding=encoding)
        except (OSError, UnicodeDecodeError) as exc:
            logger.warning("skipping unreadable document %s: %s", path, exc)
            cursor += 1
            continue
        doc_id = len(registry)
        records, word_count = document_records(doc_id, text, freq, cfg, lemmatizer)
        prev = array.records[-1] if array.records else None
        size = _encoded_size(records, prev)
        if array.records and array.byte_size + size > cfg.ram_limit:
            break
        if size > cfg.ram_limit:
            logger.warning(
                "document %s alone exceeds the byte budget (%d > %d); taking it anyway",
                path, size, cfg.ram_limit,
            )
        registry.add(str(path), word_count)
        array.extend(records, size)
        cursor += 1
        if array.byte_size >= cfg.ram_limit:
            break
    return array, registry, cursor


def prune_occurrences(array: OccurrenceArray, max_completed_rank: int) -> OccurrenceArray:
    """Drop records whose rank can no longer appear in any remaining key.

    After all index files covering first components up to
    ``max_completed_rank`` are written, every remaining key has all three
    components above that rank, so records at or below it are dead weight.
    """
    out = OccurrenceArray()
    keep = [rec for rec in array.records if rec.rank > max_completed_rank]
    size = _encoded_size(keep, None)
    out.extend(keep, size)
    return out
