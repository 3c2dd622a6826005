"""Tokenization, pluggable lemmatization, and the frequency-ordered lemma list.

Lemmas are numbered by corpus frequency rank (rank 0 = most frequent) and
the rank decides the lemma class: the top ``ws_count`` ranks are stop
lemmas, the next ``fu_count`` are frequently used, everything else is
ordinary. Only stop lemmas participate in the triple-key index.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Protocol

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[tuple[str, int]]:
    """Split text into (word, position) pairs.

    Words are maximal alphanumeric runs, case-folded; positions are 0-based
    consecutive word ordinals.
    """
    return [(m.group().casefold(), i) for i, m in enumerate(_WORD_RE.finditer(text))]


class Lemmatizer(Protocol):
    """Maps a token to the non-empty list of its base forms."""

    def lemmas(self, word: str) -> tuple[str, ...]: ...


class IdentityLemmatizer:
    """Fallback provider: every word is its own (case-folded) lemma."""

    def lemmas(self, word: str) -> tuple[str, ...]:
        return (word.casefold(),)


class DictionaryLemmatizer:
    """Lemma lookup from a word -> lemmas table; unknown words map to themselves.

    The table file has one entry per line: ``word TAB lemma[,lemma...]``.
    Duplicate lemmas of one word are dropped, first occurrence wins.
    """

    def __init__(self, table: dict[str, tuple[str, ...]]):
        self._table = {w.casefold(): _dedup(ls) for w, ls in table.items()}

    def lemmas(self, word: str) -> tuple[str, ...]:
        word = word.casefold()
        return self._table.get(word) or (word,)

    @classmethod
    def load(cls, path: str | Path) -> "DictionaryLemmatizer":
        table: dict[str, tuple[str, ...]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            word, _, lemmas = line.partition("\t")
            table[word] = tuple(l.casefold() for l in lemmas.split(",") if l)
        return cls(table)

    def save(self, path: str | Path) -> None:
        lines = ["%s\t%s" % (w, ",".join(ls)) for w, ls in sorted(self._table.items())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _dedup(lemmas: Iterable[str]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for lemma in lemmas:
        seen.setdefault(lemma.casefold())
    return tuple(seen)


class LemmaClass(enum.Enum):
    STOP = "stop"
    FREQUENT = "frequent"
    ORDINARY = "ordinary"


@dataclass(frozen=True)
class BuildConfig:
    """Tunable parameters of one index build.

    ``phases`` optionally partitions the layout's index files into groups
    that are built one after the other, shrinking the occurrence array in
    between; ``None`` means a single phase.
    """

    ws_count: int = 700
    fu_count: int = 2100
    max_distance: int = 5
    thread_limit: int = 4
    ram_limit: int = 256 * 1024 * 1024
    phases: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.ws_count < 1:
            raise ValueError("ws_count must be >= 1")
        if self.fu_count < 0:
            raise ValueError("fu_count must be >= 0")
        if self.max_distance < 1:
            raise ValueError("max_distance must be >= 1")
        if self.thread_limit < 1:
            raise ValueError("thread_limit must be >= 1")
        if self.ram_limit <= 0:
            raise ValueError("ram_limit must be positive")
        if self.phases is not None and (not self.phases or any(n < 1 for n in self.phases)):
            raise ValueError("phases must be a non-empty tuple of positive counts")


def classify(rank: int, cfg: BuildConfig) -> LemmaClass:
    """Class of the lemma with the given frequency rank."""
    if rank < 0:
        raise ValueError("rank must be >= 0")
    if rank < cfg.ws_count:
        return LemmaClass.STOP
    if rank < cfg.ws_count + cfg.fu_count:
        return LemmaClass.FREQUENT
    return LemmaClass.ORDINARY


@dataclass
class FrequencyList:
    """All lemmas ordered by decreasing occurrence count.

    Ties are broken by lemma text ascending so the numbering is
    deterministic. ``rank_of`` maps a lemma to its 0-based ordinal.
    """

    entries: list[tuple[str, int]]
    rank_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.rank_of = {lemma: i for i, (lemma, _) in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)

    def lemma(self, rank: int) -> str:
        return self.entries[rank][0]

    def count(self, rank: int) -> int:
        return self.entries[rank][1]

    @classmethod
    def from_counts(cls, counts: dict[str, int]) -> "FrequencyList":
        entries = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(entries)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rank, (lemma, count) in enumerate(self.entries):
                f.write("%d\t%s\t%d\n" % (rank, lemma, count))

    @classmethod
    def load(cls, path: str | Path) -> "FrequencyList":
        entries: list[tuple[str, int]] = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                rank_s, lemma, count_s = line.split("\t")
                if int(rank_s) != len(entries):
                    raise ValueError("lexicon file ranks are not dense at %s" % rank_s)
                entries.append((lemma, int(count_s)))
        return cls(entries)


def build_frequency_list(
    docs: Iterable[str], lemmatizer: Lemmatizer | None = None
) -> FrequencyList:
    """Count lemma occurrences over a corpus and rank them.

    Each lemma of a multi-lemma word counts once per word occurrence.
    An empty corpus yields an empty list.
    """
    lemmatizer = lemmatizer or IdentityLemmatizer()
    counts: Counter[str] = Counter()
    for text in docs:
        for word, _ in tokenize(text):
            counts.update(lemmatizer.lemmas(word))
    return FrequencyList.from_counts(dict(counts))


def lemma_occurrences(
    text: str, lemmatizer: Lemmatizer
) -> Iterator[tuple[int, str]]:
    """Yield (position, lemma) for every lemma of every word of ``text``."""
    for word, pos in tokenize(text):
        for lemma in lemmatizer.lemmas(word):
            yield pos, lemma
