"""Partitioning of the triple-key space into index files and groups.

An index file owns a contiguous range of first key components; inside a
file, groups own contiguous ranges of second components. Together the
ranges tile the whole key space, so every canonical key routes to exactly
one (file, group) slot.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

from .lexicon import BuildConfig, FrequencyList


class LayoutError(ValueError):
    """A layout violates the tiling rules or cannot be parsed."""


class Span(NamedTuple):
    """Inclusive rank range [lo, hi]."""

    lo: int
    hi: int

    def __contains__(self, rank: object) -> bool:
        return isinstance(rank, int) and self.lo <= rank <= self.hi

    def __str__(self) -> str:
        return "%d-%d" % (self.lo, self.hi)


class TripleKey(NamedTuple):
    """Canonical lemma-rank triple, components in non-decreasing order."""

    a: int
    b: int
    c: int


def canonicalize(r0: int, r1: int, r2: int) -> tuple[TripleKey, tuple[int, int, int]]:
    """Sort three ranks into a canonical key.

    Returns the key and the permutation that produced it: ``perm[j]`` is
    the input slot that landed in key slot ``j``. The sort is stable, so
    equal ranks keep their input order.
    """
    order = sorted(range(3), key=lambda i: ((r0, r1, r2)[i], i))
    ranks = (r0, r1, r2)
    key = TripleKey(ranks[order[0]], ranks[order[1]], ranks[order[2]])
    return key, (order[0], order[1], order[2])


@dataclass(frozen=True)
class IndexFilePlan:
    """One index file: its first-component span and its group spans."""

    first: Span
    groups: tuple[Span, ...]


@dataclass(frozen=True)
class Layout:
    """Ordered index-file plans tiling the key space for ``ws_count`` lemmas."""

    files: tuple[IndexFilePlan, ...]
    ws_count: int

    def __post_init__(self) -> None:
        validate_layout(self.files, self.ws_count)

    def file_for(self, first_rank: int) -> int:
        lo, hi = 0, len(self.files) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if first_rank > self.files[mid].first.hi:
                lo = mid + 1
            else:
                hi = mid
        return lo


def validate_layout(files: Sequence[IndexFilePlan], ws_count: int) -> None:
    if ws_count < 1:
        raise LayoutError("ws_count must be >= 1")
    if not files:
        raise LayoutError("layout has no index files")
    expected_lo = 0
    for i, plan in enumerate(files):
        if plan.first.lo != expected_lo:
            raise LayoutError(
                "file %d starts at %d, expected %d" % (i, plan.first.lo, expected_lo)
            )
        if plan.first.lo > plan.first.hi:
            raise LayoutError("file %d has empty span %s" % (i, plan.first))
        if not plan.groups:
            raise LayoutError("file %d has no groups" % i)
        if plan.groups[0].lo != plan.first.lo:
            raise LayoutError(
                "file %d: first group must start at %d" % (i, plan.first.lo)
            )
        g_expected = plan.first.lo
        for g in plan.groups:
            if g.lo != g_expected:
                raise LayoutError("file %d: group gap before %s" % (i, g))
            if g.lo > g.hi:
                raise LayoutError("file %d: empty group %s" % (i, g))
            g_expected = g.hi + 1
        if g_expected != ws_count:
            raise LayoutError(
                "file %d: groups cover up to %d, need %d" % (i, g_expected - 1, ws_count - 1)
            )
        expected_lo = plan.first.hi + 1
    if expected_lo != ws_count:
        raise LayoutError(
            "files cover up to %d, need %d" % (expected_lo - 1, ws_count - 1)
        )


def route(key: TripleKey, layout: Layout) -> tuple[int, int]:
    """Locate the (file index, group index) slot owning a canonical key."""
    a, b, _ = key
    fi = layout.file_for(a)
    plan = layout.files[fi]
    for gi, g in enumerate(plan.groups):
        if g.lo <= b <= g.hi:
            return fi, gi
    raise LayoutError("no group for key %r in file %d" % (key, fi))


def split_file_by_groups(plan: IndexFilePlan, parts: int) -> list[IndexFilePlan]:
    """Split one file plan into ``parts`` plans over contiguous group runs."""
    if parts < 1 or parts > len(plan.groups):
        raise LayoutError(
            "cannot split %d groups into %d parts" % (len(plan.groups), parts)
        )
    out = []
    start = 0
    for i in range(parts):
        size = len(plan.groups) // parts + (1 if i < len(plan.groups) % parts else 0)
        out.append(IndexFilePlan(plan.first, plan.groups[start : start + size]))
        start += size
    return out


# Layout planning. The estimated work of first component f is
# count(f) * sum(count(s) for s >= f): one factor per (f, s) key prefix the
# file will iterate. Files are cut greedily against an adaptive target and
# boundaries are then nudged until the heaviest/lightest ratio is as small
# as greedy can make it.


def _first_component_weights(counts: Sequence[int]) -> list[float]:
    suffix = 0.0
    suffixes = [0.0] * len(counts)
    for i in range(len(counts) - 1, -1, -1):
        suffix += counts[i]
        suffixes[i] = suffix
    # +1 keeps zero-count ranks from collapsing to zero-width files
    return [(counts[i] + 1.0) * (suffixes[i] + 1.0) for i in range(len(counts))]


def _cut_balanced(weights: Sequence[float], parts: int) -> list[int]:
    """Greedy prefix cuts: returns the exclusive end index of each part."""
    n = len(weights)
    parts = max(1, min(parts, n))
    cuts = []
    start = 0
    remaining = sum(weights)
    for part in range(parts, 1, -1):
        target = remaining / part
        acc = 0.0
        i = start
        # leave at least one rank per remaining part
        while i < n - (part - 1) and acc + weights[i] <= target:
            acc += weights[i]
            i += 1
        if i == start:
            acc += weights[i]
            i += 1
        cuts.append(i)
        remaining -= acc
        start = i
    cuts.append(n)
    return cuts


def _part_weights(weights: Sequence[float], cuts: Sequence[int]) -> list[float]:
    out = []
    start = 0
    for end in cuts:
        out.append(sum(weights[start:end]))
        start = end
    return out


def _improve_cuts(weights: Sequence[float], cuts: list[int]) -> list[int]:
    """Move single ranks across part boundaries while the spread shrinks."""
    def spread(c: list[int]) -> float:
        parts = _part_weights(weights, c)
        return max(parts) / max(min(parts), 1e-300)

    best = spread(cuts)
    improved = True
    while improved:
        improved = False
        for i in range(len(cuts) - 1):
            for delta in (-1, 1):
                trial = list(cuts)
                trial[i] += delta
                lo = trial[i - 1] if i > 0 else 0
                if not lo < trial[i] < trial[i + 1]:
                    continue
                s = spread(trial)
                if s < best - 1e-12:
                    best, cuts, improved = s, trial, True
    return cuts


def plan_layout(freq: FrequencyList, cfg: BuildConfig, file_count_hint: int) -> Layout:
    """Plan a balanced layout for a frequency list under a build config."""
    counts = [freq.count(i) for i in range(min(cfg.ws_count, len(freq)))]
    return plan_layout_from_counts(counts, cfg.ws_count, file_count_hint)


def plan_layout_from_counts(
    counts_by_rank: Sequence[int], ws_count: int, file_count_hint: int
) -> Layout:
    """Plan a balanced layout from per-rank occurrence counts.

    ``counts_by_rank`` may be shorter than ``ws_count``; missing ranks count
    as zero. The hint is advisory: the planner may emit one file more or
    fewer if that keeps the heaviest/lightest estimated file work within a
    factor of two.
    """
    if ws_count < 1:
        raise LayoutError("ws_count must be >= 1")
    counts = [0] * ws_count
    for i in range(min(ws_count, len(counts_by_rank))):
        counts[i] = counts_by_rank[i]
    weights = _first_component_weights(counts)

    best_cuts: list[int] | None = None
    best_spread = float("inf")
    for parts in _hint_candidates(file_count_hint, ws_count):
        cuts = _improve_cuts(weights, _cut_balanced(weights, parts))
        parts_w = _part_weights(weights, cuts)
        s = max(parts_w) / max(min(parts_w), 1e-300)
        if len(cuts) == file_count_hint and s <= 2.0:
            best_cuts, best_spread = cuts, s
            break
        if s < best_spread:
            best_cuts, best_spread = cuts, s

    assert best_cuts is not None
    files = []
    start = 0
    group_count = min(len(best_cuts), 4)
    for end in best_cuts:
        first = Span(start, end - 1)
        files.append(IndexFilePlan(first, _plan_groups(counts, first, ws_count, group_count)))
        start = end
    return Layout(tuple(files), ws_count)


def _hint_candidates(hint: int, ws_count: int) -> list[int]:
    hint = max(1, min(hint, ws_count))
    cands = [hint]
    if hint - 1 >= 1:
        cands.append(hint - 1)
    if hint + 1 <= ws_count:
        cands.append(hint + 1)
    return cands


def _plan_groups(
    counts: Sequence[int], first: Span, ws_count: int, group_count: int
) -> tuple[Span, ...]:
    """Split [first.lo, ws_count-1] into groups balanced by second-component mass."""
    lo = first.lo
    weights = [counts[s] + 1.0 for s in range(lo, ws_count)]
    cuts = _cut_balanced(weights, min(group_count, len(weights)))
    groups = []
    start = lo
    for end in cuts:
        groups.append(Span(start, lo + end - 1))
        start = lo + end
    return tuple(groups)


# Text form: one line per index file, "lo-hi : lo-hi, lo-hi, ...".


def format_layout(layout: Layout) -> str:
    lines = []
    for plan in layout.files:
        lines.append("%s : %s" % (plan.first, ", ".join(str(g) for g in plan.groups)))
    return "\n".join(lines) + "\n"


def parse_layout(text: str, ws_count: int) -> Layout:
    files = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            first_part, _, groups_part = line.partition(":")
            first = _parse_span(first_part)
            groups = tuple(_parse_span(g) for g in groups_part.split(","))
        except ValueError as exc:
            raise LayoutError("line %d: %s" % (lineno, exc)) from exc
        files.append(IndexFilePlan(first, groups))
    return Layout(tuple(files), ws_count)


def _parse_span(text: str) -> Span:
    lo, sep, hi = text.strip().partition("-")
    if not sep:
        raise ValueError("expected 'lo-hi', got %r" % text.strip())
    return Span(int(lo), int(hi))


def load_layout(path: str | Path, ws_count: int) -> Layout:
    return parse_layout(Path(path).read_text(encoding="utf-8"), ws_count)


def save_layout(layout: Layout, path: str | Path) -> None:
    Path(path).write_text(format_layout(layout), encoding="utf-8")


def layout_fingerprint(layout: Layout) -> bytes:
    """8-byte digest of the canonical text form; guards store/layout mismatch."""
    return hashlib.sha256(format_layout(layout).encode("utf-8")).digest()[:8]
