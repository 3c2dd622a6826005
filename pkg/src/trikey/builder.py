"""Index-writing stage: sliding-queue posting generation and threaded scheduling.

Each index file is built by one worker; a worker makes one pass over the
occurrence array per group. Within a pass, a singly linked queue (or three
of them, in the optimized variant) holds the records of a sliding window
of at most twice the distance bound; retiring the window head is the
moment postings are emitted, which keeps every anchor's full neighborhood
in view exactly once.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from threading import Lock
from typing import TYPE_CHECKING, Callable, Iterable, NamedTuple, Sequence

from .ingest import Occurrence, OccurrenceArray, prune_occurrences
from .layout import Layout, Span
from .lexicon import BuildConfig

if TYPE_CHECKING:
    from .store import SegmentWriter

SIMPLIFIED = "simplified"
OPTIMIZED = "optimized"

# postings handed to the store per append call
APPEND_BATCH = 4096


class GroupTask(NamedTuple):
    """One (file range, group range) unit of work."""

    first: Span
    second: Span
    variant: str = OPTIMIZED


class _Node:
    __slots__ = ("rec", "next", "processed")

    def __init__(self, rec: Occurrence):
        self.rec = rec
        self.next: _Node | None = None
        self.processed = False


class OccurrenceQueue:
    """Singly linked FIFO over occurrence records.

    Supports append at the end, removal at the start, and forward walking
    via node ``next`` pointers. All live elements share one document id and
    are ordered by position.
    """

    __slots__ = ("start", "end")

    def __init__(self) -> None:
        self.start: _Node | None = None
        self.end: _Node | None = None

    def append(self, rec: Occurrence) -> _Node:
        node = _Node(rec)
        if self.end is None:
            self.start = node
        else:
            self.end.next = node
        self.end = node
        return node

    def pop_start(self) -> Occurrence:
        node = self.start
        if node is None:
            raise IndexError("pop from empty queue")
        self.start = node.next
        if self.start is None:
            self.end = None
        return node.rec

    def __bool__(self) -> bool:
        return self.start is not None

    def __iter__(self):
        node = self.start
        while node is not None:
            yield node.rec
            node = node.next


class TripleQueues:
    """The three role queues of the optimized variant.

    ``first`` holds records usable as the anchor component, ``second`` those
    usable as the middle component, ``third`` every live record. A record
    can sit in several queues at once.
    """

    __slots__ = ("first", "second", "third")

    def __init__(self) -> None:
        self.first = OccurrenceQueue()
        self.second = OccurrenceQueue()
        self.third = OccurrenceQueue()


def _emit_into(sink: dict) -> Callable[[tuple, tuple], None]:
    def emit(key: tuple, posting: tuple) -> None:
        lst = sink.get(key)
        if lst is None:
            lst = sink[key] = []
        lst.append(posting)

    return emit


def extract_first(
    queues: TripleQueues, task: GroupTask, cfg: BuildConfig, sink: dict
) -> int:
    """Retire the head of the third queue, emitting its window's postings.

    Every anchor within ``max_distance`` of the head is paired with all
    eligible middle/tail records still in view, then dropped; the head is
    then removed from whichever queues hold it. Requires a non-empty third
    queue.
    """
    md = cfg.max_distance
    head = queues.third.start
    if head is None:
        raise IndexError("extract from empty queue")
    head_rec = head.rec
    bound = head_rec.pos + md
    emit = _emit_into(sink)
    emitted = 0

    first_q = queues.first
    while first_q.start is not None and first_q.start.rec.pos <= bound:
        f_rec = first_q.pop_start()
        doc, f_pos, f_rank = f_rec
        s_limit = f_pos + md
        s_node = queues.second.start
        while s_node is not None:
            _, s_pos, s_rank = s_node.rec
            s_node = s_node.next
            if s_pos > s_limit:
                break
            if s_pos == f_pos or s_rank < f_rank:
                continue
            t_node = queues.third.start
            while t_node is not None:
                _, t_pos, t_rank = t_node.rec
                t_node = t_node.next
                if t_pos > s_limit:
                    break
                if t_pos == f_pos or t_pos == s_pos or t_rank < s_rank:
                    continue
                if t_rank == s_rank and t_pos <= s_pos:
                    continue
                emit((f_rank, s_rank, t_rank), (doc, f_pos, s_pos - f_pos, t_pos - f_pos))
                emitted += 1

    queues.third.pop_start()
    if queues.second.start is not None and queues.second.start.rec == head_rec:
        queues.second.pop_start()
    if queues.first.start is not None and queues.first.start.rec == head_rec:
        queues.first.pop_start()
    return emitted


def flush_queues(
    queues: TripleQueues, task: GroupTask, cfg: BuildConfig, sink: dict
) -> int:
    """Drain the queues by repeated head extraction; all end up empty."""
    emitted = 0
    while queues.third.start is not None:
        emitted += extract_first(queues, task, cfg, sink)
    if queues.first.start is not None or queues.second.start is not None:
        raise AssertionError("role queues not empty after a full drain")
    return emitted


def _skipped(rank: int, task: GroupTask) -> bool:
    """A record no role can use: not an anchor, not a middle, too low for a tail."""
    return (
        not task.first.lo <= rank <= task.first.hi
        and not task.second.lo <= rank <= task.second.hi
        and rank < task.second.lo
    )


def process_group_optimized(
    records: Iterable[Occurrence],
    task: GroupTask,
    cfg: BuildConfig,
    sink: dict,
    instrument: bool = False,
) -> int:
    """One pass over the occurrence array with the three-queue algorithm.

    Returns the number of postings emitted into ``sink`` (a mapping from
    key triple to posting list). With ``instrument`` set, the window-span
    bound and the head-retirement containment property are asserted at
    every step; use it only on small inputs.
    """
    md = cfg.max_distance
    span_limit = 2 * md
    f_lo, f_hi = task.first
    s_lo, s_hi = task.second
    queues = TripleQueues()
    current_doc = -1
    emitted = 0
    watcher = _Instrumentation(task, cfg) if instrument else None

    for rec in records:
        doc, pos, rank = rec
        if doc != current_doc:
            if current_doc >= 0 and queues.third.start is not None:
                emitted += _flush_watched(queues, task, cfg, sink, watcher)
            current_doc = doc
            if watcher:
                watcher.new_document()
        if watcher:
            watcher.record_read(rec)
        in_first = f_lo <= rank <= f_hi
        in_second = s_lo <= rank <= s_hi
        if not in_first and not in_second and rank < s_lo:
            continue
        third = queues.third
        while third.start is not None and pos - third.start.rec.pos > span_limit:
            if watcher:
                watcher.check_containment(queues)
            emitted += extract_first(queues, task, cfg, sink)
        if in_first:
            queues.first.append(rec)
        if in_second:
            queues.second.append(rec)
        third.append(rec)
        if watcher:
            watcher.check_span(queues.third)
    if queues.third.start is not None:
        emitted += _flush_watched(queues, task, cfg, sink, watcher)
    return emitted


def _flush_watched(
    queues: TripleQueues,
    task: GroupTask,
    cfg: BuildConfig,
    sink: dict,
    watcher: "_Instrumentation | None",
) -> int:
    if watcher is None:
        return flush_queues(queues, task, cfg, sink)
    emitted = 0
    while queues.third.start is not None:
        watcher.check_containment(queues)
        emitted += extract_first(queues, task, cfg, sink)
    if queues.first.start is not None or queues.second.start is not None:
        raise AssertionError("role queues not empty after a full drain")
    return emitted


def process_group_simplified(
    records: Iterable[Occurrence],
    task: GroupTask,
    cfg: BuildConfig,
    sink: dict,
    instrument: bool = False,
) -> int:
    """One pass over the occurrence array with the single-queue algorithm.

    Every record enters the window queue; each element is expanded as an
    anchor exactly once, marked by its processed flag. Emits the same
    posting set as the optimized variant.
    """
    md = cfg.max_distance
    span_limit = 2 * md
    window = OccurrenceQueue()
    current_doc = -1
    emitted = 0

    for rec in records:
        doc, pos, rank = rec
        if doc != current_doc:
            while window.start is not None:
                emitted += _extract_simplified(window, task, cfg, sink)
            current_doc = doc
        while window.start is not None and pos - window.start.rec.pos > span_limit:
            emitted += _extract_simplified(window, task, cfg, sink)
        window.append(rec)
        if instrument and window.end.rec.pos - window.start.rec.pos > span_limit:
            raise AssertionError("window span bound violated")
    while window.start is not None:
        emitted += _extract_simplified(window, task, cfg, sink)
    return emitted


def _extract_simplified(
    window: OccurrenceQueue, task: GroupTask, cfg: BuildConfig, sink: dict
) -> int:
    md = cfg.max_distance
    f_lo, f_hi = task.first
    s_lo, s_hi = task.second
    head_pos = window.start.rec.pos
    bound = head_pos + md
    emit = _emit_into(sink)
    emitted = 0

    f_node = window.start
    while f_node is not None:
        doc, f_pos, f_rank = f_node.rec
        if f_pos > bound:
            break
        if not f_node.processed and f_lo <= f_rank <= f_hi:
            s_node = window.start
            while s_node is not None:
                _, s_pos, s_rank = s_node.rec
                s_node = s_node.next
                if s_pos > f_pos + md:
                    break
                if s_pos == f_pos or s_pos < f_pos - md:
                    continue
                if s_rank < f_rank or not s_lo <= s_rank <= s_hi:
                    continue
                t_node = window.start
                while t_node is not None:
                    _, t_pos, t_rank = t_node.rec
                    t_node = t_node.next
                    if t_pos > f_pos + md:
                        break
                    if t_pos == f_pos or t_pos == s_pos or t_pos < f_pos - md:
                        continue
                    if t_rank < s_rank:
                        continue
                    if t_rank == s_rank and t_pos <= s_pos:
                        continue
                    emit((f_rank, s_rank, t_rank), (doc, f_pos, s_pos - f_pos, t_pos - f_pos))
                    emitted += 1
            f_node.processed = True
        f_node = f_node.next
    window.pop_start()
    return emitted


def process_group(
    records: Iterable[Occurrence],
    task: GroupTask,
    cfg: BuildConfig,
    sink: dict,
    instrument: bool = False,
) -> int:
    if task.variant == SIMPLIFIED:
        return process_group_simplified(records, task, cfg, sink, instrument)
    if task.variant == OPTIMIZED:
        return process_group_optimized(records, task, cfg, sink, instrument)
    raise ValueError("unknown variant %r" % (task.variant,))


class _Instrumentation:
    """Debug-mode assertions for the optimized variant.

    Tracks the records read for the current document and verifies before
    each head retirement that no in-reach neighbor of an eligible anchor
    has been evicted early.
    """

    def __init__(self, task: GroupTask, cfg: BuildConfig):
        self.task = task
        self.md = cfg.max_distance
        self.doc_read: list[Occurrence] = []

    def new_document(self) -> None:
        self.doc_read = []

    def record_read(self, rec: Occurrence) -> None:
        self.doc_read.append(rec)

    def check_span(self, third: OccurrenceQueue) -> None:
        if third.end.rec.pos - third.start.rec.pos > 2 * self.md:
            raise AssertionError("window span bound violated")

    def check_containment(self, queues: TripleQueues) -> None:
        head = queues.third.start
        if head is None:
            return
        members = set(queues.third)
        bound = head.rec.pos + self.md
        node = queues.first.start
        while node is not None and node.rec.pos <= bound:
            f = node.rec
            for t in self.doc_read:
                if abs(t.pos - f.pos) <= self.md and not _skipped(t.rank, self.task):
                    if t not in members:
                        raise AssertionError(
                            "record %r missing from the window while anchor %r is live"
                            % (t, f)
                        )
            node = node.next


# Thread telemetry and scheduling.


@dataclass
class UtilizationLog:
    """Running-thread counts over time: one (count, seconds) record per change."""

    events: list[tuple[int, float]] = field(default_factory=list)

    def validate(self) -> None:
        prev = None
        for count, delta in self.events:
            if count < 0 or delta < 0:
                raise ValueError("negative count or delta in utilization log")
            if prev is not None and abs(count - prev) != 1:
                raise ValueError("thread count must change by exactly 1")
            prev = count


def utilization(log: UtilizationLog | Sequence[tuple[int, float]]) -> tuple[float, float]:
    """Occupancy relative to the peak thread count, and the share of time at peak."""
    events = log.events if isinstance(log, UtilizationLog) else list(log)
    if not events:
        raise ValueError("empty utilization log")
    total = sum(delta for _, delta in events)
    if total <= 0:
        raise ValueError("utilization log covers no time")
    peak = max(count for count, _ in events)
    if peak <= 0:
        raise ValueError("no thread ever ran")
    occupancy = sum(count * delta for count, delta in events) / (peak * total)
    peak_share = sum(delta for count, delta in events if count == peak) / total
    return min(occupancy, 1.0), min(peak_share, 1.0)


class ThreadTelemetry:
    """Collects the utilization log under a lock, one record per start/finish."""

    def __init__(self, clock: Callable[[], float] = time.monotonic):
        self._clock = clock
        self._lock = Lock()
        self._count = 0
        self._last = clock()
        self.log = UtilizationLog()

    def _change(self, delta: int) -> None:
        with self._lock:
            now = self._clock()
            self.log.events.append((self._count, now - self._last))
            self._count += delta
            self._last = now

    def started(self) -> None:
        self._change(+1)

    def finished(self) -> None:
        self._change(-1)


@dataclass
class FileStats:
    file_index: int
    wall_seconds: float
    postings: int


@dataclass
class IterationReport:
    """Outcome of one write stage over the whole layout."""

    log: UtilizationLog
    file_stats: list[FileStats]

    @property
    def postings(self) -> int:
        return sum(s.postings for s in self.file_stats)

    def utilization(self) -> tuple[float, float]:
        return utilization(self.log)


def _build_one_file(
    records: Sequence[Occurrence],
    layout_: Layout,
    file_index: int,
    cfg: BuildConfig,
    segment: "SegmentWriter",
    telemetry: ThreadTelemetry,
    variant: str,
) -> FileStats:
    telemetry.started()
    started = time.perf_counter()
    try:
        plan = layout_.files[file_index]
        writer = segment.file_writer(file_index)
        total = 0
        for group_index, group in enumerate(plan.groups):
            task = GroupTask(plan.first, group, variant)
            sink: dict = {}
            total += process_group(records, task, cfg, sink)
            writer.begin_group(group_index)
            for key in sorted(sink):
                postings = sink[key]
                for i in range(0, len(postings), APPEND_BATCH):
                    writer.append_postings(key, postings[i : i + APPEND_BATCH])
            writer.end_group()
        writer.close()
        return FileStats(file_index, time.perf_counter() - started, total)
    finally:
        telemetry.finished()


def build_iteration(
    array: OccurrenceArray,
    layout_: Layout,
    cfg: BuildConfig,
    store,
    variant: str = OPTIMIZED,
) -> IterationReport:
    """Write one occurrence array into a fresh store segment.

    Index files are built phase by phase; inside a phase one worker runs
    per file, at most ``cfg.thread_limit`` at a time, started in layout
    order with the next file beginning as soon as a running one finishes.
    Between phases the occurrence array is pruned of ranks that no later
    file can use. A failed worker aborts the whole segment.
    """
    file_count = len(layout_.files)
    phases = cfg.phases or (file_count,)
    if sum(phases) != file_count:
        raise ValueError(
            "phases %r do not cover %d index files" % (phases, file_count)
        )
    segment = store.begin_segment()
    telemetry = ThreadTelemetry()
    stats: list[FileStats] = []
    current = array
    try:
        next_file = 0
        for phase_size in phases:
            phase_files = range(next_file, next_file + phase_size)
            with ThreadPoolExecutor(max_workers=cfg.thread_limit) as pool:
                futures = [
                    pool.submit(
                        _build_one_file,
                        current.records,
                        layout_,
                        i,
                        cfg,
                        segment,
                        telemetry,
                        variant,
                    )
                    for i in phase_files
                ]
                for future in futures:
                    stats.append(future.result())
            next_file += phase_size
            if next_file < file_count:
                completed_rank = layout_.files[next_file - 1].first.hi
                current = prune_occurrences(current, completed_rank)
                current.check_ordered()
    except BaseException:
        segment.abort()
        raise
    segment.seal()
    return IterationReport(telemetry.log, stats)
