"""Segmented on-disk storage of triple-key posting lists.

A store directory holds immutable segments, one per indexing iteration;
each segment has one part file per layout index file. A part file is a
fixed header, the group sections (key directory plus posting blocks), a
group offset table, and a trailing 8-byte pointer to that table. All
integers outside the fixed header are little-endian varints. Readers merge
segments at lookup time.
"""

from __future__ import annotations

import json
import mmap
import os
import shutil
import struct
import tempfile
from dataclasses import dataclass
from heapq import merge as heap_merge
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

from .codec import TruncatedData, read_uvarint, unzigzag, write_uvarint, zigzag
from .ingest import DocumentRegistry
from .layout import Layout, TripleKey, layout_fingerprint, load_layout, route, save_layout
from .lexicon import BuildConfig, FrequencyList

PART_MAGIC = b"TKIX"
FORMAT_VERSION = 1
PLAIN_CODEC = 0

META_NAME = "store.json"
LAYOUT_NAME = "layout.txt"
LEXICON_NAME = "lexicon.tsv"
REGISTRY_NAME = "registry.tsv"
DICTIONARY_NAME = "dictionary.tsv"
SEGMENTS_DIR = "segments"

_HEADER = struct.Struct("<4sBBHI8sHH")  # magic, version, codec, md, ws, layout sha, file, groups


class StoreError(Exception):
    """The store is malformed, mismatched, or was driven out of contract."""


class CorruptBlockError(StoreError):
    """A posting block failed to decode; names the segment, file, and key."""


class TriplePosting(NamedTuple):
    """One anchored co-occurrence: document, anchor position, signed offsets."""

    doc: int
    pos: int
    d1: int
    d2: int


def resolve_positions(key: TripleKey, posting: TriplePosting) -> tuple[int, int, int]:
    """Word positions of the key's three components, in key order."""
    return posting.pos, posting.pos + posting.d1, posting.pos + posting.d2


def check_posting(posting: Sequence[int], max_distance: int) -> None:
    doc, pos, d1, d2 = posting
    if doc < 0 or pos < 0:
        raise StoreError("posting %r has a negative document or position" % (posting,))
    if not 1 <= abs(d1) <= max_distance or not 1 <= abs(d2) <= max_distance:
        raise StoreError(
            "posting %r offsets out of range 1..%d" % (posting, max_distance)
        )
    if d1 == d2:
        raise StoreError("posting %r repeats one companion position" % (posting,))


def encode_posting_block(postings: Sequence[Sequence[int]]) -> bytes:
    """Encode sorted postings: doc deltas, positions (absolute on a new doc,
    else deltas), zigzagged offsets."""
    out = bytearray()
    out.append(PLAIN_CODEC)
    write_uvarint(out, len(postings))
    prev_doc = 0
    prev_pos = 0
    for doc, pos, d1, d2 in postings:
        delta = doc - prev_doc
        write_uvarint(out, delta)
        if delta:
            write_uvarint(out, pos)
        else:
            write_uvarint(out, pos - prev_pos)
        write_uvarint(out, zigzag(d1))
        write_uvarint(out, zigzag(d2))
        prev_doc, prev_pos = doc, pos
    return bytes(out)


def decode_posting_block(data: bytes) -> list[TriplePosting]:
    try:
        if not data:
            raise TruncatedData("empty block")
        if data[0] != PLAIN_CODEC:
            raise StoreError("unknown posting block codec %d" % data[0])
        count, at = read_uvarint(data, 1)
        postings = []
        doc = 0
        pos = 0
        for _ in range(count):
            delta, at = read_uvarint(data, at)
            if delta:
                doc += delta
                pos, at = read_uvarint(data, at)
            else:
                step, at = read_uvarint(data, at)
                pos += step
            z1, at = read_uvarint(data, at)
            z2, at = read_uvarint(data, at)
            postings.append(TriplePosting(doc, pos, unzigzag(z1), unzigzag(z2)))
        if at != len(data):
            raise StoreError("posting block has %d trailing bytes" % (len(data) - at))
        return postings
    except TruncatedData as exc:
        raise StoreError("truncated posting block: %s" % exc) from exc


class PartWriter:
    """Writes one index file of one segment: header, sections, group table."""

    def __init__(
        self,
        path: Path,
        file_index: int,
        layout_: Layout,
        cfg: BuildConfig,
        fingerprint: bytes,
    ):
        self._plan = layout_.files[file_index]
        self._cfg = cfg
        self._file = open(path, "wb")
        self._file.write(
            _HEADER.pack(
                PART_MAGIC,
                FORMAT_VERSION,
                PLAIN_CODEC,
                cfg.max_distance,
                cfg.ws_count,
                fingerprint,
                file_index,
                len(self._plan.groups),
            )
        )
        self._offset = _HEADER.size
        self._sections: list[tuple[int, int]] = []
        self._group_index: int | None = None
        self._pending: dict[TripleKey, list] = {}
        self._closed = False

    def begin_group(self, group_index: int) -> None:
        if self._group_index is not None:
            raise StoreError("previous group still open")
        if group_index != len(self._sections):
            raise StoreError(
                "groups must be written in order; got %d, expected %d"
                % (group_index, len(self._sections))
            )
        self._group_index = group_index
        self._pending = {}

    def append_postings(self, key: Sequence[int], postings: Sequence[Sequence[int]]) -> None:
        """Buffer sorted postings for one canonical key of the open group."""
        if self._group_index is None:
            raise StoreError("no group open")
        a, b, c = key
        if not a <= b <= c or c >= self._cfg.ws_count:
            raise StoreError("key %r is not canonical" % (key,))
        group = self._plan.groups[self._group_index]
        if not (self._plan.first.lo <= a <= self._plan.first.hi and group.lo <= b <= group.hi):
            raise StoreError("key %r does not belong to this file/group" % (key,))
        bucket = self._pending.setdefault(TripleKey(a, b, c), [])
        prev = bucket[-1] if bucket else None
        for posting in postings:
            check_posting(posting, self._cfg.max_distance)
            if prev is not None and tuple(posting) <= tuple(prev):
                raise StoreError(
                    "postings for key %r appended out of order" % (key,)
                )
            bucket.append(TriplePosting(*posting))
            prev = posting

    def end_group(self) -> None:
        if self._group_index is None:
            raise StoreError("no group open")
        group = self._plan.groups[self._group_index]
        directory = bytearray()
        blocks = bytearray()
        write_uvarint(directory, group.lo)
        write_uvarint(directory, group.hi)
        write_uvarint(directory, len(self._pending))
        for key in sorted(self._pending):
            block = encode_posting_block(self._pending[key])
            write_uvarint(directory, key.a)
            write_uvarint(directory, key.b)
            write_uvarint(directory, key.c)
            write_uvarint(directory, len(blocks))
            write_uvarint(directory, len(block))
            write_uvarint(directory, len(self._pending[key]))
            blocks.extend(block)
        section = bytes(directory) + bytes(blocks)
        self._file.write(section)
        self._sections.append((self._offset, len(section)))
        self._offset += len(section)
        self._group_index = None
        self._pending = {}

    def close(self) -> None:
        if self._closed:
            return
        if self._group_index is not None:
            raise StoreError("group %d left open" % self._group_index)
        if len(self._sections) != len(self._plan.groups):
            raise StoreError(
                "wrote %d groups, layout defines %d"
                % (len(self._sections), len(self._plan.groups))
            )
        table_offset = self._offset
        table = bytearray()
        for offset, length in self._sections:
            table.extend(struct.pack("<QQ", offset, length))
        table.extend(struct.pack("<Q", table_offset))
        self._file.write(table)
        self._file.close()
        self._closed = True


class PartReader:
    """Random access into one part file; directories are parsed lazily."""

    def __init__(self, path: Path, meta: "StoreMeta"):
        self.path = path
        self._handle = open(path, "rb")
        try:
            data = mmap.mmap(self._handle.fileno(), 0, access=mmap.ACCESS_READ)
        except ValueError as exc:
            raise StoreError("part file %s is unreadable: %s" % (path, exc)) from exc
        if len(data) < _HEADER.size + 8:
            raise StoreError("part file %s is too short" % path)
        (magic, version, _codec, md, ws, sha, file_index, group_count) = _HEADER.unpack_from(data)
        if magic != PART_MAGIC:
            raise StoreError("part file %s has a bad magic" % path)
        if version != FORMAT_VERSION:
            raise StoreError("part file %s has format version %d" % (path, version))
        if md != meta.max_distance or ws != meta.ws_count or sha != meta.fingerprint:
            raise StoreError(
                "part file %s does not match the store configuration" % path
            )
        self._data = data
        self.file_index = file_index
        (table_offset,) = struct.unpack_from("<Q", data, len(data) - 8)
        if table_offset + 16 * group_count + 8 != len(data):
            raise StoreError("part file %s is truncated or overgrown" % path)
        self._sections = [
            struct.unpack_from("<QQ", data, table_offset + 16 * i)
            for i in range(group_count)
        ]
        for offset, length in self._sections:
            if offset + length > table_offset:
                raise StoreError("part file %s has an overrunning section" % path)
        self._directories: dict[int, tuple[dict[TripleKey, tuple[int, int, int]], int]] = {}

    def _directory(self, group_index: int) -> tuple[dict[TripleKey, tuple[int, int, int]], int]:
        cached = self._directories.get(group_index)
        if cached is not None:
            return cached
        offset, length = self._sections[group_index]
        data = self._data
        at = offset
        _lo, at = read_uvarint(data, at)
        _hi, at = read_uvarint(data, at)
        count, at = read_uvarint(data, at)
        entries: dict[TripleKey, tuple[int, int, int]] = {}
        for _ in range(count):
            a, at = read_uvarint(data, at)
            b, at = read_uvarint(data, at)
            c, at = read_uvarint(data, at)
            block_offset, at = read_uvarint(data, at)
            block_length, at = read_uvarint(data, at)
            postings, at = read_uvarint(data, at)
            entries[TripleKey(a, b, c)] = (block_offset, block_length, postings)
        blocks_base = at
        if blocks_base > offset + length:
            raise StoreError("directory overruns its section in %s" % self.path)
        self._directories[group_index] = (entries, blocks_base)
        return entries, blocks_base

    def get(self, group_index: int, key: TripleKey) -> list[TriplePosting] | None:
        entries, base = self._directory(group_index)
        entry = entries.get(key)
        if entry is None:
            return None
        block_offset, block_length, count = entry
        block = self._data[base + block_offset : base + block_offset + block_length]
        postings = decode_posting_block(block)
        if len(postings) != count:
            raise StoreError(
                "block for key %r holds %d postings, directory says %d"
                % (key, len(postings), count)
            )
        return postings

    def keys(self, group_index: int) -> Iterator[TripleKey]:
        entries, _ = self._directory(group_index)
        return iter(entries)

    def group_stats(self, group_index: int) -> tuple[int, int, int]:
        """(key count, posting count, block bytes) of one group."""
        entries, _ = self._directory(group_index)
        postings = sum(count for _, _, count in entries.values())
        block_bytes = sum(length for _, length, _ in entries.values())
        return len(entries), postings, block_bytes

    @property
    def group_count(self) -> int:
        return len(self._sections)

    def close(self) -> None:
        self._data.close()
        self._handle.close()


@dataclass(frozen=True)
class StoreMeta:
    max_distance: int
    ws_count: int
    fu_count: int
    fingerprint: bytes

    def to_json(self) -> dict:
        return {
            "format": "trikey-index",
            "version": FORMAT_VERSION,
            "max_distance": self.max_distance,
            "ws_count": self.ws_count,
            "fu_count": self.fu_count,
            "layout_sha": self.fingerprint.hex(),
        }

    @classmethod
    def from_json(cls, raw: dict) -> "StoreMeta":
        if raw.get("format") != "trikey-index":
            raise StoreError("not a trikey index directory")
        if raw.get("version") != FORMAT_VERSION:
            raise StoreError("unsupported index format version %r" % raw.get("version"))
        return cls(
            max_distance=int(raw["max_distance"]),
            ws_count=int(raw["ws_count"]),
            fu_count=int(raw["fu_count"]),
            fingerprint=bytes.fromhex(raw["layout_sha"]),
        )


class SegmentWriter:
    """One in-progress segment; invisible to readers until sealed."""

    def __init__(self, store: "IndexStore"):
        self._store = store
        segments = store.path / SEGMENTS_DIR
        segments.mkdir(exist_ok=True)
        self._dir = Path(tempfile.mkdtemp(prefix=".tmp-", dir=segments))
        self._writers: dict[int, PartWriter] = {}
        self._done = False

    def file_writer(self, file_index: int) -> PartWriter:
        if file_index in self._writers:
            raise StoreError("file %d already has a writer" % file_index)
        writer = PartWriter(
            self._dir / ("part-%03d.bin" % file_index),
            file_index,
            self._store.layout,
            self._store.cfg,
            self._store.meta.fingerprint,
        )
        self._writers[file_index] = writer
        return writer

    def seal(self) -> str:
        if self._done:
            raise StoreError("segment already sealed or aborted")
        expected = set(range(len(self._store.layout.files)))
        if set(self._writers) != expected:
            raise StoreError(
                "segment is missing part files %s" % sorted(expected - set(self._writers))
            )
        for index, writer in self._writers.items():
            if not writer._closed:
                raise StoreError("part writer %d was never closed" % index)
        name = "seg-%06d" % self._store.next_segment_ordinal()
        os.rename(self._dir, self._dir.parent / name)
        self._done = True
        self._store._drop_reader_cache()
        return name

    def abort(self) -> None:
        if self._done:
            return
        shutil.rmtree(self._dir, ignore_errors=True)
        self._done = True


@dataclass
class FileReport:
    file_index: int
    keys: int
    postings: int
    block_bytes: int
    file_bytes: int


@dataclass
class StoreStats:
    files: list[FileReport]

    @property
    def total_postings(self) -> int:
        return sum(f.postings for f in self.files)

    @property
    def total_bytes(self) -> int:
        return sum(f.file_bytes for f in self.files)

    @property
    def total_keys(self) -> int:
        return sum(f.keys for f in self.files)


class IndexStore:
    """A store directory: metadata, layout, and sealed segments."""

    def __init__(self, path: Path, meta: StoreMeta, layout_: Layout, cfg: BuildConfig):
        self.path = path
        self.meta = meta
        self.layout = layout_
        self.cfg = cfg
        self._readers: dict[tuple[str, int], PartReader] = {}

    @classmethod
    def create(
        cls,
        path: str | Path,
        cfg: BuildConfig,
        layout_: Layout,
        freq: FrequencyList,
    ) -> "IndexStore":
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        if (path / META_NAME).exists():
            raise StoreError("index directory %s already holds a store" % path)
        if layout_.ws_count != cfg.ws_count:
            raise StoreError("layout covers %d lemmas, config says %d" % (layout_.ws_count, cfg.ws_count))
        meta = StoreMeta(cfg.max_distance, cfg.ws_count, cfg.fu_count, layout_fingerprint(layout_))
        save_layout(layout_, path / LAYOUT_NAME)
        freq.save(path / LEXICON_NAME)
        (path / META_NAME).write_text(
            json.dumps(meta.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        (path / SEGMENTS_DIR).mkdir(exist_ok=True)
        return cls(path, meta, layout_, cls._config_from_meta(meta))

    @classmethod
    def open(cls, path: str | Path) -> "IndexStore":
        path = Path(path)
        meta_path = path / META_NAME
        if not meta_path.exists():
            raise StoreError("%s is not an index directory" % path)
        meta = StoreMeta.from_json(json.loads(meta_path.read_text(encoding="utf-8")))
        layout_ = load_layout(path / LAYOUT_NAME, meta.ws_count)
        if layout_fingerprint(layout_) != meta.fingerprint:
            raise StoreError("layout file does not match the store fingerprint")
        return cls(path, meta, layout_, cls._config_from_meta(meta))

    @staticmethod
    def _config_from_meta(meta: StoreMeta) -> BuildConfig:
        return BuildConfig(
            ws_count=meta.ws_count,
            fu_count=meta.fu_count,
            max_distance=meta.max_distance,
        )

    def check_compatible(self, cfg: BuildConfig, layout_: Layout) -> None:
        """Reject appending under a different distance bound or layout."""
        if cfg.max_distance != self.meta.max_distance:
            raise StoreError(
                "store was built with max_distance %d, not %d"
                % (self.meta.max_distance, cfg.max_distance)
            )
        if cfg.ws_count != self.meta.ws_count:
            raise StoreError(
                "store was built with ws_count %d, not %d"
                % (self.meta.ws_count, cfg.ws_count)
            )
        if layout_fingerprint(layout_) != self.meta.fingerprint:
            raise StoreError("layout does not match the one this store was built with")

    # segments

    def segment_names(self) -> list[str]:
        segments = self.path / SEGMENTS_DIR
        if not segments.exists():
            return []
        return sorted(p.name for p in segments.iterdir() if p.name.startswith("seg-"))

    def next_segment_ordinal(self) -> int:
        names = self.segment_names()
        return int(names[-1][4:]) + 1 if names else 0

    def begin_segment(self) -> SegmentWriter:
        return SegmentWriter(self)

    def _reader(self, segment: str, file_index: int) -> PartReader:
        cached = self._readers.get((segment, file_index))
        if cached is None:
            path = self.path / SEGMENTS_DIR / segment / ("part-%03d.bin" % file_index)
            cached = PartReader(path, self.meta)
            self._readers[(segment, file_index)] = cached
        return cached

    def _drop_reader_cache(self) -> None:
        for reader in self._readers.values():
            reader.close()
        self._readers = {}

    def close(self) -> None:
        self._drop_reader_cache()

    # lookups

    def get_postings(self, key: Sequence[int]) -> list[TriplePosting]:
        """Postings for a canonical key, merged over all segments."""
        a, b, c = key
        key = TripleKey(a, b, c)
        if not a <= b <= c or c >= self.meta.ws_count:
            raise StoreError("key %r is not canonical" % (key,))
        file_index, group_index = route(key, self.layout)
        lists = []
        for segment in self.segment_names():
            try:
                part = self._reader(segment, file_index)
                postings = part.get(group_index, key)
            except StoreError as exc:
                raise CorruptBlockError(
                    "segment %s, file %d, key %r: %s" % (segment, file_index, key, exc)
                ) from exc
            if postings:
                lists.append(postings)
        if not lists:
            return []
        if len(lists) == 1:
            return lists[0]
        return list(heap_merge(*lists))

    def iter_keys(self) -> Iterator[TripleKey]:
        """All distinct keys, in (file, group, key) order."""
        for file_index in range(len(self.layout.files)):
            for group_index in range(len(self.layout.files[file_index].groups)):
                seen: set[TripleKey] = set()
                for segment in self.segment_names():
                    part = self._reader(segment, file_index)
                    seen.update(part.keys(group_index))
                yield from sorted(seen)

    def iter_items(self) -> Iterator[tuple[TripleKey, list[TriplePosting]]]:
        for key in self.iter_keys():
            yield key, self.get_postings(key)

    def logical_dump(self) -> dict[TripleKey, tuple[TriplePosting, ...]]:
        """Whole-store content as a comparable mapping; small stores only."""
        return {key: tuple(postings) for key, postings in self.iter_items()}

    def stats(self) -> StoreStats:
        reports = []
        for file_index in range(len(self.layout.files)):
            keys: set[TripleKey] = set()
            postings = 0
            block_bytes = 0
            file_bytes = 0
            for segment in self.segment_names():
                part = self._reader(segment, file_index)
                file_bytes += part.path.stat().st_size
                for group_index in range(part.group_count):
                    k, p, b = part.group_stats(group_index)
                    postings += p
                    block_bytes += b
                    keys.update(part.keys(group_index))
            reports.append(FileReport(file_index, len(keys), postings, block_bytes, file_bytes))
        return StoreStats(reports)

    def compact(self) -> str | None:
        """Merge all sealed segments into one; a no-op below two segments.

        Readers see either the old segment set or the merged one; the merge
        itself runs offline, not under concurrent writes.
        """
        old = self.segment_names()
        if len(old) < 2:
            return None
        segment = self.begin_segment()
        try:
            for file_index, plan in enumerate(self.layout.files):
                writer = segment.file_writer(file_index)
                for group_index in range(len(plan.groups)):
                    keys: set[TripleKey] = set()
                    for name in old:
                        keys.update(self._reader(name, file_index).keys(group_index))
                    writer.begin_group(group_index)
                    for key in sorted(keys):
                        writer.append_postings(key, self.get_postings(key))
                    writer.end_group()
                writer.close()
        except BaseException:
            segment.abort()
            raise
        name = segment.seal()
        self._drop_reader_cache()
        for stale in old:
            shutil.rmtree(self.path / SEGMENTS_DIR / stale)
        return name

    # companion artifacts

    def load_lexicon(self) -> FrequencyList:
        return FrequencyList.load(self.path / LEXICON_NAME)

    def load_registry(self) -> DocumentRegistry:
        reg_path = self.path / REGISTRY_NAME
        return DocumentRegistry.load(reg_path) if reg_path.exists() else DocumentRegistry()

    def save_registry(self, registry: DocumentRegistry) -> None:
        registry.save(self.path / REGISTRY_NAME)
